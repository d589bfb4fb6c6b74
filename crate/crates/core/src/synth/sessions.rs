use std::net::{IpAddr, Ipv4Addr, Ipv6Addr};

use chrono::{DateTime, Duration, Utc};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};

use super::{
    rng_for, round3, sample_in_range, Cause, Expectation, GeneratorSpec, Label, SnoProfile, TERRESTRIAL_RANGE_MS,
};
use crate::catalog::{band_of, Orbit};
use crate::ingest::{Asn, Direction, SpeedTestSession, TcpSnapshot};

/// First octets handed out to profiles and noise sources, skipping private,
/// loopback, CGN and documentation space.
fn first_octet(i: usize) -> u8 {
    (11u8..=223)
        .filter(|o| ![100, 127, 169, 172, 192, 198, 203].contains(o))
        .nth(i)
        .expect("validated profile count")
}

fn v4(octet: u8, prefix_idx: usize, host: usize) -> IpAddr {
    IpAddr::V4(Ipv4Addr::new(
        octet,
        (prefix_idx / 256) as u8,
        (prefix_idx % 256) as u8,
        host as u8,
    ))
}

pub(crate) fn slug(name: &str) -> String {
    name.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() {
                c.to_ascii_lowercase()
            } else {
                '-'
            }
        })
        .collect()
}

/// Shape of one session's transport snapshots.
pub(crate) struct SessionShape {
    pub latency_ms: f64,
    pub jitter_ratio: f64,
    pub retrans_median: f64,
}

/// Snapshots whose 5th-percentile RTT is exactly `latency_ms`: the two
/// smallest RTTs equal it, so interpolation at rank `0.05 * (n - 1) < 1`
/// lands on it. Likewise the two largest RTT variations pin the 95th
/// percentile.
pub(crate) fn gen_snapshots(rng: &mut ChaCha8Rng, shape: &SessionShape, n: usize) -> Vec<TcpSnapshot> {
    let wobble = LogNormal::new(0.0, 0.15).expect("valid");
    let l = shape.latency_ms;
    let j = round3(l * shape.jitter_ratio * wobble.sample(rng)).max(0.001);
    let mut rtts = vec![l, l];
    rtts.extend((2..n).map(|_| round3(l * (1.0 + rng.random_range(0.005..0.25)))));
    rtts.shuffle(rng);
    let mut vars = vec![j, j];
    vars.extend((2..n).map(|_| round3(j * rng.random_range(0.2..0.95))));
    vars.shuffle(rng);

    let r = (shape.retrans_median * LogNormal::new(0.0, 0.35).expect("valid").sample(rng)).min(0.5);
    let total: u64 = rng.random_range(2_000_000..40_000_000);
    let retrans = (total as f64 * r).round() as u64;
    let rate = total as f64 * 8.0 / (n as f64 * 0.25);
    (0..n)
        .map(|i| {
            let k = i as u64 + 1;
            TcpSnapshot {
                t_offset_ms: (i * 250) as f64 + rng.random_range(0..50) as f64,
                rtt_ms: rtts[i],
                rtt_var_ms: vars[i],
                bytes_sent: total * k / n as u64,
                bytes_retrans: retrans * k / n as u64,
                delivery_rate_bps: Some((rate * rng.random_range(0.8..1.2)).round()),
            }
        })
        .collect()
}

fn timestamp(rng: &mut ChaCha8Rng, spec: &GeneratorSpec) -> DateTime<Utc> {
    spec.start + Duration::seconds(rng.random_range(0..i64::from(spec.days) * 86_400))
}

enum Kind {
    Satellite(f64),
    Backup(f64),
}

fn gen_profile(spec: &GeneratorSpec, idx: usize, p: &SnoProfile) -> Vec<(SpeedTestSession, Label)> {
    let mut rng = rng_for(spec.seed, 1 + idx as u64);
    let n_backup = p.n_backup();
    let n_sat = p.n_sessions - n_backup;
    let plan = &p.prefix_plan;
    let clean_cap = plan.clean_prefixes * plan.sessions_per_clean_prefix;
    let high_orbit = p.orbit_mix.iter().any(|w| w.orbit != Orbit::Leo);
    // Without clean prefixes the relaxed threshold falls back to the floor.
    let floor = if high_orbit && plan.clean_prefixes == 0 {
        spec.relaxed_floor_ms
    } else {
        0.0
    };

    let mut cum = Vec::with_capacity(p.orbit_mix.len());
    let mut acc = 0.0;
    for w in &p.orbit_mix {
        acc += w.weight;
        cum.push(acc);
    }
    let mut sat: Vec<f64> = (0..n_sat)
        .map(|_| {
            let u: f64 = rng.random();
            let k = cum.iter().position(|&c| u < c).unwrap_or(cum.len() - 1);
            let w = &p.orbit_mix[k];
            let band = band_of(w.orbit);
            let lo = if w.orbit == Orbit::Leo {
                band.min_ms
            } else {
                band.min_ms.max(floor)
            };
            sample_in_range(&mut rng, w.median_ms, w.spread_ms, lo, band.max_ms)
        })
        .collect();
    if high_orbit && clean_cap > 0 {
        // The operator's lowest satellite latency sits in a clean prefix, so
        // the relaxed threshold admits every satellite session.
        let k = (0..sat.len())
            .min_by(|&a, &b| sat[a].total_cmp(&sat[b]))
            .expect("clean_cap <= n_sat");
        sat.swap(0, k);
    }
    let backups: Vec<f64> = (0..n_backup)
        .map(|_| {
            let m = spec.backup_median_ms;
            sample_in_range(&mut rng, m, m / 3.0, TERRESTRIAL_RANGE_MS.0, TERRESTRIAL_RANGE_MS.1)
        })
        .collect();

    let octet = first_octet(idx);
    let v6_start = n_sat - p.ipv6_sessions;
    let mut out = Vec::with_capacity(p.n_sessions);
    let mut pool: Vec<(usize, Kind)> = Vec::new();
    for (j, &l) in sat.iter().enumerate() {
        if j < clean_cap {
            let ip = v4(
                octet,
                j / plan.sessions_per_clean_prefix,
                j % plan.sessions_per_clean_prefix + 1,
            );
            out.push((j, ip, Kind::Satellite(l)));
        } else if j >= v6_start {
            let ip = IpAddr::V6(Ipv6Addr::new(
                0x2001,
                0xdb8,
                idx as u16,
                0,
                0,
                0,
                (j >> 16) as u16,
                j as u16,
            ));
            out.push((j, ip, Kind::Satellite(l)));
        } else {
            pool.push((j, Kind::Satellite(l)));
        }
    }
    pool.extend(
        backups
            .into_iter()
            .enumerate()
            .map(|(k, l)| (n_sat + k, Kind::Backup(l))),
    );
    pool.shuffle(&mut rng);
    for (k, (j, kind)) in pool.into_iter().enumerate() {
        let prefix = plan.clean_prefixes + k % plan.scatter_prefixes;
        let host = (k / plan.scatter_prefixes) % 254 + 1;
        out.push((j, v4(octet, prefix, host), kind));
    }
    out.sort_by_key(|(j, _, _)| *j);

    let name = slug(&p.sno);
    out.into_iter()
        .map(|(j, ip, kind)| {
            let (latency_ms, jitter_ratio, retrans_median, expected, cause) = match kind {
                Kind::Satellite(l) => (
                    l,
                    p.jitter_ratio,
                    p.retrans_median(),
                    Expectation::Accept,
                    Cause::Satellite,
                ),
                Kind::Backup(l) => (l, 0.3, 0.005, Expectation::Reject, Cause::BackupLink),
            };
            let session_id = format!("{name}-{j:06}");
            let shape = SessionShape {
                latency_ms,
                jitter_ratio,
                retrans_median,
            };
            let session = SpeedTestSession {
                session_id: session_id.clone(),
                timestamp: timestamp(&mut rng, spec),
                client_ip: ip,
                client_asn: p.asns[j % p.asns.len()],
                direction: Direction::Download,
                snapshots: gen_snapshots(&mut rng, &shape, spec.snapshots_per_session),
            };
            let label = Label {
                session_id,
                sno: Some(p.sno.clone()),
                expected,
                cause,
            };
            (session, label)
        })
        .collect()
}

fn gen_noise(spec: &GeneratorSpec) -> Vec<(SpeedTestSession, Label)> {
    let mut out = Vec::new();
    for (k, n) in spec.noise.iter().enumerate() {
        let mut rng = rng_for(spec.seed, 10_000 + k as u64);
        let octet = first_octet(spec.sno_profiles.len() + k);
        let prefixes = (n.n_sessions / 5).max(1);
        for j in 0..n.n_sessions {
            let latency_ms = sample_in_range(
                &mut rng,
                n.median_ms,
                n.spread_ms,
                TERRESTRIAL_RANGE_MS.0,
                TERRESTRIAL_RANGE_MS.1,
            );
            let shape = SessionShape {
                latency_ms,
                jitter_ratio: 0.3,
                retrans_median: 0.005,
            };
            let session_id = format!("noise{k}-{j:06}");
            let asn: Asn = n.asns[j % n.asns.len()];
            let session = SpeedTestSession {
                session_id: session_id.clone(),
                timestamp: timestamp(&mut rng, spec),
                client_ip: v4(octet, j % prefixes, (j / prefixes) % 254 + 1),
                client_asn: asn,
                direction: Direction::Download,
                snapshots: gen_snapshots(&mut rng, &shape, spec.snapshots_per_session),
            };
            out.push((
                session,
                Label {
                    session_id,
                    sno: n.sno.clone(),
                    expected: Expectation::Reject,
                    cause: Cause::Terrestrial,
                },
            ));
        }
    }
    out
}

pub(crate) fn gen_sessions(spec: &GeneratorSpec) -> (Vec<SpeedTestSession>, Vec<Label>) {
    let mut all: Vec<(SpeedTestSession, Label)> = spec
        .sno_profiles
        .iter()
        .enumerate()
        .flat_map(|(i, p)| gen_profile(spec, i, p))
        .collect();
    all.extend(gen_noise(spec));
    let (mut sessions, mut labels): (Vec<_>, Vec<_>) = all.into_iter().unzip();
    sessions.sort_by(|a, b| {
        a.timestamp
            .cmp(&b.timestamp)
            .then_with(|| a.session_id.cmp(&b.session_id))
    });
    labels.sort_by(|a, b| a.session_id.cmp(&b.session_id));
    (sessions, labels)
}

/// Starlink-like sessions whose daily median access latency alternates
/// between `median_ms` and `median_ms * (1 + variation)`, so every
/// day-over-day change is `variation` of the series median. Each day holds
/// an odd number of sessions centred exactly on that day's target.
pub fn gen_daily_series(
    median_ms: f64,
    variation: f64,
    days: u32,
    per_day: usize,
    start: DateTime<Utc>,
    seed: u64,
) -> Vec<SpeedTestSession> {
    let mut rng = rng_for(seed, 0);
    let per_day = per_day | 1;
    let half = (per_day / 2) as f64;
    let step = 0.02 * median_ms / per_day as f64;
    let mut out = Vec::with_capacity(days as usize * per_day);
    for d in 0..days {
        let target = round3(median_ms * (1.0 + variation * f64::from(d % 2)));
        for k in 0..per_day {
            let latency_ms = if k as f64 == half {
                target
            } else {
                round3(target + (k as f64 - half) * step)
            };
            let shape = SessionShape {
                latency_ms,
                jitter_ratio: 0.5,
                retrans_median: 0.012,
            };
            let n = out.len();
            out.push(SpeedTestSession {
                session_id: format!("daily-{d:04}-{k:04}"),
                timestamp: start + Duration::days(i64::from(d)) + Duration::seconds((k * 86_399 / per_day) as i64),
                client_ip: IpAddr::V4(Ipv4Addr::new(98, 97, (n / 254 % 256) as u8, (n % 254 + 1) as u8)),
                client_asn: 14593,
                direction: Direction::Download,
                snapshots: gen_snapshots(&mut rng, &shape, 10),
            });
        }
    }
    out
}
