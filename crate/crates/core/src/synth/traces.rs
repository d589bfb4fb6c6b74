use std::net::{IpAddr, Ipv4Addr};

use chrono::Duration;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{rng_for, round3, GeneratorSpec, TraceroutePlan, TracerouteTarget};
use crate::ingest::{Hop, Reply, ReplyAddr, TracerouteMeasurement};
use crate::starlink::CGN_GATEWAY;

const HOME_ROUTER: IpAddr = IpAddr::V4(Ipv4Addr::new(192, 168, 1, 1));

/// Public address the probe holds while served by schedule segment `seg`.
fn public_ip(plan_idx: usize, seg: usize) -> IpAddr {
    IpAddr::V4(Ipv4Addr::new(98, 97, plan_idx as u8, seg as u8 + 1))
}

pub(crate) fn pop_hostname(pop: &str) -> String {
    format!("customer.{pop}.pop.starlinkisp.net")
}

fn replies(rng: &mut ChaCha8Rng, ip: IpAddr, center: f64, sd: f64, n: usize) -> Vec<Reply> {
    let d = Normal::new(center, sd.max(1e-9)).expect("finite");
    (0..n)
        .map(|_| Reply {
            ip: ReplyAddr::Ip(ip),
            rtt_ms: Some(round3(d.sample(rng).max(0.1))),
        })
        .collect()
}

fn measurement(
    rng: &mut ChaCha8Rng,
    plan: &TraceroutePlan,
    plan_idx: usize,
    i: usize,
    targets: &[TracerouteTarget],
) -> TracerouteMeasurement {
    let at = plan.start + Duration::milliseconds((plan.interval_hours * 3_600_000.0 * i as f64).round() as i64);
    let seg = plan
        .schedule
        .iter()
        .rposition(|s| s.from <= at)
        .expect("validated schedule covers start");
    let pop_rtt = plan.schedule[seg].rtt_ms;
    let target = &targets[i % targets.len()];
    let jitter = plan.jitter_ms;

    let mut hops = vec![
        Hop {
            hop_no: 1,
            replies: replies(rng, HOME_ROUTER, 0.6, 0.1, 3),
        },
        Hop {
            hop_no: 2,
            replies: replies(rng, CGN_GATEWAY, pop_rtt, jitter, 3),
        },
    ];
    for h in 3..target.hops {
        let router = IpAddr::V4(Ipv4Addr::new(206, 224, h as u8, plan_idx as u8));
        let replies = if rng.random_bool(0.1) {
            vec![
                Reply {
                    ip: ReplyAddr::Unresponsive,
                    rtt_ms: None
                };
                3
            ]
        } else {
            // Each hop past the gateway adds a couple of milliseconds.
            replies(rng, router, pop_rtt + 2.0 + 0.5 * f64::from(h - 3), jitter, 3)
        };
        hops.push(Hop { hop_no: h, replies });
    }
    hops.push(Hop {
        hop_no: target.hops,
        replies: replies(
            rng,
            target.addr,
            pop_rtt + 2.0 + 0.5 * f64::from(target.hops - 3),
            jitter,
            3,
        ),
    });
    TracerouteMeasurement {
        probe_id: plan.probe_id,
        timestamp: at,
        src_addr: public_ip(plan_idx, seg),
        dst_name: target.name.clone(),
        dst_addr: target.addr,
        hops,
    }
}

/// Measurements of one probe following its PoP schedule, every one crossing
/// the CGN gateway with RTTs drawn around the scheduled PoP RTT. Returns the
/// reverse DNS rows for the probe's public addresses alongside.
pub fn gen_traceroute_series(
    plan: &TraceroutePlan,
    plan_idx: usize,
    targets: &[TracerouteTarget],
    seed: u64,
) -> (Vec<TracerouteMeasurement>, Vec<(IpAddr, String)>) {
    let mut rng = rng_for(seed, 20_000 + plan_idx as u64);
    let ms = (0..plan.count)
        .map(|i| measurement(&mut rng, plan, plan_idx, i, targets))
        .collect();
    let rdns = plan
        .schedule
        .iter()
        .enumerate()
        .map(|(seg, s)| (public_ip(plan_idx, seg), pop_hostname(&s.pop)))
        .collect();
    (ms, rdns)
}

pub(crate) fn gen_all_traceroutes(spec: &GeneratorSpec) -> (Vec<TracerouteMeasurement>, Vec<(IpAddr, String)>) {
    let mut ms = Vec::new();
    let mut rdns = Vec::new();
    for (i, plan) in spec.traceroute_plans.iter().enumerate() {
        let (m, r) = gen_traceroute_series(plan, i, &spec.traceroute_targets, spec.seed);
        ms.extend(m);
        rdns.extend(r);
    }
    ms.sort_by(|a, b| a.timestamp.cmp(&b.timestamp).then(a.probe_id.cmp(&b.probe_id)));
    (ms, rdns)
}
