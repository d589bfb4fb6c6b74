fn main() {
    sno_scope::cli::init_logging();
    std::process::exit(sno_scope::cli::run(std::env::args_os()));
}
