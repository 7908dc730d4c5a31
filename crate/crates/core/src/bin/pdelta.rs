fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("PDELTA_LOG", "error")).init();
    std::process::exit(pdelta_core::cli::run_cli(std::env::args_os()));
}
