fn main() {
    let level = std::env::var("MIXPINN_LOG").unwrap_or_else(|_| "info".into());
    env_logger::Builder::new().parse_filters(&level).format_timestamp_secs().init();
    std::process::exit(mixpinn::cli::run(std::env::args_os()));
}
