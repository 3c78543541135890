fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("POLYEVAL_LOG", "info"))
        .format_timestamp_secs()
        .init();
    let code = polyeval::cli::run(std::env::args_os(), &mut std::io::stdout(), &mut std::io::stderr());
    std::process::exit(code);
}
