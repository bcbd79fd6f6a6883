fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("CAPFUZZ_LOG", "error"))
        .format_timestamp(None)
        .init();
    std::process::exit(capfuzz::cli::main_with_args(std::env::args_os()));
}
