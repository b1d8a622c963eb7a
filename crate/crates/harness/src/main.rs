fn main() {
    std::process::exit(hebm_harness::cli::run_cli(std::env::args_os()));
}
