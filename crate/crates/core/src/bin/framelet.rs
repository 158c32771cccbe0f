fn main() {
    std::process::exit(framelet::cli::run_cli(std::env::args_os()));
}
