fn main() {
    std::process::exit(graphleaf::cli::run_cli(std::env::args_os()));
}
