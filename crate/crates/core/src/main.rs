fn main() {
    std::process::exit(tampa::cli::run_cli(std::env::args_os()));
}
