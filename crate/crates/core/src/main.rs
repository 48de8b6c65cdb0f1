fn main() {
    std::process::exit(reflecting_flights::cli::run_from_args(std::env::args_os()));
}
