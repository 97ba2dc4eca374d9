fn main() {
    std::process::exit(qlab::cli::run_from(std::env::args_os()));
}
