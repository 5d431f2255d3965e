fn main() {
    std::process::exit(tucker::cli::run_from_env());
}
