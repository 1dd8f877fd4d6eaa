fn main() {
    std::process::exit(fujitalab::cli::run(std::env::args_os()));
}
