fn main() {
    std::process::exit(socialabm::cli::run(std::env::args_os()));
}
