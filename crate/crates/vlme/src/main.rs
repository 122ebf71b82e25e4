fn main() {
    std::process::exit(vlme::cli::run(std::env::args().collect()));
}
