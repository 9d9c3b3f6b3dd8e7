fn main() {
    std::process::exit(sopool::cli::run());
}
