fn main() {
    std::process::exit(taxurn::cli::run(std::env::args()));
}
