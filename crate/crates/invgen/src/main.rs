fn main() {
    std::process::exit(invgen::cli::run());
}
