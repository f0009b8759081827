fn main() {
    std::process::exit(crossad::cli::run());
}
