fn main() {
    std::process::exit(splitmc::cli::run());
}
