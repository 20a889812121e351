fn main() {
    std::process::exit(adaptaug::cli::main());
}
