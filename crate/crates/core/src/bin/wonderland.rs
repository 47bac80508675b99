fn main() {
    std::process::exit(wonderland::cli::main());
}
