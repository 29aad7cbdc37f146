fn main() {
    std::process::exit(checkworthy::cli::main());
}
