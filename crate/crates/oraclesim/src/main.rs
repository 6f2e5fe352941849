fn main() {
    std::process::exit(oraclesim::cli::main());
}
