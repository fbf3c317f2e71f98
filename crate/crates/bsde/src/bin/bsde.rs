fn main() {
    std::process::exit(bsde::cli::main());
}
