fn main() {
    std::process::exit(fracop::cli::main());
}
