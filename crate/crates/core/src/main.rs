fn main() {
    std::process::exit(l1_phase::cli::main());
}
