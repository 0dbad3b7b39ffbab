fn main() {
    std::process::exit(ppa_engine::cli::main());
}
