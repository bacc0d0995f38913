fn main() {
    std::process::exit(spinsim::cli::main_entry());
}
