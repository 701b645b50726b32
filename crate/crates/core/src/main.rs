fn main() {
    std::process::exit(negrec::cli::main());
}
