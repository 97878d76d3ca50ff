fn main() {
    std::process::exit(reactmc::cli::main(std::env::args_os()));
}
