fn main() {
    std::process::exit(dda::harness::cli::main_with(std::env::args_os()));
}
