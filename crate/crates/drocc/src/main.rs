fn main() {
    std::process::exit(drocc::cli::main_with_args(std::env::args_os()));
}
