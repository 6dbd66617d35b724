fn main() {
    std::process::exit(breakeven::cli::main_with_args(std::env::args_os()));
}
