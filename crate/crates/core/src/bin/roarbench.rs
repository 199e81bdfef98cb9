fn main() {
    std::process::exit(roarbench::cli::main_with_args(std::env::args_os()));
}
