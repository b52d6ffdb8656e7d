fn main() {
    std::process::exit(debias::cli::main_with_args(std::env::args_os()));
}
