fn main() {
    std::process::exit(garlab::cli::main_with_args(std::env::args_os()));
}
