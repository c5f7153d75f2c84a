fn main() {
    std::process::exit(selab::cli::main_with_args(std::env::args_os()));
}
