fn main() {
    std::process::exit(blendsync::cli::main_with_args(std::env::args_os()));
}
