fn main() {
    std::process::exit(homsync::cli::main_with_args(std::env::args_os()));
}
