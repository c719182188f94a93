fn main() {
    std::process::exit(bergman_core::cli::main_with_args(std::env::args_os()));
}
