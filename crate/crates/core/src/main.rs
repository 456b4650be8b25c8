fn main() {
    std::process::exit(acd_core::cli::main_with_args(std::env::args_os()));
}
