fn main() {
    std::process::exit(axisym_lab::cli::main_with_args(std::env::args_os()));
}
