fn main() {
    std::process::exit(cmaflow::cli::main_with_args(std::env::args_os()));
}
