fn main() {
    std::process::exit(dynrecon::cli::main_with_args(std::env::args_os()));
}
