fn main() {
    std::process::exit(neurotrack::cli::main_with_args(std::env::args_os()));
}
