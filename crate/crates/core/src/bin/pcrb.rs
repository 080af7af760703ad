fn main() {
    std::process::exit(pcrb::cli::main_with_args(std::env::args_os()));
}
