fn main() {
    std::process::exit(dimaq_cli::run(std::env::args_os()));
}
