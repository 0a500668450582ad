fn main() {
    std::process::exit(kgauss_cli::run(std::env::args_os()));
}
