fn main() {
    std::process::exit(neuralmep_cli::run(std::env::args_os()));
}
