fn main() {
    std::process::exit(dialogq_cli::run(std::env::args_os()));
}
