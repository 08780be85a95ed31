fn main() {
    std::process::exit(calibkit_cli::run(std::env::args_os()));
}
