fn main() {
    std::process::exit(fou_cli::run(std::env::args_os()));
}
