fn main() {
    std::process::exit(mixbound_cli::app::run(std::env::args_os()));
}
