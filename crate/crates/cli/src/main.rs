fn main() {
    std::process::exit(stripe_cli::run(std::env::args_os()));
}
