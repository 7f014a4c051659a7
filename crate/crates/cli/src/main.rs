fn main() {
    std::process::exit(topeq_cli::run(std::env::args_os()));
}
