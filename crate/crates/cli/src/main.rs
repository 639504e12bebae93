fn main() {
    std::process::exit(avglemma_cli::run(std::env::args_os()));
}
