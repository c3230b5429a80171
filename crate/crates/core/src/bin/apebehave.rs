fn main() {
    std::process::exit(apebehave::cli::run(std::env::args_os()));
}
