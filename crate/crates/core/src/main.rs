fn main() {
    std::process::exit(trackfuse::cli::run(std::env::args_os()));
}
