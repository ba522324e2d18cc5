fn main() {
    std::process::exit(cmag::cli::run(std::env::args_os()));
}
