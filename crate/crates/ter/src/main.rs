fn main() {
    std::process::exit(ter::cli::run(std::env::args_os()));
}
