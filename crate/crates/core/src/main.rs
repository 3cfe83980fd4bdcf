fn main() {
    std::process::exit(morphaug::cli::run(std::env::args_os()));
}
