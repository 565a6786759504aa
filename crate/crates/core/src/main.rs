fn main() {
    std::process::exit(sartriage::cli::run(std::env::args_os()));
}
