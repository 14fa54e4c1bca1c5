fn main() {
    std::process::exit(modclass::cli::run(std::env::args_os()));
}
