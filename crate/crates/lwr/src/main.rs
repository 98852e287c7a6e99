fn main() {
    std::process::exit(lwr::cli::run(std::env::args_os()));
}
