fn main() {
    std::process::exit(volreg::cli::run(std::env::args_os()));
}
