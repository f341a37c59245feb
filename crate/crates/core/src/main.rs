fn main() {
    std::process::exit(prinstrat::cli::run(std::env::args_os()));
}
