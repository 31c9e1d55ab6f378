fn main() {
    std::process::exit(sqd_unwrap::cli::run(std::env::args_os()));
}
