fn main() {
    std::process::exit(bubble_diag::cli::run(std::env::args_os()));
}
