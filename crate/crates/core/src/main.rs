fn main() {
    std::process::exit(rst_core::cli::run(std::env::args_os()));
}
