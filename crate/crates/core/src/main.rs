fn main() {
    std::process::exit(qdmr_core::cli::run(std::env::args_os()));
}
