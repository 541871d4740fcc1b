fn main() {
    std::process::exit(dml_core::cli::run(std::env::args_os()));
}
