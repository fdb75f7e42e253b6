fn main() {
    std::process::exit(redist_service::cli::run(std::env::args_os()));
}
