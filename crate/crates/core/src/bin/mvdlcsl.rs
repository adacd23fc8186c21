fn main() {
    std::process::exit(mvdlcsl::cli::run(std::env::args_os()));
}
