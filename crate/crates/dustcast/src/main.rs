fn main() {
    std::process::exit(dustcast::cli::run(std::env::args_os()));
}
