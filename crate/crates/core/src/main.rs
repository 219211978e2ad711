fn main() {
    std::process::exit(congrec::cli::run(std::env::args_os()));
}
