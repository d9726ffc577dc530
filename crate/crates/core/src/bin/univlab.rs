fn main() {
    std::process::exit(univlab::cli::run(std::env::args_os()));
}
