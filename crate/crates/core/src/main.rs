fn main() {
    std::process::exit(slimflow::cli::run(std::env::args_os()));
}
