fn main() {
    std::process::exit(brwre_lab::cli::run(std::env::args_os()));
}
