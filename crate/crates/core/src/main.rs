fn main() {
    std::process::exit(jtqed::cli::run(std::env::args_os()));
}
