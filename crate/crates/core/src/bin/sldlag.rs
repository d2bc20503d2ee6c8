fn main() {
    std::process::exit(sldlag::cli::run(std::env::args_os()));
}
