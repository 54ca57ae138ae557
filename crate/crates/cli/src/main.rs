fn main() {
    std::process::exit(lplab_cli::run(std::env::args().collect()));
}
