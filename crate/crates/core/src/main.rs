fn main() {
    std::process::exit(textcert::cli::run(std::env::args().skip(1)));
}
