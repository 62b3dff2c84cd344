fn main() {
    std::process::exit(glyphpin::cli::run(std::env::args_os()));
}
