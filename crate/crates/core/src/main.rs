fn main() {
    std::process::exit(binbrain::cli::run(std::env::args_os()));
}
