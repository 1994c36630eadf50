fn main() {
    let code = nutripred::cli::run(std::env::args_os());
    std::process::exit(code);
}
