fn main() {
    let mut stdout = std::io::stdout().lock();
    let code = lwf::cli::run(std::env::args(), &mut stdout);
    std::process::exit(code);
}
