fn main() {
    let mut out = std::io::stdout().lock();
    std::process::exit(grapht::harness::cli::run(std::env::args_os(), &mut out));
}
