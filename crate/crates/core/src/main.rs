fn main() {
    let args: Vec<String> = std::env::args().collect();
    std::process::exit(expagg::cli::cli_main(&args));
}
