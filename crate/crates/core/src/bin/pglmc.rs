fn main() {
    std::process::exit(pglmc::cli::cli_main(std::env::args_os()));
}
