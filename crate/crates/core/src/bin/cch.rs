fn main() {
    std::process::exit(cch::cli::cli_main(std::env::args_os()));
}
