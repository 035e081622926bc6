fn main() {
    std::process::exit(nlqc_cli::main_with(std::env::args_os()));
}
