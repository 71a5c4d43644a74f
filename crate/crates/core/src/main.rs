fn main() {
    std::process::exit(apscast::cli::main_with(std::env::args_os()));
}
