fn main() {
    std::process::exit(wits::cli::main_with(std::env::args_os()));
}
