fn main() {
    std::process::exit(magrisk::cli::main_with(std::env::args_os()));
}
