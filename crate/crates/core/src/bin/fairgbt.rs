fn main() {
    std::process::exit(fairgbt::cli::main_with(std::env::args_os()));
}
