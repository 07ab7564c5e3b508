fn main() {
    std::process::exit(cantor_density::cli::main_with_args(std::env::args_os()));
}
