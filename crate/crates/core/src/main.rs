fn main() {
    std::process::exit(hubbard_cone::cli::main_with_args(std::env::args_os()));
}
