fn main() {
    std::process::exit(defiers::cli::main_with_args(std::env::args_os()));
}
