fn main() {
    std::process::exit(rawhf::cli::main_from_args(std::env::args_os()));
}
