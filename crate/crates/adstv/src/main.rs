fn main() {
    std::process::exit(adstv::cli::main_with_args(std::env::args_os()));
}
