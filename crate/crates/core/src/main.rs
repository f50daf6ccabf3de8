fn main() {
    std::process::exit(softbot_devo::cli::main_with_args(std::env::args_os()));
}
