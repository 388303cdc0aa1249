fn main() {
    std::process::exit(rgg_core::cli::run_from_args(std::env::args_os()));
}
