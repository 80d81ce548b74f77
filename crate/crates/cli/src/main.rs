fn main() {
    std::process::exit(bf_cli::dispatch(std::env::args_os()));
}
