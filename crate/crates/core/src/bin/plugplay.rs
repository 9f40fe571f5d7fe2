fn main() {
    std::process::exit(plugplay::cli::dispatch(std::env::args_os()));
}
