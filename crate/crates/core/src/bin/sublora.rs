fn main() {
    std::process::exit(sublora::cli::dispatch(std::env::args_os()));
}
