fn main() {
    std::process::exit(lppls::cli::run(std::env::args_os()));
}
