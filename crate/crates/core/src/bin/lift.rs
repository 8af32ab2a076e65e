fn main() {
    lift::cli::init_logging();
    std::process::exit(lift::cli::run(std::env::args_os()));
}
