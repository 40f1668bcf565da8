fn main() {
    std::process::exit(simfl::cli::run(std::env::args_os()));
}
