fn main() {
    std::process::exit(frozen_perc::cli::run(std::env::args_os()));
}
