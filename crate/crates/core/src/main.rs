fn main() {
    std::process::exit(langevin_dp::cli::run(std::env::args_os()));
}
