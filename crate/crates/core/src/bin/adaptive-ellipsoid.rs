fn main() {
    std::process::exit(adaptive_ellipsoid::cli::run(std::env::args_os()));
}
