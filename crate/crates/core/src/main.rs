fn main() {
    std::process::exit(geomask::cli::run(std::env::args_os()));
}
