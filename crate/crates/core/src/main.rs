fn main() {
    std::process::exit(ais_relabel::cli::run(std::env::args_os()));
}
