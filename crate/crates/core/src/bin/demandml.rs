fn main() {
    std::process::exit(demandml::cli::run(std::env::args_os()));
}
