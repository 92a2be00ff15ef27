fn main() {
    std::process::exit(ksae_cli::run(std::env::args_os()));
}
