fn main() {
    std::process::exit(otfs_noma_cli::parse_and_run(std::env::args_os()));
}
