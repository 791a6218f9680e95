fn main() {
    std::process::exit(dupcurate_cli::run(std::env::args_os()));
}
