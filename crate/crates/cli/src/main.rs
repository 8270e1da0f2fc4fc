fn main() {
    std::process::exit(qosim_cli::run_cli(std::env::args_os()));
}
