fn main() {
    std::process::exit(proxigraph_cli::run_command(std::env::args_os()));
}
