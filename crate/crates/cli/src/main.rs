fn main() {
    std::process::exit(pnvflow_cli::app::main_with(std::env::args_os()));
}
