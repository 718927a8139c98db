fn main() {
    std::process::exit(persist_cli::main_with_args(std::env::args_os()));
}
