fn main() {
    std::process::exit(rsodc_cli::main_with_args(std::env::args_os()));
}
