fn main() -> std::process::ExitCode {
    ibac_cli::main_with(std::env::args_os())
}
