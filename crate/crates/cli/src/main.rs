fn main() -> std::process::ExitCode {
    prognosis_cli::main_with_args(std::env::args_os())
}
