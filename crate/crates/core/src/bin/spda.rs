fn main() -> std::process::ExitCode {
    spda::cli::main_with_args(std::env::args_os())
}
