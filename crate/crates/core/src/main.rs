fn main() -> std::process::ExitCode {
    rmcsc::cli::main_with(std::env::args_os())
}
