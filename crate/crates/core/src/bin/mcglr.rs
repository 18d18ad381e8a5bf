fn main() -> std::process::ExitCode {
    mcglr::cli::main_with(std::env::args_os())
}
