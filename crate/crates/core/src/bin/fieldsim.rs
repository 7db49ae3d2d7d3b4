fn main() -> std::process::ExitCode {
    fieldcalc::cli::main_from(std::env::args_os())
}
