fn main() -> std::process::ExitCode {
    jacobi_stability_cli::run(std::env::args_os())
}
