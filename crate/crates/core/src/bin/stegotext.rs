fn main() -> std::process::ExitCode {
    stegotext::cli::main()
}
