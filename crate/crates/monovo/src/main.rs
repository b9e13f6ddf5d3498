fn main() -> std::process::ExitCode {
    monovo::cli::main()
}
