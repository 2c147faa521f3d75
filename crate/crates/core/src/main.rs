fn main() -> std::process::ExitCode {
    hyperfoil::cli::main()
}
