fn main() -> std::process::ExitCode {
    risksddp::cli::main()
}
