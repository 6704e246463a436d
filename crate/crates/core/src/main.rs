fn main() -> std::process::ExitCode {
    stickflow::cli::main()
}
