fn main() -> std::process::ExitCode {
    focus_cascade::cli::main()
}
