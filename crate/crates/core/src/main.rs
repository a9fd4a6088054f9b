fn main() -> std::process::ExitCode {
    powertalk::cli::main()
}
