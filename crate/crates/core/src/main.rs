fn main() -> std::process::ExitCode {
    mstat::cli::main()
}
