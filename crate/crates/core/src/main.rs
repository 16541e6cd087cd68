fn main() -> std::process::ExitCode {
    noisysim::cli::main()
}
