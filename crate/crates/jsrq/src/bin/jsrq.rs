fn main() -> std::process::ExitCode {
    jsrq::cli::main()
}
