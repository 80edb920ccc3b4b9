fn main() -> std::process::ExitCode {
    dbdp_core::cli::main()
}
