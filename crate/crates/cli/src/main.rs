fn main() -> std::process::ExitCode {
    causal_audit_cli::main_exit()
}
