fn main() -> std::process::ExitCode {
    legendre_monodromy::shell::main_entry()
}
