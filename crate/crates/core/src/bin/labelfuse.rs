fn main() -> std::process::ExitCode {
    labelfuse::app::main_entry()
}
