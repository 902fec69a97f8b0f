fn main() -> std::process::ExitCode {
    densedex::cli::main()
}
