fn main() {
    std::process::exit(qedlab_cli::run());
}
