fn main() {
    std::process::exit(jitbatch::cli::run());
}
