fn main() {
    std::process::exit(rough_mirror::cli::run());
}
