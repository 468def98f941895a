fn main() {
    std::process::exit(atta_lab::harness::cli(std::env::args_os()));
}
