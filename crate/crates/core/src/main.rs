fn main() {
    std::process::exit(mvktrans::run_cli());
}
