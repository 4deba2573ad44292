fn main() {
    std::process::exit(def_cli::run(std::env::args_os()));
}
