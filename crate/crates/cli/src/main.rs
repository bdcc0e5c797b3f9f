fn main() {
    std::process::exit(treemart_cli::run(std::env::args_os()));
}
