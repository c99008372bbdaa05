fn main() {
    std::process::exit(connectome_ssvm::cli::main_with_args(std::env::args_os()));
}
