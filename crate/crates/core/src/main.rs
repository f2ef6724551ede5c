fn main() {
    std::process::exit(mea_netinfer::cli::main_with_args(std::env::args_os()));
}
