fn main() {
    std::process::exit(mflq::cli::main_with(std::env::args_os()));
}
