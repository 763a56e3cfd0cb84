fn main() {
    std::process::exit(mrc_enhance::cli::run(std::env::args_os()));
}
