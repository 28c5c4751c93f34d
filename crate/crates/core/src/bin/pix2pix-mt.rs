fn main() {
    std::process::exit(pix2pix_mt::cli::run(std::env::args_os()));
}
