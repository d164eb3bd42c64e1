fn main() {
    std::process::exit(mmtc_sim::cli::run(std::env::args_os()));
}
