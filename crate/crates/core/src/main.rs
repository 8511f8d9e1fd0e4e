fn main() {
    std::process::exit(geofm_bench::cli::run(std::env::args_os()));
}
