fn main() {
    std::process::exit(tvd_npl::cli::run(std::env::args_os()));
}
