fn main() {
    std::process::exit(dsm_geom::cli::main_with_args(std::env::args_os()));
}
