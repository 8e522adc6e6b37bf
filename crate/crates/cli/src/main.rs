fn main() {
    std::process::exit(torsion_sn_cli::dispatch(std::env::args_os()));
}
