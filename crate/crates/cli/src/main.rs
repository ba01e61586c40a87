fn main() {
    std::process::exit(demfill_cli::run(std::env::args_os()));
}
