fn main() {
    std::process::exit(eventschema::cli::main_with(std::env::args_os()));
}
