fn main() {
    std::process::exit(covnoise::cli::main_entry());
}
