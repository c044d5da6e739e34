fn main() { std::process::exit(recolor::cli::run()); }
