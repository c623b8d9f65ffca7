fn main() {
    std::process::exit(bovigeom::cli::run(std::env::args_os()));
}
