fn main() {
    std::process::exit(gradekit::cli::run(std::env::args()));
}
