fn main() {
    std::process::exit(donning::run(std::env::args_os()));
}
