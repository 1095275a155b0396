fn main() {
    std::process::exit(clickspoil::pipeline::cli::run(std::env::args_os()));
}
