fn main() {
    let code = lqdisc::cli::run(std::env::args_os());
    std::process::exit(code);
}
