fn main() {
    if let Err(e) = fairqueue::cli::main(std::env::args_os()) {
        eprintln!("fairqueue: {e}");
        std::process::exit(e.exit_code());
    }
}
