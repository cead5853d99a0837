use std::process::exit;

fn main() {
    exit(transport::cli::run());
}
