use std::process::exit;

fn main() {
    if let Err(e) = mint_rvae::cli::main_entry() {
        eprintln!("error: {}", e.message());
        exit(e.exit_code());
    }
}
