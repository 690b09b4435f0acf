//! Prints the default configuration, or validates a file given as argument.

use floatwatch::service::AppConfig;

fn main() {
    match std::env::args().nth(1) {
        Some(path) => match AppConfig::load(path.as_ref()) {
            Ok(_) => println!("{path}: ok"),
            Err(e) => {
                eprintln!("{path}: {e}");
                std::process::exit(2);
            }
        },
        None => print!("{}", AppConfig::default().to_toml()),
    }
}
