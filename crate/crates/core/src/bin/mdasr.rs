use clap::Parser;
use mdasr::harness::cli::{error_line, run, Cli};

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if e.use_stderr() => {
            let msg = e.to_string();
            eprintln!("error: usage: {}", msg.lines().next().unwrap_or("").trim_start_matches("error: "));
            std::process::exit(2);
        }
        Err(e) => {
            print!("{e}");
            return;
        }
    };
    match run(cli) {
        Ok(summary) => println!("{summary}"),
        Err(e) => {
            eprintln!("{}", error_line(&e));
            std::process::exit(1);
        }
    }
}
