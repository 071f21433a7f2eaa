use clap::Parser;

use losr_cli::commands::{run, Cli};
use losr_cli::report::Status;

fn main() {
    let mut cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { Status::Usage.code() } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    cli.argv = std::env::args().collect();
    let (text, status) = run(&cli);
    if status == Status::Usage {
        eprintln!("{}", text);
    } else {
        println!("{}", text);
    }
    std::process::exit(status.code());
}
