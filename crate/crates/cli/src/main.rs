use clap::Parser;
use fecap_readsim::{run, Args};

fn main() {
    let args = Args::parse();
    match run(&args) {
        Ok(outcome) => {
            for warning in &outcome.warnings {
                eprintln!("warning: {warning}");
            }
            for file in &outcome.files {
                println!("{}", file.display());
            }
        }
        Err(err) => {
            eprintln!("fecap-readsim {}: {err}", args.verb.name());
            std::process::exit(err.exit_code());
        }
    }
}
