use std::io::Write;
use std::process::ExitCode;

use clap::Parser;
use noisygates::cli::{error_record, run, Args};
use noisygates::Error;

fn main() -> ExitCode {
    let args = Args::parse();
    let cfg = match args.resolve() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{}", serde_json::to_string(&error_record(&e)).expect("json"));
            return ExitCode::from(2);
        }
    };
    if args.dry_run {
        // A closed pipe (e.g. `| head`) is not an error for a dry run.
        let _ = writeln!(std::io::stdout(), "{}", cfg.to_json());
        return ExitCode::SUCCESS;
    }
    match run(&cfg, &args.options()) {
        Ok(m) => {
            eprintln!(
                "{}: {} files in {} ({:.2} s)",
                cfg.name(),
                m.files.len(),
                cfg.output_dir.display(),
                m.timing.wall_clock_s
            );
            ExitCode::SUCCESS
        }
        Err(e) => {
            let record = error_record(&e);
            let text = serde_json::to_string_pretty(&record).expect("json");
            if std::fs::create_dir_all(&cfg.output_dir).is_ok() {
                let _ = std::fs::write(cfg.output_dir.join("error.json"), &text);
            }
            eprintln!("{text}");
            match e {
                Error::Config(_) | Error::Parameter { .. } => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
