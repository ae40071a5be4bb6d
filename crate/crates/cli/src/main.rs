use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use critsense_cli::{list_scenarios, parse_config, run, write_error_record, RunError, EXIT_CONFIG, EXIT_IO};

#[derive(Parser)]
#[command(name = "critsense", version, about = "Run critical-sensing simulation scenarios from a TOML config")]
struct Args {
    /// TOML run configuration.
    #[arg(long, required_unless_present = "list_scenarios")]
    config: Option<PathBuf>,
    /// Output directory (overrides `output` in the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for independent grid cells (0 = all cores).
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    /// Print the scenarios and their settings, then exit.
    #[arg(long)]
    list_scenarios: bool,
}

fn exit(code: i32) -> ExitCode {
    ExitCode::from(code as u8)
}

fn main() -> ExitCode {
    let args = Args::parse();
    if args.list_scenarios {
        print!("{}", list_scenarios());
        return ExitCode::SUCCESS;
    }
    let path = args.config.expect("clap enforces --config");
    let text = match std::fs::read_to_string(&path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("critsense: cannot read {}: {e}", path.display());
            return exit(EXIT_IO);
        }
    };
    let config = match parse_config(&text) {
        Ok(c) => c,
        Err(e) => {
            let err = RunError::Config(e);
            eprintln!("critsense: {err}");
            if let Some(dir) = &args.out {
                let _ = write_error_record(dir, &err, None);
            }
            return exit(EXIT_CONFIG);
        }
    };
    let Some(dir) = args.out.or_else(|| config.output.clone()) else {
        eprintln!("critsense: no output directory (use --out or set `output` in the config)");
        return exit(EXIT_CONFIG);
    };
    match run(&config, &dir, args.jobs) {
        Ok(entries) => {
            for e in &entries {
                println!("{}  {}", e.sha256, dir.join(&e.file).display());
            }
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("critsense: {}: {err}", config.scenario);
            match write_error_record(&dir, &err, Some(config.scenario)) {
                Ok(p) => eprintln!("critsense: error record written to {}", p.display()),
                Err(e) => eprintln!("critsense: could not write error record: {e}"),
            }
            exit(err.exit_code())
        }
    }
}
