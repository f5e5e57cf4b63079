use clap::Parser;
use iea_cli::{replay, risk_estimate, risk_exact, sim_run, Cli, CliError, Command, RiskCommand, SimCommand};
use std::process::ExitCode;

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Risk(RiskCommand::Exact(args)) => {
            let out = risk_exact(&args)?;
            match out.written {
                Some(path) => {
                    for o in &out.report.outcomes {
                        if let Some(p) = &o.proportions_percent {
                            let shares: Vec<String> = p.iter().map(|x| format!("{x:.2}%")).collect();
                            println!("{}: P = {:.6}, responsibility {}", o.outcome, o.probability, shares.join(" / "));
                        }
                    }
                    println!("wrote {}", path.display());
                }
                None => println!("{}", out.report.to_json()),
            }
        }
        Command::Risk(RiskCommand::Estimate(args)) => {
            let out = risk_estimate(&args)?;
            print!("{}", std::fs::read_to_string(out.dir.join("summary.txt")).unwrap_or_default());
            println!("wrote {}", out.dir.display());
        }
        Command::Sim(SimCommand::Run(args)) => {
            let out = sim_run(&args)?;
            println!("outcome {}", out.outcome);
            println!("hash {}", out.hash);
            println!("trace {}", out.trace.display());
        }
        Command::Replay(args) => {
            let summary = replay(&args)?;
            println!(
                "records {}, ticks {}, outcome {}",
                summary.records,
                summary.ticks,
                summary.outcome.as_deref().unwrap_or("-")
            );
            println!("hash {}", summary.hash);
            if !summary.ok() {
                for v in &summary.violations {
                    println!("violation at record {}: {} ({})", v.index, v.rule, v.detail);
                }
                return Err(CliError::Integrity(format!("{} violation(s)", summary.violations.len())));
            }
            println!("OK");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
