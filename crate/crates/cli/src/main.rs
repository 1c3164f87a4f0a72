use std::process::ExitCode;

use clap::{Parser, Subcommand};

use bandgap_qed_cli::run;
use bandgap_qed_cli::spec::{self, resolve, RunArgs};

#[derive(Parser)]
#[command(name = "bandgap-qed", version, about = "Atoms coupled to a photonic-crystal band edge")]
struct Cli {
    #[command(subcommand)]
    action: Action,
}

#[derive(Subcommand)]
enum Action {
    /// Run one computation and write CSV output plus a JSON sidecar.
    Run(RunArgs),
    /// List the figure presets.
    Presets,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let mut args = match cli.action {
        Action::Presets => {
            for p in spec::PRESETS {
                println!("{p}");
            }
            return ExitCode::SUCCESS;
        }
        Action::Run(args) => args,
    };
    if args.threads.is_none() {
        if let Ok(v) = std::env::var("BANDGAP_QED_THREADS") {
            match v.trim().parse::<usize>() {
                Ok(k) => args.threads = Some(k),
                Err(_) => {
                    eprintln!("error: BANDGAP_QED_THREADS: cannot parse '{v}'");
                    return ExitCode::from(1);
                }
            }
        }
    }
    let spec = match resolve(args) {
        Ok(s) => s,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(1);
        }
    };
    if let Some(k) = spec.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(k).build_global() {
            eprintln!("error: cannot start thread pool: {e}");
            return ExitCode::from(2);
        }
    }
    match run::execute(&spec) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
