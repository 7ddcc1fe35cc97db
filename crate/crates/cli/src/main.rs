//! `homecare`: simulate, train, run scenarios against virtual appliances and
//! report metrics.

use std::path::PathBuf;
use std::time::Duration;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use homecare::runner::commands::{self, DeviceMode};
use homecare::runner::RunConfig;

#[derive(Parser)]
#[command(name = "homecare", version, about = "Home rehabilitation platform runner")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// run configuration (TOML); defaults to the bundled demo config
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// override the config seed
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// output directory; overrides the config
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Devices {
    Loopback,
    External,
    InProcess,
}

impl From<Devices> for DeviceMode {
    fn from(d: Devices) -> Self {
        match d {
            Devices::Loopback => DeviceMode::Loopback,
            Devices::External => DeviceMode::External,
            Devices::InProcess => DeviceMode::InProcess,
        }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate the cohort and scenarios; write segments, features and timelines
    Simulate,
    /// Train the classifier on the simulated dataset
    Train {
        #[arg(long)]
        max_epochs: Option<usize>,
    },
    /// Evaluate the saved checkpoint on the held-out split
    Eval,
    /// Serve the registry's virtual appliances until interrupted
    ServeDevices {
        /// stop after this many seconds
        #[arg(long)]
        duration_s: Option<u64>,
    },
    /// Run scenarios (and optionally the interaction suite) through the closed loop
    RunScenario {
        /// scenario scripts; defaults to those in the config
        #[arg(long = "scenario")]
        scenarios: Vec<PathBuf>,
        #[arg(long, value_enum, default_value = "loopback")]
        devices: Devices,
        /// also run the scripted interaction suite
        #[arg(long)]
        suite: bool,
    },
    /// Replay a saved timeline through the agent
    AgentReplay {
        #[arg(long)]
        timeline: PathBuf,
        #[arg(long, default_value = "P00")]
        patient: String,
    },
    /// Score the safety layer on a labelled corpus
    SafetyEval {
        /// corpus directory; defaults to the bundled corpus
        #[arg(long)]
        corpus: Option<PathBuf>,
    },
    /// Aggregate the logs under the output directory
    Report,
}

fn print_json<T: serde::Serialize>(v: &T) {
    println!("{}", serde_json::to_string_pretty(v).expect("serializable"));
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let path = cli.common.config.clone().unwrap_or_else(RunConfig::bundled_path);
    let mut cfg = RunConfig::load(&path).with_context(|| format!("loading {}", path.display()))?;
    if let Some(s) = cli.common.seed {
        cfg.set_seed(s);
    }
    let out = cli.common.out.clone().unwrap_or_else(|| cfg.out_dir.clone());
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;

    match cli.cmd {
        Cmd::Simulate => print_json(&commands::cmd_simulate(&cfg, &out)?),
        Cmd::Train { max_epochs } => {
            let s = commands::cmd_train(&cfg, &out, max_epochs)?;
            println!(
                "epochs {} (best {})  accuracy {:.4}  macro F1 {:.4}",
                s.epochs_run, s.best_epoch, s.report.weighted_accuracy, s.report.macro_f1
            );
        }
        Cmd::Eval => print_json(&commands::cmd_eval(&cfg, &out)?),
        Cmd::ServeDevices { duration_s } => {
            let handles = commands::cmd_serve_devices(&cfg).context("starting device servers")?;
            for h in &handles {
                println!("{} on {}", h.device.descriptor.name, h.address);
            }
            match duration_s {
                Some(s) => std::thread::sleep(Duration::from_secs(s)),
                None => loop {
                    std::thread::sleep(Duration::from_secs(3600));
                },
            }
        }
        Cmd::RunScenario { scenarios, devices, suite } => {
            for (name, logs) in commands::cmd_run_scenario(&cfg, &out, &scenarios, devices.into())? {
                let kinds: Vec<String> = logs.dispatched().iter().map(|(k, what)| format!("{k:?}{}", what.as_ref().map_or(String::new(), |w| format!("({w})")))).collect();
                println!("{name}: {}", if kinds.is_empty() { "no interventions".into() } else { kinds.join(", ") });
            }
            if suite {
                let r = commands::cmd_run_suite(&cfg, &out, devices.into())?;
                println!(
                    "suite: success {:.3} (first try {:.3}), max retries {}, latency {:?}",
                    r.success.after_retry, r.success.first_try, r.success.max_retries, r.latency
                );
            }
        }
        Cmd::AgentReplay { timeline, patient } => {
            let logs = commands::cmd_agent_replay(&cfg, &timeline, &patient, &out)?;
            println!("{} agent decisions, {} notifications", logs.audit.len(), logs.notifications.len());
        }
        Cmd::SafetyEval { corpus } => {
            let r = commands::cmd_safety_eval(&cfg, corpus.as_deref(), &out)?;
            println!(
                "items {}  erroneous {}  detected {}  missed {}  false activations {}",
                r.total, r.erroneous, r.detected, r.missed, r.false_activations
            );
        }
        Cmd::Report => {
            let (_, table) = commands::cmd_report(&out)?;
            print!("{table}");
        }
    }
    Ok(())
}
