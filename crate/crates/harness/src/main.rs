use clap::{Parser, Subcommand};
use neuroarm_harness::commands::{self, scores_table};
use neuroarm_harness::{HarnessError, PipelineConfig};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(name = "neuroarm", version, about = "EEG-driven arm control: data, training, evaluation and live sessions")]
struct Cli {
    /// TOML configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    bundle: Option<PathBuf>,
    /// Log filter, e.g. `info` or `neuroarm_models=debug`.
    #[arg(long, global = true, default_value = "info")]
    log: String,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Generate the train, calib and test recordings.
    Gen {
        #[arg(long)]
        trials_per_class: Option<usize>,
    },
    /// Fit the full model and write the bundle.
    Train,
    /// Confusion matrices and accuracy on the test recording.
    Eval,
    /// Retrain across window lengths and time inference.
    Sweep {
        #[arg(long, value_delimiter = ',')]
        sizes: Option<Vec<usize>>,
    },
    /// Paced replay through the full control loop.
    RunLive {
        #[arg(long)]
        duration: Option<f64>,
        #[arg(long)]
        script: Option<PathBuf>,
        /// Replay as fast as possible instead of at the sample rate.
        #[arg(long)]
        fast: bool,
        #[arg(long)]
        serial_port: Option<PathBuf>,
    },
    /// Cumulative accuracy with and without oracle corrections.
    HitlExp {
        #[arg(long)]
        p_correct: Option<f64>,
    },
    /// Live session exposed over WebSocket at /ws.
    Serve {
        #[arg(long)]
        bind: Option<String>,
        #[arg(long)]
        port: Option<u16>,
        #[arg(long)]
        duration: Option<f64>,
        #[arg(long)]
        wait_for_client: bool,
    },
    /// Print the effective configuration as TOML.
    ShowConfig,
}

fn load_config(cli: &Cli) -> Result<PipelineConfig, HarnessError> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(d) = &cli.out_dir {
        cfg.paths.out_dir = d.clone();
    }
    if let Some(b) = &cli.bundle {
        cfg.paths.bundle = Some(b.clone());
    }
    match &cli.command {
        Cmd::Gen { trials_per_class: Some(n) } => cfg.data.session.n_trials_per_class = *n,
        Cmd::Sweep { sizes: Some(s) } => cfg.sweep.sizes = s.clone(),
        Cmd::RunLive { duration, script, fast, serial_port } => {
            if let Some(d) = duration {
                cfg.live.duration_s = *d;
            }
            if script.is_some() {
                cfg.live.script = script.clone();
            }
            if *fast {
                cfg.live.realtime = false;
            }
            if serial_port.is_some() {
                cfg.live.serial_port = serial_port.clone();
            }
        }
        Cmd::HitlExp { p_correct: Some(p) } => cfg.hitl.p_correct = *p,
        Cmd::Serve { bind, port, duration, wait_for_client } => {
            if let Some(b) = bind {
                cfg.service.bind = b.clone();
            }
            if let Some(p) = port {
                cfg.service.port = *p;
            }
            if let Some(d) = duration {
                cfg.live.duration_s = *d;
            }
            cfg.service.wait_for_client |= *wait_for_client;
        }
        _ => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<(), HarnessError> {
    let cfg = load_config(cli)?;
    match &cli.command {
        Cmd::Gen { .. } => {
            let out = commands::cmd_gen(&cfg)?;
            for (kind, path, hist) in out.files {
                println!("{kind:?}: {} (samples per class LEFT/RIGHT/IDLE = {hist:?})", path.display());
            }
        }
        Cmd::Train => {
            let out = commands::cmd_train(&cfg)?;
            let r = &out.report;
            println!(
                "trials {} | windows train/val/test {}/{}/{} | rejected ICA components {:?}",
                r.n_trials, r.n_train_windows, r.n_val_windows, r.n_test_windows, r.rejected_components
            );
            print!("{}", scores_table("validation", &r.val));
            print!("{}", scores_table("held-out test", &r.test));
            println!("bundle: {}", out.bundle.display());
        }
        Cmd::Eval => {
            let out = commands::cmd_eval(&cfg)?;
            for (name, m) in &out.confusion {
                println!("{}", m.render(name));
            }
            println!("written to {}", out.dir.display());
        }
        Cmd::Sweep { .. } => {
            let out = commands::cmd_sweep(&cfg)?;
            print!("{}", out.table.render());
            println!("written to {}", out.csv.display());
        }
        Cmd::RunLive { .. } | Cmd::Serve { .. } => {
            let out = if matches!(cli.command, Cmd::Serve { .. }) {
                commands::cmd_serve(&cfg, |addr| println!("listening on ws://{addr}/ws"))?
            } else {
                commands::cmd_run_live(&cfg)?
            };
            let s = &out.summary;
            println!(
                "ticks {} | cadence {:.2} Hz | underruns {} | dropped samples {}",
                s.ticks, s.cadence_hz, s.underruns, s.dropped_samples
            );
            println!(
                "end-to-end latency ms: p50 {:.2}  p95 {:.2}  p99 {:.2}  max {:.2}",
                s.latency.e2e_p50_ms, s.latency.e2e_p95_ms, s.latency.e2e_p99_ms, s.latency.e2e_max_ms
            );
            for st in &s.latency.stages {
                println!("  {:<9} mean {:>8.3}  p95 {:>8.3}", st.stage, st.mean_ms, st.p95_ms);
            }
            println!("written to {}", out.dir.display());
        }
        Cmd::HitlExp { .. } => {
            let out = commands::cmd_hitl_exp(&cfg)?;
            let (plain, hitl) = out.result.final_accuracy();
            println!(
                "{} windows, {} corrections | final cumulative accuracy: without {plain:.3}, with {hitl:.3}",
                out.result.ticks.len(),
                out.result.n_corrected()
            );
            println!("written to {}", out.dir.display());
        }
        Cmd::ShowConfig => print!("{}", cfg.to_toml()),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let filter = tracing_subscriber::EnvFilter::try_new(&cli.log).unwrap_or_else(|_| "info".into());
    tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
