use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde_json::json;
use thermoact::dataset::{dataset_stats, episode_dirs, read_episode, validate_episode};
use thermoact::executor::Condition;
use thermoact::orchestrator::{
    record_demonstration, render_report, run_experiment, SuccessTable, TrialOptions, TrialResult,
};
use thermoact::planner::{select_backend, PlannerConfig};
use thermoact::thermal::{decode_raw, thermal_to_pseudocolor, InfernoPalette, TempRange};
use thermoact_gateway::GatewayConfig;

#[derive(Parser, Debug)]
#[command(name = "thermoact", version, about = "Thermal-aware manipulation benchmark, recorder and teleop gateway")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Colorize a 16-bit raw thermal PNG into an 8-bit pseudocolor PNG
    ConvertThermal {
        input: PathBuf,
        output: PathBuf,
        #[arg(long, default_value_t = 20.0)]
        lo: f64,
        #[arg(long, default_value_t = 35.0)]
        hi: f64,
    },
    /// Run seeded trials and print a success table
    Run {
        #[arg(long)]
        task: u8,
        #[arg(long, default_value = "rgbt")]
        condition: Condition,
        #[arg(long, default_value_t = 10)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        planner: PlannerArgs,
        /// Also write every trial as an episode under DIR
        #[arg(long, value_name = "DIR")]
        record: Option<PathBuf>,
        /// Write the markdown table here and the CSV next to it
        #[arg(long, value_name = "FILE")]
        report: Option<PathBuf>,
    },
    /// Record scripted demonstrations
    Demo {
        #[arg(long)]
        task: u8,
        #[arg(long, default_value_t = 50)]
        count: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "rgbt")]
        condition: Condition,
    },
    /// Inspect a dataset root
    Dataset {
        #[command(subcommand)]
        action: DatasetCmd,
    },
    /// Start the teleop gateway
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value_t = 1)]
        task: u8,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value = "data")]
        data_dir: PathBuf,
    },
}

#[derive(Subcommand, Debug)]
enum DatasetCmd {
    /// Episode, frame, duration and prompt-share summary as JSON
    Stats { root: PathBuf },
    /// Check every episode; exits nonzero if any check fails
    Validate { root: PathBuf },
}

#[derive(clap::Args, Debug)]
struct PlannerArgs {
    /// mock or remote
    #[arg(long, default_value = "mock")]
    planner: String,
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long, default_value_t = 30.0)]
    timeout: f64,
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Cmd::ConvertThermal { input, output, lo, hi } => convert(&input, &output, lo, hi),
        Cmd::Run {
            task,
            condition,
            trials,
            seed,
            planner,
            record,
            report,
        } => run(task, condition, trials, seed, &planner, record.as_deref(), report.as_deref()),
        Cmd::Demo {
            task,
            count,
            out,
            seed,
            condition,
        } => demo(task, count, &out, seed, condition),
        Cmd::Dataset { action } => match action {
            DatasetCmd::Stats { root } => {
                let stats = dataset_stats(&root).with_context(|| format!("reading {}", root.display()))?;
                println!("{}", serde_json::to_string_pretty(&stats)?);
                Ok(())
            }
            DatasetCmd::Validate { root } => validate(&root),
        },
        Cmd::Serve {
            port,
            host,
            task,
            seed,
            data_dir,
        } => serve(&host, port, task, seed, data_dir),
    }
}

fn check_task(task: u8) -> Result<()> {
    if !(1..=5).contains(&task) {
        bail!("task must be 1..5, got {task}");
    }
    Ok(())
}

fn convert(input: &Path, output: &Path, lo: f64, hi: f64) -> Result<()> {
    let range = TempRange::new(lo, hi)?;
    let bytes = fs::read(input).with_context(|| format!("reading {}", input.display()))?;
    let frame = decode_raw(&bytes)?;
    let img = thermal_to_pseudocolor(&frame, &range, &InfernoPalette::standard())?;
    img.as_image()
        .save(output)
        .with_context(|| format!("writing {}", output.display()))?;
    Ok(())
}

fn run(
    task: u8,
    condition: Condition,
    trials: usize,
    seed: u64,
    planner: &PlannerArgs,
    record: Option<&Path>,
    report: Option<&Path>,
) -> Result<()> {
    check_task(task)?;
    if trials == 0 {
        bail!("--trials must be at least 1");
    }
    let opts = TrialOptions {
        planner: select_backend(&PlannerConfig {
            backend: planner.planner.clone(),
            endpoint: planner.endpoint.clone(),
            timeout_s: planner.timeout,
        })?,
        ..Default::default()
    };
    let (table, results) = match record {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            let mut results = Vec::new();
            for i in 0..trials as u64 {
                let (_, r) = record_demonstration(task, condition, seed + i, i, &opts, dir)?;
                results.push(r);
            }
            (SuccessTable::from_trials(task, condition, &results)?, results)
        }
        None => {
            let e = run_experiment(task, condition, trials, seed, &opts)?;
            (e.table, e.trials)
        }
    };
    let (md, csv) = render_report(std::slice::from_ref(&table))?;
    print!("{md}");
    println!("end-to-end: {:.1}% over {} trials", table.end_to_end, table.trials);
    if let Some(path) = report {
        fs::write(path, &md).with_context(|| format!("writing {}", path.display()))?;
        fs::write(path.with_extension("csv"), &csv)?;
    }
    let failed: Vec<&TrialResult> = results.iter().filter(|r| r.error.is_some()).collect();
    if let Some(first) = failed.first() {
        bail!(
            "{} trial(s) failed to plan; seed {}: {}",
            failed.len(),
            first.seed,
            first.error.as_deref().unwrap_or_default()
        );
    }
    Ok(())
}

fn demo(task: u8, count: u64, out: &Path, seed: u64, condition: Condition) -> Result<()> {
    check_task(task)?;
    fs::create_dir_all(out)?;
    let start = episode_dirs(out)?.len() as u64;
    let opts = TrialOptions::default();
    let mut ok = 0;
    for i in 0..count {
        let (_, r) = record_demonstration(task, condition, seed + i, start + i, &opts, out)?;
        if let Some(e) = &r.error {
            bail!("seed {}: {e}", r.seed);
        }
        ok += r.success() as usize;
    }
    let stats = dataset_stats(out)?;
    println!(
        "{}",
        serde_json::to_string_pretty(&json!({
            "recorded": count,
            "successful": ok,
            "dataset": stats,
        }))?
    );
    Ok(())
}

fn validate(root: &Path) -> Result<()> {
    let dirs = episode_dirs(root).with_context(|| format!("reading {}", root.display()))?;
    if dirs.is_empty() {
        bail!("no episodes under {}", root.display());
    }
    let mut report = Vec::new();
    let mut bad = 0;
    for d in &dirs {
        let (frames, problems) = match read_episode(d) {
            Ok(ep) => (ep.frames.len(), validate_episode(&ep)),
            Err(e) => (0, vec![e.to_string()]),
        };
        bad += !problems.is_empty() as usize;
        report.push(json!({"dir": d.display().to_string(), "frames": frames, "problems": problems}));
    }
    println!(
        "{}",
        serde_json::to_string_pretty(&json!({"episodes": dirs.len(), "invalid": bad, "results": report}))?
    );
    if bad > 0 {
        bail!("{bad} of {} episodes failed validation", dirs.len());
    }
    Ok(())
}

fn serve(host: &str, port: u16, task: u8, seed: u64, data_dir: PathBuf) -> Result<()> {
    check_task(task)?;
    fs::create_dir_all(&data_dir)?;
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind((host, port))
            .await
            .with_context(|| format!("binding {host}:{port}"))?;
        eprintln!("gateway listening on {}", listener.local_addr()?);
        thermoact_gateway::serve(
            listener,
            GatewayConfig {
                task,
                seed,
                data_root: data_dir,
            },
        )
        .await?;
        Ok(())
    })
}
