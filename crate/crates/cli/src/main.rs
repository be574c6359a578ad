use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Parser, Subcommand};

use vortalpha::io::{self as vio, SimulationConfig};
use vortalpha::kernel::{bound_scan, f_prime, f_scalar, green_alpha, Alpha};
use vortalpha::measure::{meridional_probes, uniform_bound_sweep, SweepSetup};
use vortalpha::velocity::eval_samples;
use vortalpha::Error;

/// Worker-count override for the parallel kernels.
const THREADS_ENV: &str = "VORTALPHA_THREADS";

#[derive(Parser)]
#[command(
    name = "vortalpha",
    version,
    about = "Vortex-ring solver for the axisymmetric Euler-alpha equations"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a simulation into a run directory and verify it.
    Simulate {
        config: PathBuf,
        /// Run directory (defaults to output.directory from the config).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the kernel profile table and its bound constants.
    KernelVerify {
        #[arg(long, default_value_t = 61)]
        points: usize,
    },
    /// Re-check a run directory; exits nonzero naming each failed property.
    Verify { run_dir: PathBuf },
    /// Evaluate u (and grad u) from a stored snapshot at points from a CSV (x,y,z).
    Probe {
        snapshot: PathBuf,
        points: PathBuf,
        /// Snapshot index; negative counts from the end.
        #[arg(long, default_value_t = -1, allow_negative_numbers = true)]
        index: i64,
        /// Overrides alpha from the run directory's config.
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        n_theta: Option<usize>,
        #[arg(long)]
        grad: bool,
    },
    /// Mollification sweep over the config's eps_list and alphas.
    Sweep {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn configure_threads() -> anyhow::Result<()> {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .parse()
            .ok()
            .filter(|n| *n > 0)
            .ok_or_else(|| anyhow!("{THREADS_ENV} must be a positive integer (got {v:?})"))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()?;
    }
    Ok(())
}

fn run_dir_for(cfg: &SimulationConfig, out: Option<PathBuf>) -> PathBuf {
    out.unwrap_or_else(|| PathBuf::from(&cfg.output.directory))
}

fn simulate(config: &Path, out: Option<PathBuf>) -> anyhow::Result<ExitCode> {
    let cfg = vio::read_config(config)?;
    let dir = run_dir_for(&cfg, out);
    let summary = vio::run_simulation(&cfg, &dir)?;
    println!(
        "run {}: {} rings, {} snapshots, t = {}",
        dir.display(),
        summary.manifest.rings,
        summary.manifest.snapshots,
        summary.manifest.t_end
    );
    if let Some(report) = &summary.verify {
        if let Some(bad) = report.failures().next() {
            bail!(VerifyFailed(bad.property.clone(), bad.value, bad.bound));
        }
    }
    Ok(ExitCode::SUCCESS)
}

#[derive(Debug)]
struct VerifyFailed(String, f64, f64);

/// A sweep member that could not be run.
#[derive(Debug)]
struct SweepFailed(String);

impl std::fmt::Display for SweepFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for SweepFailed {}

impl std::fmt::Display for VerifyFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "property {} failed: value {:e} > bound {:e}",
            self.0, self.1, self.2
        )
    }
}

impl std::error::Error for VerifyFailed {}

fn kernel_verify(points: usize) -> anyhow::Result<ExitCode> {
    if points < 2 {
        bail!(Error::Domain("--points must be >= 2".into()));
    }
    let stdout = io::stdout();
    let mut w = BufWriter::new(stdout.lock());
    writeln!(w, "z,f,f_prime,z_f,green_1")?;
    let one = Alpha::new(1.0)?;
    // z = 0, then log-spaced over [1e-4, 1e2]
    let zs = std::iter::once(0.0).chain(
        (0..points - 1).map(|i| 10f64.powf(-4.0 + 6.0 * i as f64 / (points - 2).max(1) as f64)),
    );
    for z in zs {
        let f = f_scalar(z)?;
        writeln!(
            w,
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            z,
            f,
            f_prime(z)?,
            z * f,
            green_alpha(z, one)?
        )?;
    }
    let k = bound_scan()?;
    writeln!(w)?;
    writeln!(w, "constant,value,argmax")?;
    writeln!(w, "m0,{:.16e},{:.16e}", k.m0, k.m0_argmax)?;
    writeln!(w, "m1,{:.16e},{:.16e}", k.m1, k.m1_argmax)?;
    writeln!(w, "mf1,{:.16e},{:.16e}", k.mf1, k.mf1_argmax)?;
    writeln!(w, "f_negative,{},", k.f_negative)?;
    writeln!(w, "refinement_change,{:.3e},", k.refinement_change)?;
    w.flush()?;
    Ok(ExitCode::SUCCESS)
}

fn verify(run_dir: &Path) -> anyhow::Result<ExitCode> {
    let report = vio::verify_run_dir(run_dir, &bound_scan()?)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    if let Some(bad) = report.failures().next() {
        bail!(VerifyFailed(bad.property.clone(), bad.value, bad.bound));
    }
    Ok(ExitCode::SUCCESS)
}

fn read_points(path: &Path) -> anyhow::Result<Vec<[f64; 3]>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty()
            || (i == 0
                && line
                    .chars()
                    .any(|c| c.is_ascii_alphabetic() && c != 'e' && c != 'E'))
        {
            continue;
        }
        let vals: Vec<f64> = line
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                message: format!("line {}: {e}", i + 1),
            })?;
        if vals.len() != 3 {
            bail!(Error::Parse {
                path: path.to_path_buf(),
                message: format!("line {}: expected x,y,z", i + 1),
            });
        }
        out.push([vals[0], vals[1], vals[2]]);
    }
    Ok(out)
}

fn probe(
    snapshot: &Path,
    points: &Path,
    index: i64,
    alpha: Option<f64>,
    n_theta: Option<usize>,
    grad: bool,
) -> anyhow::Result<ExitCode> {
    let sibling = snapshot.parent().map(|d| d.join(vio::CONFIG_FILE));
    let cfg = match sibling.filter(|p| p.exists()) {
        Some(p) => Some(vio::read_config(&p)?),
        None => None,
    };
    let alpha = match (alpha, &cfg) {
        (Some(a), _) => Alpha::new(a)?,
        (None, Some(c)) => c.alpha,
        (None, None) => bail!(Error::Config(
            "--alpha is required when the snapshot has no config.toml beside it".into()
        )),
    };
    let n_theta = match (n_theta, &cfg) {
        (Some(n), _) => n,
        (None, Some(c)) => c.grid.n_theta,
        (None, None) => bail!(Error::Config(
            "--n-theta is required when the snapshot has no config.toml beside it".into()
        )),
    };
    let snaps = vio::read_snapshots(snapshot, alpha, n_theta)?;
    let idx = if index < 0 {
        snaps.len() as i64 + index
    } else {
        index
    };
    let cloud = usize::try_from(idx)
        .ok()
        .and_then(|i| snaps.get(i))
        .ok_or_else(|| {
            Error::Domain(format!(
                "snapshot index {index} out of range ({} stored)",
                snaps.len()
            ))
        })?;
    let pts = read_points(points)?;
    let samples = eval_samples(&pts, cloud, grad, false)?;
    let stdout = io::stdout();
    let mut w = BufWriter::new(stdout.lock());
    write!(w, "x,y,z,u1,u2,u3")?;
    if grad {
        for a in 1..=3 {
            for i in 1..=3 {
                write!(w, ",du{a}_dx{i}")?;
            }
        }
    }
    writeln!(w)?;
    for (x, s) in pts.iter().zip(&samples) {
        let mut row: Vec<f64> = x.iter().chain(&s.u).copied().collect();
        if let Some(g) = s.grad {
            row.extend(g.iter().flatten());
        }
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
        writeln!(w, "{}", cells.join(","))?;
    }
    w.flush()?;
    Ok(ExitCode::SUCCESS)
}

fn sweep(config: &Path, out: Option<PathBuf>) -> anyhow::Result<ExitCode> {
    let cfg = vio::read_config(config)?;
    let sweep = cfg
        .sweep
        .clone()
        .ok_or_else(|| Error::Config("sweep needs a [sweep] table".into()))?;
    let data = cfg
        .measure_data()?
        .ok_or_else(|| Error::Config("sweep needs initial.kind = \"measure\"".into()))?;
    let dir = run_dir_for(&cfg, out);
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    fs::write(dir.join(vio::CONFIG_FILE), vio::serialize_config(&cfg)?)?;
    let k = bound_scan()?;
    let probes = meridional_probes(&sweep.probes);
    let setup = SweepSetup {
        grid: cfg.grid,
        controls: cfg.controls(),
        t_span: sweep.t_span,
    };
    let alphas = if sweep.alphas.is_empty() {
        vec![cfg.alpha]
    } else {
        sweep.alphas.clone()
    };
    let mut records = String::new();
    let mut reports = Vec::new();
    for alpha in alphas {
        let rep = uniform_bound_sweep(&data, &sweep.eps_list, alpha, &probes, &setup, &k)?;
        for r in &rep.records {
            records.push_str(&serde_json::to_string(r)?);
            records.push('\n');
        }
        println!(
            "alpha {}: variation {:.3e}, bounded {}, failed members {}",
            rep.alpha,
            rep.variation,
            rep.bounded,
            rep.members.iter().filter(|m| m.error.is_some()).count()
        );
        reports.push(rep);
    }
    fs::write(dir.join("sweep.jsonl"), records)?;
    let summary: Vec<_> = reports
        .iter()
        .map(|r| {
            serde_json::json!({
                "alpha": r.alpha,
                "total_variation": r.total_variation,
                "variation": r.variation,
                "bounded": r.bounded,
                "members": r.members,
            })
        })
        .collect();
    fs::write(
        dir.join("sweep_summary.json"),
        serde_json::to_string_pretty(&summary)? + "\n",
    )?;
    if let Some(m) = reports
        .iter()
        .flat_map(|r| &r.members)
        .find(|m| m.error.is_some())
    {
        bail!(SweepFailed(format!(
            "sweep member eps = {} failed: {}",
            m.eps,
            m.error.as_deref().unwrap_or("")
        )));
    }
    if reports.iter().any(|r| !r.bounded) {
        bail!(VerifyFailed("sweep_envelope".into(), f64::NAN, 1.0));
    }
    Ok(ExitCode::SUCCESS)
}

fn error_kind(e: &anyhow::Error) -> &'static str {
    if let Some(err) = e.downcast_ref::<Error>() {
        err.kind()
    } else if e.downcast_ref::<VerifyFailed>().is_some() {
        "verify"
    } else if e.downcast_ref::<SweepFailed>().is_some() {
        "sweep"
    } else if e.downcast_ref::<io::Error>().is_some() {
        "io"
    } else {
        "cli"
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_threads().and_then(|()| match cli.command {
        Command::Simulate { config, out } => simulate(&config, out),
        Command::KernelVerify { points } => kernel_verify(points),
        Command::Verify { run_dir } => verify(&run_dir),
        Command::Probe {
            snapshot,
            points,
            index,
            alpha,
            n_theta,
            grad,
        } => probe(&snapshot, &points, index, alpha, n_theta, grad),
        Command::Sweep { config, out } => sweep(&config, out),
    });
    match result {
        Ok(code) => code,
        Err(e) => {
            let msg = format!("{e:#}").replace('\n', " ");
            eprintln!("error kind={} message={:?}", error_kind(&e), msg);
            ExitCode::FAILURE
        }
    }
}
