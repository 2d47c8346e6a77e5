use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::SystemTime;

use clap::{Parser, Subcommand};
use serde_json::json;

use kplane_core::exterior::symbol_constant;
use kplane_core::format::{write_field, write_field_csv, write_sinogram};
use kplane_core::grassmann::PlaneSetDoc;
use kplane_core::pipeline::{
    boundedness_check, decompose, form_family, holder_check, invert, pair_via_projections, selftest, ExperimentConfig,
    Report,
};
use kplane_core::currents::pushforward;
use kplane_core::KplaneError;

#[derive(Parser)]
#[command(name = "kplane", version, about = "Exterior k-plane transform experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment config (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory receiving one sub-directory per run.
    #[arg(long, global = true, default_value = "kplane-runs")]
    out: PathBuf,
    /// Overrides the plane sampling seed of the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 = one per core).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Also write CSV dumps of the sampled fields.
    #[arg(long, global = true)]
    emit_csv: bool,
    /// Progress messages on stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
}

#[derive(Subcommand, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Exterior-algebra exactness and adjointness suites.
    Selftest,
    /// Reconstruct the config form from its transform.
    Invert,
    /// Plane family α_P = ℛ𝒬α(P, ·).
    Decompose,
    /// Push the config current forward to every plane.
    ProjectCurrent,
    /// Pair the config current with the form through the plane family.
    PairViaProjections,
    /// Hölder ratios of the plane family under plane perturbation.
    Holder,
    /// Ḣ^{n−k} / L² ratios of ℛ*ℛ over a random family.
    Bounds,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Selftest => "selftest",
            Command::Invert => "invert",
            Command::Decompose => "decompose",
            Command::ProjectCurrent => "project-current",
            Command::PairViaProjections => "pair-via-projections",
            Command::Holder => "holder",
            Command::Bounds => "bounds",
        }
    }

    /// Commands whose tolerance failures set the exit code.
    fn is_check(self) -> bool {
        matches!(self, Command::Selftest | Command::Holder | Command::Bounds)
    }
}

enum Failure {
    Config(String),
    Tolerance(String),
    Io(String),
    Internal(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Internal(_) => 1,
            Failure::Config(_) => 2,
            Failure::Tolerance(_) => 3,
            Failure::Io(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Tolerance(m) | Failure::Io(m) | Failure::Internal(m) => m,
        }
    }
}

impl From<KplaneError> for Failure {
    fn from(e: KplaneError) -> Self {
        match e {
            KplaneError::Domain(_) | KplaneError::Unsupported(_) | KplaneError::Format(_) => {
                Failure::Config(e.to_string())
            }
            KplaneError::Io(_) => Failure::Io(e.to_string()),
            KplaneError::Json(_) | KplaneError::Internal(_) => Failure::Internal(e.to_string()),
        }
    }
}

fn io_failure(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::Io(format!("{}: {e}", path.display()))
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, Failure> {
    let path = cli.config.as_ref().ok_or_else(|| Failure::Config("--config is required for this command".into()))?;
    let text = fs::read_to_string(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    let cfg = ExperimentConfig::from_json(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    Ok(match cli.seed {
        Some(seed) => cfg.with_seed(seed),
        None => cfg,
    })
}

/// First free `<out>/<command>-NNN`; earlier runs are never overwritten.
fn run_dir(out: &Path, command: &str) -> Result<PathBuf, Failure> {
    fs::create_dir_all(out).map_err(|e| io_failure(out, e))?;
    for i in 1..100_000 {
        let dir = out.join(format!("{command}-{i:03}"));
        match fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(io_failure(&dir, e)),
        }
    }
    Err(Failure::Io(format!("{}: no free run directory", out.display())))
}

fn write_with<F>(path: &Path, f: F) -> Result<(), Failure>
where
    F: FnOnce(&mut BufWriter<fs::File>) -> kplane_core::Result<()>,
{
    let file = fs::File::create(path).map_err(|e| io_failure(path, e))?;
    let mut w = BufWriter::new(file);
    f(&mut w).map_err(|e| io_failure(path, e))?;
    std::io::Write::flush(&mut w).map_err(|e| io_failure(path, e))
}

fn log(cli: &Cli, msg: &str) {
    if cli.verbose {
        eprintln!("kplane: {msg}");
    }
}

struct Outcome {
    results: serde_json::Value,
    passed: Option<bool>,
}

fn execute(cli: &Cli, cfg: Option<&ExperimentConfig>, dir: &Path) -> Result<Outcome, Failure> {
    let need = || cfg.ok_or_else(|| Failure::Config("--config is required for this command".into()));
    match cli.command {
        Command::Selftest => {
            let seed = cli.seed.or(cfg.map(|c| c.planes.seed)).unwrap_or(0);
            let tol = cfg.map(|c| c.tolerances.adjoint).unwrap_or(0.02);
            let report = selftest(seed, tol)?;
            Ok(Outcome { passed: Some(report.passed), results: json!(report) })
        }
        Command::Invert => {
            let cfg = need()?;
            let alpha = cfg.build_form()?;
            log(cli, "forward transform, backprojection and multiplier");
            let inv = invert(&alpha, cfg)?;
            write_with(&dir.join("reconstruction.bin"), |w| write_field(w, &inv.reconstruction))?;
            write_with(&dir.join("sinogram.bin"), |w| write_sinogram(w, &inv.sinogram))?;
            if cli.emit_csv {
                write_with(&dir.join("reconstruction.csv"), |w| write_field_csv(w, &inv.reconstruction))?;
                write_with(&dir.join("truth.csv"), |w| write_field_csv(w, &inv.truth))?;
            }
            Ok(Outcome {
                passed: Some(inv.rel_l2_error <= cfg.tolerances.rel_l2),
                results: json!({
                    "rel_l2_error": inv.rel_l2_error,
                    "tolerance": cfg.tolerances.rel_l2,
                    "symbol_constant": symbol_constant(cfg.n, cfg.k, cfg.m)?,
                    "planes": inv.sinogram.planes().len(),
                }),
            })
        }
        Command::Decompose => {
            let cfg = need()?;
            let alpha = cfg.build_form()?;
            log(cli, "decomposing into plane forms");
            let dec = decompose(&alpha, cfg)?;
            write_with(&dir.join("plane_forms.bin"), |w| write_sinogram(w, &dec.plane_forms))?;
            if cli.emit_csv {
                for (i, s) in dec.plane_forms.slices().iter().enumerate() {
                    write_with(&dir.join(format!("plane_form_{i:04}.csv")), |w| write_field_csv(w, s))?;
                }
            }
            Ok(Outcome {
                passed: None,
                results: json!({
                    "planes": dec.planes.len(),
                    "commutation_gap": dec.commutation_gap,
                    "plane_forms_norm": dec.plane_forms.l2_norm(),
                    "config_hash": dec.config_hash,
                }),
            })
        }
        Command::ProjectCurrent => {
            let cfg = need()?;
            let spec = cfg.current.as_ref().ok_or_else(|| Failure::Config("config has no current".into()))?;
            let current = spec.build(cfg.n, cfg.m)?;
            let planes = cfg.build_planes()?;
            let projections = planes
                .planes()
                .iter()
                .map(|p| {
                    let pushed = pushforward(p, &current)?;
                    let mass: f64 = pushed
                        .atoms
                        .iter()
                        .map(|a| a.weight.iter().map(|w| w * w).sum::<f64>().sqrt())
                        .sum();
                    Ok(json!({
                        "frame": (0..p.n()).map(|i| (0..p.k()).map(|j| p.frame()[(i, j)]).collect::<Vec<_>>()).collect::<Vec<_>>(),
                        "atoms": pushed.atoms,
                        "mass": mass,
                    }))
                })
                .collect::<kplane_core::Result<Vec<_>>>()?;
            let masses: Vec<serde_json::Value> = projections.iter().map(|p| p["mass"].clone()).collect();
            let doc = json!({ "planes": PlaneSetDoc::from(&planes), "projections": projections });
            let text = serde_json::to_string_pretty(&doc).map_err(|e| Failure::Internal(e.to_string()))?;
            let path = dir.join("projections.json");
            fs::write(&path, text).map_err(|e| io_failure(&path, e))?;
            Ok(Outcome {
                passed: None,
                results: json!({ "atoms": current.atoms.len(), "planes": planes.len(), "projected_mass": masses }),
            })
        }
        Command::PairViaProjections => {
            let cfg = need()?;
            let spec = cfg.current.as_ref().ok_or_else(|| Failure::Config("config has no current".into()))?;
            let current = spec.build(cfg.n, cfg.m)?;
            let alpha = cfg.build_form()?;
            let r = pair_via_projections(&current, &alpha, cfg)?;
            Ok(Outcome { passed: Some(r.passed), results: json!(r) })
        }
        Command::Holder => {
            let cfg = need()?;
            let alpha = cfg.build_form()?;
            let r = holder_check(&alpha, cfg, cfg.holder.theta)?;
            Ok(Outcome { passed: Some(r.passed), results: json!(r) })
        }
        Command::Bounds => {
            let cfg = need()?;
            let family = form_family(cfg.n, cfg.m, cfg.bounds.family, cfg.planes.seed)?;
            let r = boundedness_check(&family, cfg)?;
            Ok(Outcome { passed: Some(r.passed), results: json!(r) })
        }
    }
}

fn run(cli: &Cli) -> Result<PathBuf, Failure> {
    let started = SystemTime::now();
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .map_err(|e| Failure::Internal(e.to_string()))?;
    }
    let cfg = match (cli.command, &cli.config) {
        (Command::Selftest, None) => None,
        _ => Some(load_config(cli)?),
    };
    let dir = run_dir(&cli.out, cli.command.name())?;
    log(cli, &format!("writing to {}", dir.display()));
    let outcome = execute(cli, cfg.as_ref(), &dir)?;
    let report = Report::new(cli.command.name(), cfg.as_ref(), outcome.results, outcome.passed, started)?;
    let path = dir.join("report.json");
    fs::write(&path, report.to_json()? + "\n").map_err(|e| io_failure(&path, e))?;
    println!("{}", path.display());
    if cli.command.is_check() && outcome.passed == Some(false) {
        return Err(Failure::Tolerance(format!("{} failed its tolerances; see {}", cli.command.name(), path.display())));
    }
    Ok(path)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(_) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("kplane: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
