//! Subcommand implementations.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use toml::Table;

use ptycho_core::eval::{self, Alignment};
use ptycho_core::exec::Executor;
use ptycho_core::field::ComplexField;
use ptycho_core::io::{self, PgmScale};
use ptycho_core::solvers::{self, IterationRecord, RunOptions, SolverSpec, Truth, TRACE_HEADER};
use ptycho_core::PtychoError;

use crate::config::{ExperimentConfig, Layers, DATASET_KEYS};
use crate::dataset::{self, Dataset, CONFIG_FILE, MANIFEST_FILE};
use crate::failure::{code, CliResult, Failure};
use crate::presets;

#[derive(Debug, Parser)]
#[command(name = "ptycho", version, about = "Blind ptychographic phase retrieval experiments")]
#[command(after_help = presets_help())]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a synthetic dataset and write it to a directory.
    Simulate {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Reconstruct probe and image from a dataset (simulated in memory when
    /// `--data` is absent).
    Reconstruct {
        #[command(flatten)]
        config: ConfigArgs,
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        out: PathBuf,
        /// Also write 8-bit PGM previews of |u|, phase(u) and |ω|.
        #[arg(long)]
        pgm: bool,
    },
    /// Score a reconstruction directory against a dataset with ground truth.
    Evaluate {
        recon: PathBuf,
        truth: PathBuf,
        /// Also write the JSON report to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run several configurations on one dataset and merge their traces.
    ///
    /// Each entry is a preset name or a TOML file, optionally prefixed by
    /// `LABEL=`.
    Compare {
        #[command(flatten)]
        config: ConfigArgs,
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        out: PathBuf,
        #[arg(required = true)]
        entries: Vec<String>,
    },
    /// Print (or write) the scan lattice as JSON.
    Lattice {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Flags that override configuration keys.
#[derive(Debug, Clone, Default, Args)]
pub struct ConfigArgs {
    /// TOML file layered over the preset.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long, value_parser = ["admm", "admm2", "epie", "dr", "palm"])]
    pub solver: Option<String>,
    #[arg(long, value_parser = ["pagm", "pipm", "igm", "wigm"])]
    pub metric: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// R-factor stopping tolerance; `inf` disables the test.
    #[arg(long)]
    pub rfactor_tol: Option<f64>,
    /// Poisson peak factor; absent means noiseless data.
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub dist: Option<usize>,
    #[arg(long, value_parser = ["square", "hex", "hexagonal", "random"])]
    pub lattice: Option<String>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// Dataset directory written by `simulate`.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Record per-iteration wall time (makes traces non-reproducible).
    #[arg(long)]
    pub timing: bool,
}

fn presets_help() -> String {
    let mut s = String::from("Presets:\n");
    for p in presets::PRESETS {
        s.push_str(&format!("  {:<22} {}\n", p.name, p.summary));
    }
    s.push_str(
        "\nConfiguration precedence (later wins): defaults, dataset config.toml,\n\
         --preset, --config, flags. PTYCHO_THREADS sets the worker count (0 or\n\
         unset = serial).\n\
         \nExit codes: 0 ok, 1 I/O, 2 config, 3 data, 4 divergence, 5 overlap violation.",
    );
    s
}

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Simulate { config, out } => simulate(&config, &out),
        Command::Reconstruct { config, run, out, pgm } => reconstruct(&config, &run, &out, pgm).map(|_| ()),
        Command::Evaluate { recon, truth, out } => {
            let report = evaluate(&recon, &truth)?;
            let text = serde_json::to_string_pretty(&report).map_err(PtychoError::from)?;
            println!("{text}");
            if let Some(path) = out {
                dataset::write_json(&path, &report)?;
            }
            Ok(())
        }
        Command::Compare { config, run, out, entries } => compare(&config, &run, &out, &entries),
        Command::Lattice { config, out } => {
            let cfg = resolve(&config, None, None, &RunArgs::default())?;
            let lattice = cfg.scan_lattice()?;
            match out {
                Some(path) => io::write_lattice(&path, &lattice)?,
                None => println!("{}", lattice.to_json()?),
            }
            eprintln!(
                "{:?} lattice: {} frames of {}x{} on a {}x{} image",
                lattice.kind,
                lattice.len(),
                lattice.frame_side,
                lattice.frame_side,
                lattice.image_side,
                lattice.image_side
            );
            Ok(())
        }
    }
}

/// Dataset keys of a dataset's `config.toml`, if it has one.
fn dataset_layer(dir: &Path) -> CliResult<Option<Table>> {
    let path = dir.join(CONFIG_FILE);
    if !path.exists() {
        return Ok(None);
    }
    let text = fs::read_to_string(&path)?;
    let table: Table = text
        .parse()
        .map_err(|e| Failure::new(code::DATA, format!("{}: {e}", path.display())))?;
    Ok(Some(table.into_iter().filter(|(k, _)| DATASET_KEYS.contains(&k.as_str())).collect()))
}

/// An extra layer between `--config` and the flags, used by `compare`.
struct Entry<'a> {
    text: &'a str,
    origin: &'a str,
}

fn build_layers(args: &ConfigArgs, data_layer: Option<&Table>, entry: Option<&Entry<'_>>, run: &RunArgs) -> CliResult<Layers> {
    let mut l = Layers::new();
    if let Some(t) = data_layer {
        l.push(t.clone());
    }
    if let Some(name) = &args.preset {
        let p = presets::find(name)?;
        l.push_str(p.toml, p.name)?;
    }
    if let Some(path) = &args.config {
        let text = fs::read_to_string(path)
            .map_err(|e| Failure::config(format!("cannot read config {}: {e}", path.display())))?;
        l.push_str(&text, &path.display().to_string())?;
    }
    if let Some(e) = entry {
        l.push_str(e.text, e.origin)?;
    }
    if let Some(v) = &args.solver {
        l.set("solver", v.as_str());
    }
    if let Some(v) = &args.metric {
        l.set("metric", v.as_str());
    }
    if let Some(v) = args.seed {
        let v = i64::try_from(v).map_err(|_| Failure::config("seed must fit in a signed 64-bit integer"))?;
        l.set("seed", v);
    }
    if let Some(v) = args.max_iters {
        l.set("max_iters", v as i64);
    }
    if let Some(v) = args.rfactor_tol {
        l.set("rfactor_tol", v);
    }
    if let Some(v) = args.eta {
        l.set("eta", v);
    }
    if let Some(v) = args.dist {
        l.set("dist", v as i64);
    }
    if let Some(v) = &args.lattice {
        l.set("lattice", v.as_str());
    }
    if let Some(p) = &run.data {
        l.set("data", p.display().to_string());
    }
    if run.timing {
        l.set("timing", true);
    }
    Ok(l)
}

/// Resolves the layered configuration. When the result names a dataset, its
/// `config.toml` is slotted in below the preset and every dataset key must
/// still agree with it.
fn resolve(args: &ConfigArgs, entry: Option<&Entry<'_>>, forced_data: Option<&Path>, run: &RunArgs) -> CliResult<ExperimentConfig> {
    let first = build_layers(args, None, entry, run)?.resolve()?;
    let data = forced_data.map(Path::to_path_buf).or(first.data.clone());
    let Some(dir) = data else {
        return Ok(first);
    };
    let Some(layer) = dataset_layer(&dir)? else {
        return Ok(first);
    };
    let mut base = Layers::new();
    base.push(layer.clone());
    let recorded = base.resolve().map_err(|e| Failure::new(code::DATA, format!("{}: {e}", dir.join(CONFIG_FILE).display())))?;
    let cfg = build_layers(args, Some(&layer), entry, run)?.resolve()?;
    let clashes = dataset_key_clashes(&cfg, &recorded);
    if !clashes.is_empty() {
        return Err(Failure::config(format!(
            "{} conflicts with dataset {}; drop the override or simulate a matching dataset",
            clashes.join(", "),
            dir.display()
        )));
    }
    Ok(cfg)
}

fn dataset_key_clashes(a: &ExperimentConfig, b: &ExperimentConfig) -> Vec<&'static str> {
    let mut out = Vec::new();
    let mut check = |name: &'static str, same: bool| {
        if !same {
            out.push(name);
        }
    };
    check("lattice", a.lattice == b.lattice);
    check("image_side", a.image_side == b.image_side);
    check("frame_side", a.frame_side == b.frame_side);
    check("dist", a.dist == b.dist);
    check("probe_amplitude", a.probe_amplitude == b.probe_amplitude);
    check("phantom", a.phantom == b.phantom);
    check("probe", a.probe == b.probe);
    check("seed", a.seed == b.seed);
    check("eta", a.eta == b.eta);
    out
}

fn executor() -> CliResult<Executor> {
    Ok(Executor::from_env()?)
}

pub fn simulate(args: &ConfigArgs, out: &Path) -> CliResult<()> {
    let cfg = resolve(args, None, None, &RunArgs::default())?;
    let ds = Dataset::simulate(&cfg, executor()?)?;
    ds.write(out, &cfg)?;
    eprintln!("wrote {} frames to {}", ds.model.frames(), out.display());
    Ok(())
}

fn load_or_simulate(cfg: &ExperimentConfig, exec: Executor) -> CliResult<Dataset> {
    Ok(match &cfg.data {
        Some(dir) => Dataset::load(dir, exec)?,
        None => Dataset::simulate(cfg, exec)?,
    })
}

/// Summary of one finished reconstruction.
#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub solver: &'static str,
    pub iterations: usize,
    pub converged: bool,
    pub r_factor: f64,
    pub snr_u_db: Option<f64>,
    pub snr_probe_db: Option<f64>,
    #[serde(skip)]
    pub trace: Vec<IterationRecord>,
}

#[derive(Serialize)]
struct PgmScales {
    u_abs: PgmScale,
    u_phase: PgmScale,
    omega_abs: PgmScale,
}

#[derive(Serialize)]
struct ReconstructManifest<'a> {
    command: &'static str,
    version: &'static str,
    threads: usize,
    dataset: String,
    #[serde(flatten)]
    summary: &'a RunSummary,
    #[serde(skip_serializing_if = "Option::is_none")]
    pgm: Option<PgmScales>,
    files: Vec<&'static str>,
    config: &'a ExperimentConfig,
}

fn solve(cfg: &ExperimentConfig, ds: &Dataset) -> CliResult<(RunSummary, ComplexField, ComplexField)> {
    let spec = cfg.solver_spec(ds.intensities.as_slice())?;
    let probe_intensity = match spec {
        SolverSpec::Admm2(_) => {
            if ds.probe_intensity.max() <= 0.0 {
                return Err(Failure::new(code::DATA, "Model II needs a nonzero probe_intensity file in the dataset"));
            }
            Some(&ds.probe_intensity)
        }
        _ => None,
    };
    let truth = ds.image.as_ref().map(|image| Truth {
        image,
        probe: ds.probe.as_ref(),
    });
    let opts = RunOptions {
        stop: cfg.stop_rule(),
        truth,
        timing: cfg.timing,
    };
    let rec = solvers::reconstruct(&ds.model, &ds.intensities, probe_intensity, &spec, &opts)?;
    let r_factor = eval::r_factor(&ds.model, &rec.omega, &rec.u, &ds.intensities)?;
    let snr_u_db = match &ds.image {
        Some(g) => Some(eval::snr_aligned(&rec.u, g)?.0),
        None => None,
    };
    let snr_probe_db = match &ds.probe {
        Some(g) => Some(eval::snr_aligned(&rec.omega, g)?.0),
        None => None,
    };
    let summary = RunSummary {
        solver: spec.name(),
        iterations: rec.trace.len(),
        converged: rec.converged,
        r_factor,
        snr_u_db,
        snr_probe_db,
        trace: rec.trace,
    };
    Ok((summary, rec.omega, rec.u))
}

fn write_pgms(dir: &Path, omega: &ComplexField, u: &ComplexField) -> CliResult<PgmScales> {
    let n = u.rows();
    let m = omega.rows();
    let phase: Vec<f64> = u.as_slice().iter().map(|z| z.arg()).collect();
    Ok(PgmScales {
        u_abs: io::write_pgm(&dir.join("u_abs.pgm"), &u.abs(), n, u.cols())?,
        u_phase: io::write_pgm(&dir.join("u_phase.pgm"), &phase, n, u.cols())?,
        omega_abs: io::write_pgm(&dir.join("omega_abs.pgm"), &omega.abs(), m, omega.cols())?,
    })
}

fn write_run(
    dir: &Path,
    cfg: &ExperimentConfig,
    summary: &RunSummary,
    omega: &ComplexField,
    u: &ComplexField,
    pgm: bool,
    threads: usize,
) -> CliResult<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(CONFIG_FILE), cfg.to_toml())?;
    io::write_field(&dir.join("omega"), omega)?;
    io::write_field(&dir.join("u"), u)?;
    fs::write(dir.join("trace.csv"), solvers::trace_csv_string(&summary.trace))?;
    let mut files = vec![CONFIG_FILE, MANIFEST_FILE, "omega.bin", "u.bin", "trace.csv"];
    let pgm = if pgm {
        files.extend(["u_abs.pgm", "u_phase.pgm", "omega_abs.pgm"]);
        Some(write_pgms(dir, omega, u)?)
    } else {
        None
    };
    let manifest = ReconstructManifest {
        command: "reconstruct",
        version: env!("CARGO_PKG_VERSION"),
        threads,
        dataset: match &cfg.data {
            Some(p) => p.display().to_string(),
            None => "simulated in memory".into(),
        },
        summary,
        pgm,
        files,
        config: cfg,
    };
    Ok(dataset::write_json(&dir.join(MANIFEST_FILE), &manifest)?)
}

pub fn reconstruct(args: &ConfigArgs, run: &RunArgs, out: &Path, pgm: bool) -> CliResult<RunSummary> {
    let mut cfg = resolve(args, None, None, run)?;
    cfg.pgm |= pgm;
    let exec = executor()?;
    let threads = exec.threads();
    let ds = load_or_simulate(&cfg, exec)?;
    let (summary, omega, u) = solve(&cfg, &ds)?;
    write_run(out, &cfg, &summary, &omega, &u, cfg.pgm, threads)?;
    eprintln!(
        "{}: {} iterations, R-factor {:.3e}{}",
        summary.solver,
        summary.iterations,
        summary.r_factor,
        if summary.converged { " (converged)" } else { "" }
    );
    Ok(summary)
}

#[derive(Debug, Clone, Serialize)]
pub struct AlignmentReport {
    pub zeta_re: f64,
    pub zeta_im: f64,
    pub shift: [usize; 2],
}

impl From<Alignment> for AlignmentReport {
    fn from(a: Alignment) -> Self {
        Self {
            zeta_re: a.zeta.re,
            zeta_im: a.zeta.im,
            shift: [a.shift.0, a.shift.1],
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EvaluateReport {
    pub r_factor: f64,
    pub snr_u_db: f64,
    pub snr_probe_db: Option<f64>,
    pub alignment: AlignmentReport,
}

/// Reads `name`, falling back to `fallback` (so a dataset can be scored
/// against itself).
fn read_estimate(dir: &Path, name: &str, fallback: &str) -> CliResult<ComplexField> {
    let primary = dir.join(name);
    let base = if primary.with_extension("json").exists() {
        primary
    } else {
        dir.join(fallback)
    };
    Ok(io::read_field(&base)?)
}

pub fn evaluate(recon: &Path, truth: &Path) -> CliResult<EvaluateReport> {
    let ds = Dataset::load(truth, executor()?)?;
    let image = ds
        .image
        .as_ref()
        .ok_or_else(|| Failure::new(code::DATA, format!("{} has no image_true", truth.display())))?;
    let omega = read_estimate(recon, "omega", "probe_true")?;
    let u = read_estimate(recon, "u", "image_true")?;
    let mismatch = |what: &str, f: &ComplexField, side: usize| {
        Failure::new(
            code::DATA,
            format!("{what} is {}x{}, dataset expects {side}x{side}", f.rows(), f.cols()),
        )
    };
    if u.rows() != ds.model.image_side() || u.cols() != ds.model.image_side() {
        return Err(mismatch("image", &u, ds.model.image_side()));
    }
    if omega.rows() != ds.model.frame_side() || omega.cols() != ds.model.frame_side() {
        return Err(mismatch("probe", &omega, ds.model.frame_side()));
    }
    let r_factor = eval::r_factor(&ds.model, &omega, &u, &ds.intensities)?;
    let (snr_u_db, alignment) = eval::snr_aligned(&u, image)?;
    let snr_probe_db = match &ds.probe {
        Some(g) => Some(eval::snr_aligned(&omega, g)?.0),
        None => None,
    };
    Ok(EvaluateReport {
        r_factor,
        snr_u_db,
        snr_probe_db,
        alignment: alignment.into(),
    })
}

/// `LABEL=SOURCE` or bare `SOURCE`; a source is a preset name or TOML file.
fn parse_entry(raw: &str) -> CliResult<(String, String, String)> {
    let (label, source) = match raw.split_once('=') {
        Some((l, s)) => (l.to_string(), s.to_string()),
        None => {
            let label = Path::new(raw)
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| raw.to_string());
            (label, raw.to_string())
        }
    };
    if label.is_empty() || label.contains([',', ':']) {
        return Err(Failure::config(format!("invalid compare label '{label}'")));
    }
    let text = match presets::find(&source) {
        Ok(p) => p.toml.to_string(),
        Err(_) if Path::new(&source).is_file() => fs::read_to_string(&source)?,
        Err(e) => {
            return Err(Failure::config(format!("'{source}' is neither a preset nor a file ({e})")));
        }
    };
    Ok((label, source, text))
}

#[derive(Serialize)]
struct CompareRun {
    label: String,
    source: String,
    exit_code: u8,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    summary: Option<RunSummary>,
}

#[derive(Serialize)]
struct CompareManifest {
    command: &'static str,
    version: &'static str,
    threads: usize,
    exit_code: u8,
    runs: Vec<CompareRun>,
}

/// Column names of the trace, without `iter`.
fn trace_columns() -> Vec<&'static str> {
    TRACE_HEADER.split(',').skip(1).collect()
}

/// Merged CSV: `iter` then one column group per run, in entry order.
pub fn merged_csv(labels: &[String], traces: &[&[IterationRecord]]) -> String {
    let cols = trace_columns();
    let mut header = vec!["iter".to_string()];
    for l in labels {
        header.extend(cols.iter().map(|c| format!("{l}:{c}")));
    }
    let mut out = header.join(",");
    out.push('\n');
    let rows = traces.iter().map(|t| t.len()).max().unwrap_or(0);
    let blank = vec![""; cols.len()].join(",");
    for k in 0..rows {
        let mut line = (k + 1).to_string();
        for t in traces {
            line.push(',');
            match t.get(k) {
                Some(rec) => {
                    let row = rec.csv_row();
                    line.push_str(row.split_once(',').map_or("", |(_, rest)| rest));
                }
                None => line.push_str(&blank),
            }
        }
        out.push_str(&line);
        out.push('\n');
    }
    out
}

pub fn compare(args: &ConfigArgs, run: &RunArgs, out: &Path, entries: &[String]) -> CliResult<()> {
    let parsed = entries.iter().map(|e| parse_entry(e)).collect::<CliResult<Vec<_>>>()?;
    let mut labels: Vec<String> = parsed.iter().map(|p| p.0.clone()).collect();
    labels.sort();
    labels.dedup();
    if labels.len() != parsed.len() {
        return Err(Failure::config("compare labels must be unique; use LABEL=SOURCE"));
    }
    let labels: Vec<String> = parsed.iter().map(|p| p.0.clone()).collect();
    let cfgs = parsed
        .iter()
        .map(|(label, _, text)| {
            let entry = Entry { text, origin: label };
            resolve(args, Some(&entry), None, run)
        })
        .collect::<CliResult<Vec<_>>>()?;
    let first = &cfgs[0];
    for (cfg, label) in cfgs.iter().zip(&labels).skip(1) {
        let clashes = dataset_key_clashes(cfg, first);
        if !clashes.is_empty() || cfg.data != first.data {
            return Err(Failure::config(format!(
                "run '{label}' describes a different dataset than '{}' ({})",
                labels[0],
                if clashes.is_empty() { "data".to_string() } else { clashes.join(", ") }
            )));
        }
    }
    let exec = executor()?;
    let threads = exec.threads();
    let ds = load_or_simulate(first, exec)?;
    fs::create_dir_all(out)?;

    let results: Vec<CliResult<RunSummary>> = std::thread::scope(|scope| {
        let handles: Vec<_> = cfgs
            .iter()
            .zip(&labels)
            .map(|(cfg, label)| {
                let ds = &ds;
                let dir = out.join(label);
                scope.spawn(move || -> CliResult<RunSummary> {
                    let (summary, omega, u) = solve(cfg, ds)?;
                    write_run(&dir, cfg, &summary, &omega, &u, cfg.pgm, threads)?;
                    Ok(summary)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(Failure::new(code::IO, "run panicked"))))
            .collect()
    });

    let empty: &[IterationRecord] = &[];
    let traces: Vec<&[IterationRecord]> = results
        .iter()
        .map(|r| r.as_ref().map_or(empty, |s| s.trace.as_slice()))
        .collect();
    fs::write(out.join("compare.csv"), merged_csv(&labels, &traces))?;

    let worst = results
        .iter()
        .map(|r| r.as_ref().err().map_or(code::OK, |f| f.code))
        .max()
        .unwrap_or(code::OK);
    let runs = parsed
        .into_iter()
        .zip(results)
        .map(|((label, source, _), r)| match r {
            Ok(s) => {
                eprintln!("{label}: {} iterations, R-factor {:.3e}", s.iterations, s.r_factor);
                CompareRun {
                    label,
                    source,
                    exit_code: code::OK,
                    error: None,
                    summary: Some(s),
                }
            }
            Err(f) => {
                eprintln!("{label}: failed ({})", f.message);
                CompareRun {
                    label,
                    source,
                    exit_code: f.code,
                    error: Some(f.message),
                    summary: None,
                }
            }
        })
        .collect();
    let manifest = CompareManifest {
        command: "compare",
        version: env!("CARGO_PKG_VERSION"),
        threads,
        exit_code: worst,
        runs,
    };
    dataset::write_json(&out.join(MANIFEST_FILE), &manifest)?;
    if worst != code::OK {
        return Err(Failure::new(worst, "one or more runs failed; see manifest.json"));
    }
    Ok(())
}
