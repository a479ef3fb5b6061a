//! `zfpiter`: compress raw arrays, evaluate error bounds, and run the
//! experiment families.
//!
//! Exit status is 0 on success, 1 when a run breaks a bound it is checked
//! against, and 2 for usage, configuration, input or bound-parameter errors.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};
use zfpiter::bounds::{
    self, beta_for_tolerance_kreiss, beta_for_tolerance_lipschitz, contour_grid, extra_iterations, k_beta_simplified,
    BoundParams, ContourMode, FloatFormat,
};
use zfpiter::codec::{compress_array, compression_ratio, decompress_array, CodecParams, CompressedArray};
use zfpiter::experiments::{self, Family, Scale};
use zfpiter::iterops::{inf, inf_diff};

use crate::config::ConfigFile;

pub const OUT_ENV: &str = "ZFPITER_OUT";

#[derive(Parser)]
#[command(name = "zfpiter", version, about = "Fixed-precision compressed arrays and their error bounds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compress raw little-endian f64 values into a stream file.
    Compress(CompressArgs),
    /// Decode a stream file back to raw little-endian f64 values.
    Decompress(DecompressArgs),
    /// Run one experiment family and write CSV, JSON and SVG outputs.
    Experiment(ExperimentArgs),
    /// Evaluate error-bound formulas.
    #[command(subcommand)]
    Bounds(BoundsCmd),
}

#[derive(Args)]
struct CompressArgs {
    #[arg(short, long)]
    input: PathBuf,
    /// Array extents, slowest axis first, e.g. `64,64`.
    #[arg(long, value_delimiter = ',', required = true)]
    dims: Vec<usize>,
    /// Block dimension; defaults to the number of extents.
    #[arg(short)]
    d: Option<usize>,
    #[arg(short, long)]
    beta: u32,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct DecompressArgs {
    #[arg(short, long)]
    input: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct ExperimentArgs {
    /// diffusion2d, diffusion3d, advect1d, advect2d or poisson2d.
    name: String,
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Plane counts to run; replaces the configured list.
    #[arg(short, long, value_delimiter = ',')]
    beta: Vec<u32>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long, value_enum)]
    scale: Option<ScaleArg>,
    /// Output directory. Beats `ZFPITER_OUT`, which beats the config file.
    #[arg(short, long)]
    out: Option<PathBuf>,
    /// Skip the SVG charts.
    #[arg(long)]
    no_plots: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScaleArg {
    Full,
    Desk,
}

#[derive(Args, Clone, Copy)]
struct FormatArgs {
    /// Significand bits of the source format.
    #[arg(short, default_value_t = 53)]
    k: u32,
    /// Exponent bits of the source format.
    #[arg(short, default_value_t = 11)]
    e: u32,
}

impl FormatArgs {
    fn format(self) -> FloatFormat {
        FloatFormat { k: self.k, e: self.e }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum BoundKind {
    Lipschitz,
    Kreiss,
}

#[derive(Clone, Copy, ValueEnum)]
enum ContourArg {
    Forward,
    Backward,
}

#[derive(Subcommand)]
enum BoundsCmd {
    /// Single-use constant `K_beta` and its ingredients.
    Kbeta {
        #[arg(short)]
        d: usize,
        #[command(flatten)]
        fmt: FormatArgs,
        #[arg(short)]
        b: u32,
    },
    /// Smallest plane count meeting a tolerance over `t` steps.
    BetaSelect {
        #[arg(long, value_enum)]
        kind: BoundKind,
        #[arg(long)]
        tol: f64,
        /// Lipschitz or Kreiss constant.
        #[arg(short = 'l', long)]
        constant: f64,
        #[arg(long, default_value_t = 1.0)]
        gamma: f64,
        #[arg(short)]
        t: usize,
        #[arg(short)]
        d: usize,
        #[command(flatten)]
        fmt: FormatArgs,
    },
    /// Extra iterations needed by a compressed fixed-point iteration.
    ExtraIters {
        #[arg(short = 'l', long)]
        lipschitz: f64,
        #[arg(short)]
        t: usize,
        /// Use this constant directly instead of `K_beta`.
        #[arg(long, conflicts_with = "b")]
        k_tilde: Option<f64>,
        #[arg(short, requires = "d")]
        b: Option<u32>,
        #[arg(short)]
        d: Option<usize>,
        /// Use the simplified form of `K_beta`.
        #[arg(long)]
        simplified: bool,
    },
    /// Grid of plane-count floors over `(c, rate)` as CSV.
    Contour {
        #[arg(long, value_enum, default_value = "forward")]
        mode: ContourArg,
        #[arg(short, default_value_t = 2)]
        d: usize,
        #[arg(short, default_value_t = 53)]
        k: u32,
        #[arg(long, default_value_t = 1.0)]
        c_min: f64,
        #[arg(long, default_value_t = 1e4)]
        c_max: f64,
        #[arg(long, default_value_t = 41)]
        c_points: usize,
        #[arg(long, default_value_t = 0.01)]
        rate_min: f64,
        #[arg(long, default_value_t = 0.99)]
        rate_max: f64,
        #[arg(long, default_value_t = 50)]
        rate_points: usize,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

/// Record of one invocation.
#[derive(Serialize)]
struct RunManifest {
    command: String,
    config_path: Option<PathBuf>,
    parameters: Value,
    outputs: Vec<PathBuf>,
    tool_version: &'static str,
    wall_clock_seconds: f64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cmd: Command) -> anyhow::Result<ExitCode> {
    match cmd {
        Command::Compress(a) => compress(a),
        Command::Decompress(a) => decompress(a),
        Command::Experiment(a) => experiment(a),
        Command::Bounds(b) => bounds_cmd(b),
    }
}

/// Writes to stdout; a closed pipe is not an error.
fn emit(text: &str) -> anyhow::Result<()> {
    use std::io::Write;
    match std::io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn print_json(v: &impl Serialize) -> anyhow::Result<()> {
    emit(&(serde_json::to_string_pretty(v)? + "\n"))
}

fn read_f64s(path: &Path) -> anyhow::Result<Vec<f64>> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    if bytes.len() % 8 != 0 {
        bail!("{}: length {} is not a multiple of 8", path.display(), bytes.len());
    }
    Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk"))).collect())
}

fn compress(a: CompressArgs) -> anyhow::Result<ExitCode> {
    let start = Instant::now();
    if a.dims.is_empty() || a.dims.contains(&0) {
        bail!("--dims needs at least one positive extent");
    }
    let d = a.d.unwrap_or(a.dims.len());
    if d != a.dims.len() {
        bail!("-d {d} does not match {} extents", a.dims.len());
    }
    let data = read_f64s(&a.input)?;
    let n: usize = a.dims.iter().product();
    if data.len() != n {
        bail!("{} holds {} values, dims {:?} need {n}", a.input.display(), data.len(), a.dims);
    }
    let params = CodecParams::double(d, a.beta)?;
    let ca = compress_array(&data, &a.dims, &params)?;
    let bytes = ca.to_bytes();
    std::fs::write(&a.output, &bytes).with_context(|| format!("writing {}", a.output.display()))?;
    let back = decompress_array(&ca)?;
    let k = BoundParams::for_codec(d, FloatFormat::DOUBLE, a.beta)?.k_beta();
    let stats = json!({
        "values": n,
        "bytes": bytes.len(),
        "ratio": compression_ratio(&ca, 64),
        "max_error": inf_diff(&data, &back),
        "k_beta": k,
        "bound": k * inf(&data),
    });
    print_json(&RunManifest {
        command: "compress".into(),
        config_path: None,
        parameters: json!({"input": a.input, "dims": a.dims, "d": d, "beta": a.beta, "stats": stats}),
        outputs: vec![a.output],
        tool_version: env!("CARGO_PKG_VERSION"),
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    })?;
    Ok(ExitCode::SUCCESS)
}

fn decompress(a: DecompressArgs) -> anyhow::Result<ExitCode> {
    let start = Instant::now();
    let bytes = std::fs::read(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
    let ca = CompressedArray::from_bytes(&bytes)?;
    let values = decompress_array(&ca)?;
    let raw: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    std::fs::write(&a.output, raw).with_context(|| format!("writing {}", a.output.display()))?;
    print_json(&RunManifest {
        command: "decompress".into(),
        config_path: None,
        parameters: json!({
            "input": a.input,
            "dims": ca.dims(),
            "d": ca.params().d,
            "beta": ca.params().beta,
            "ratio": compression_ratio(&ca, 64),
        }),
        outputs: vec![a.output],
        tool_version: env!("CARGO_PKG_VERSION"),
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    })?;
    Ok(ExitCode::SUCCESS)
}

fn experiment(a: ExperimentArgs) -> anyhow::Result<ExitCode> {
    let start = Instant::now();
    let family: Family = a.name.parse()?;
    let file = match &a.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    let mut over = file.section(family);
    if let Some(s) = a.scale {
        over.scale = Some(match s {
            ScaleArg::Full => Scale::Full,
            ScaleArg::Desk => Scale::Desk,
        });
    }
    let mut cfg = over.resolve(family);
    if !a.beta.is_empty() {
        cfg.betas = a.beta.clone();
    }
    if let Some(s) = a.steps {
        cfg.steps = s;
    }
    let env_out = std::env::var_os(OUT_ENV).map(PathBuf::from);
    let out = a.out.or(env_out).or(cfg.out_dir.clone()).unwrap_or_else(|| PathBuf::from("out"));
    cfg.out_dir = Some(out.clone());
    cfg.validate()?;

    let result = experiments::run(&cfg)?;
    let mut outputs = experiments::write_outputs(&result, &out)?;
    if a.no_plots {
        for p in outputs.iter().filter(|p| p.extension().is_some_and(|e| e == "svg")) {
            std::fs::remove_file(p)?;
        }
        outputs.retain(|p| p.extension().is_none_or(|e| e != "svg"));
    }
    let violations = result.violations().count();
    let summary: Vec<Value> = result
        .runs
        .iter()
        .map(|r| {
            let last = r.series.rows.last().expect("step 0 is always recorded");
            let min_ratio = r.series.rows.iter().map(|x| x.compression_ratio).fold(f64::INFINITY, f64::min);
            json!({
                "beta": r.beta,
                "violations": r.violations.len(),
                "final_rel_compression_error": last.rel_compression_error,
                "final_rel_bound": last.rel_bound,
                "final_rel_total_error": last.rel_total_error,
                "min_ratio": min_ratio,
            })
        })
        .collect();
    let manifest_path = out.join(format!("{family}_manifest.json"));
    outputs.push(manifest_path.clone());
    let manifest = RunManifest {
        command: format!("experiment {family}"),
        config_path: a.config,
        parameters: json!({"config": cfg, "runs": summary, "poisson": result.poisson}),
        outputs,
        tool_version: env!("CARGO_PKG_VERSION"),
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    };
    std::fs::write(&manifest_path, serde_json::to_vec_pretty(&manifest)?)?;
    print_json(&manifest)?;
    if violations > 0 {
        eprintln!("{violations} step(s) exceeded the error bound");
        return Ok(ExitCode::from(1));
    }
    Ok(ExitCode::SUCCESS)
}

fn bounds_cmd(cmd: BoundsCmd) -> anyhow::Result<ExitCode> {
    match cmd {
        BoundsCmd::Kbeta { d, fmt, b } => {
            let p = BoundParams::new(d, fmt.format(), b)?;
            print_json(&json!({
                "d": p.d,
                "k": p.k,
                "e": p.e,
                "q": p.q,
                "beta": p.beta,
                "beta_cap": p.beta_cap(),
                "eps_k": p.eps_k(),
                "eps_q": p.eps_q(),
                "eps_beta": p.eps_beta(),
                "k_t": p.k_t(),
                "k_beta": p.k_beta(),
                "k_beta_simplified": k_beta_simplified(d, b),
            }))?;
        }
        BoundsCmd::BetaSelect { kind, tol, constant, gamma, t, d, fmt } => {
            let f = fmt.format();
            let sel = match kind {
                BoundKind::Lipschitz => beta_for_tolerance_lipschitz(tol, constant, gamma, t, d, f)?,
                BoundKind::Kreiss => beta_for_tolerance_kreiss(tol, constant, gamma, t, d, f)?,
            };
            let p = BoundParams::new(d, f, sel.beta)?;
            print_json(&json!({
                "tol": tol,
                "constant": constant,
                "gamma": gamma,
                "t": t,
                "d": d,
                "threshold": sel.threshold,
                "beta": sel.beta,
                "beta_cap": p.beta_cap(),
                "k_beta": p.k_beta(),
                "k_beta_simplified": k_beta_simplified(d, sel.beta),
            }))?;
        }
        BoundsCmd::ExtraIters { lipschitz, t, k_tilde, b, d, simplified } => {
            let k = match (k_tilde, b, d) {
                (Some(k), _, _) => k,
                (None, Some(b), Some(d)) if simplified => {
                    BoundParams::new(d, FloatFormat::DOUBLE, b)?;
                    k_beta_simplified(d, b)
                }
                (None, Some(b), Some(d)) => BoundParams::new(d, FloatFormat::DOUBLE, b)?.k_beta(),
                _ => bail!("give either --k-tilde or both -b and -d"),
            };
            let x = extra_iterations(lipschitz, k, t)?;
            print_json(&json!({
                "lipschitz": lipschitz,
                "t": t,
                "k_tilde": k,
                "c": x.c,
                "threshold": x.threshold,
                "m": x.m,
                "rho_predicted": (t as f64 + x.threshold) / t as f64,
            }))?;
        }
        BoundsCmd::Contour { mode, d, k, c_min, c_max, c_points, rate_min, rate_max, rate_points, output } => {
            if !(c_min > 0.0 && c_max >= c_min) || !(rate_max >= rate_min) {
                bail!("contour axes must be increasing with c_min > 0");
            }
            let mode = match mode {
                ContourArg::Forward => ContourMode::Forward,
                ContourArg::Backward => ContourMode::Backward,
            };
            let cells = contour_grid(
                &bounds::logspace(c_min, c_max, c_points),
                &bounds::linspace(rate_min, rate_max, rate_points),
                mode,
                d,
                k,
            );
            let mut wr = csv::Writer::from_writer(Vec::new());
            wr.write_record(["c_tilde", "rate", "threshold", "beta"])?;
            for c in &cells {
                wr.write_record([
                    c.c_tilde.to_string(),
                    c.rate.to_string(),
                    c.threshold.map(|v| v.to_string()).unwrap_or_default(),
                    c.beta.map(|v| v.to_string()).unwrap_or_default(),
                ])?;
            }
            let buf = wr.into_inner()?;
            match output {
                Some(p) => std::fs::write(&p, buf).with_context(|| format!("writing {}", p.display()))?,
                None => emit(&String::from_utf8(buf)?)?,
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}
