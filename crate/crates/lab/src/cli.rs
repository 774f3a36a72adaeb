//! Command-line interface.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use celab_core::cover::{julia_sample, repelling_fixed_points, tce_check, BranchMode, TceParams};
use celab_core::orbit::forward_orbit;
use celab_core::{Complex, SpherePoint};
use serde::Serialize;

use crate::config::{parse_config, RunConfig};
use crate::equiv::{self, classify, run_equivalence, Failure};
use crate::error::LabError;
use crate::registry::{lookup, registry};
use crate::report::{emit_report, GENERATOR, SCHEMA_VERSION};

#[derive(Debug, Parser)]
#[command(name = "celab", version, about = "Collet-Eckmann laboratory for rational maps")]
pub struct Cli {
    /// JSON run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (overrides `output.dir`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; 0 runs sequentially.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Built-in benchmark map, replacing the configured one.
    #[arg(long, global = true)]
    pub map: Option<String>,
    /// Parameter of a parametrized benchmark, as `re,im`.
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub param: Option<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Forward orbit with derivative prefix sums.
    Orbit {
        /// Start point (`re,im`, `re` or `inf`); defaults to the first critical value.
        #[arg(long, allow_hyphen_values = true)]
        z0: Option<String>,
        #[arg(short, long)]
        n: Option<usize>,
    },
    /// CE exponent along every critical orbit in the Julia set.
    Ce {
        #[arg(short, long)]
        n: Option<usize>,
    },
    /// CE2 minima over backward orbits of every critical point in the Julia set.
    Ce2 {
        #[arg(short, long)]
        n: Option<usize>,
    },
    /// Slow-recurrence distances and exponent.
    Sr {
        #[arg(short, long)]
        n: Option<usize>,
        /// Constant of the fit.
        #[arg(long)]
        c: Option<f64>,
    },
    /// Exponential shrinking rate of pullback components.
    Expshrink(ExpShrinkArgs),
    /// Finite-horizon TCE test at one point.
    Tce(TceArgs),
    /// Every estimator plus consistency report; writes report.json,
    /// series.csv and plots.svg.
    Equiv,
    /// List the built-in maps, or show one.
    Registry { name: Option<String> },
}

#[derive(Debug, Args)]
pub struct ExpShrinkArgs {
    #[arg(long, allow_hyphen_values = true)]
    pub anchor: Option<String>,
    #[arg(long)]
    pub radius: Option<f64>,
    #[arg(long)]
    pub depth: Option<usize>,
    #[arg(long, value_enum)]
    pub branch: Option<Branch>,
    #[arg(long)]
    pub base_samples: Option<usize>,
    #[arg(long)]
    pub branch_samples: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TceArgs {
    #[arg(long, allow_hyphen_values = true)]
    pub point: Option<String>,
    #[arg(long)]
    pub radius: Option<f64>,
    #[arg(short = 'M', long = "max-critical")]
    pub m: Option<i64>,
    #[arg(short = 'P', long = "period")]
    pub p: Option<usize>,
    #[arg(long)]
    pub horizon: Option<usize>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Branch {
    Random,
    Nearest,
}

/// `re,im`, `re`, or `inf`.
pub fn parse_point(s: &str) -> Result<SpherePoint, String> {
    let s = s.trim();
    if s.eq_ignore_ascii_case("inf") {
        return Ok(SpherePoint::Infinity);
    }
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let num = |t: &str| t.parse::<f64>().map_err(|e| format!("bad number `{t}`: {e}"));
    let z = match parts.as_slice() {
        [re] => Complex::new(num(re)?, 0.0),
        [re, im] => Complex::new(num(re)?, num(im)?),
        _ => return Err(format!("expected `re,im`, `re` or `inf`, got `{s}`")),
    };
    SpherePoint::try_from_complex(z).map_err(|e| e.to_string())
}

fn point_arg(key: &str, s: &str) -> Result<SpherePoint, LabError> {
    parse_point(s).map_err(|e| LabError::config(key, e))
}

/// Configuration from `--config`, with the global flags applied.
pub fn load_config(cli: &Cli) -> Result<RunConfig, LabError> {
    let mut cfg = match &cli.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| LabError::io(p, e))?;
            parse_config(&text)?
        }
        None => RunConfig::default(),
    };
    if let Some(name) = &cli.map {
        let param = match &cli.param {
            Some(s) => {
                let z = point_arg("--param", s)?
                    .finite()
                    .ok_or_else(|| LabError::config("--param", "parameter must be finite"))?;
                Some([z.re, z.im])
            }
            None => None,
        };
        cfg = cfg.with_map(&lookup(name, param)?.map);
    } else if cli.param.is_some() {
        return Err(LabError::config("--param", "--param requires --map"));
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(out) = &cli.out {
        cfg.output.dir = out.to_string_lossy().into_owned();
    }
    Ok(cfg)
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    schema_version: &'static str,
    generator: &'static str,
    command: &'static str,
    seed: u64,
    config: &'a RunConfig,
    result: T,
}

/// Result of one estimator over `Crit′`.
#[derive(Serialize)]
struct Block<T: Serialize> {
    vacuous: bool,
    estimate: Option<T>,
    failures: Vec<Failure>,
}

fn checked<T: Serialize>(vacuous: bool, estimate: Option<T>, failures: Vec<Failure>) -> Result<Block<T>, LabError> {
    if !vacuous && estimate.is_none() {
        let msgs: Vec<String> = failures.iter().map(|f| f.message.clone()).collect();
        return Err(LabError::Numeric(msgs.join("; ")));
    }
    Ok(Block { vacuous, estimate, failures })
}

fn emit<T: Serialize>(cli: &Cli, cfg: &RunConfig, command: &'static str, result: T) -> Result<String, LabError> {
    let env = Envelope {
        schema_version: SCHEMA_VERSION,
        generator: GENERATOR,
        command,
        seed: cfg.seed,
        config: cfg,
        result,
    };
    let mut text = serde_json::to_string_pretty(&env).expect("result serializes");
    text.push('\n');
    if let Some(dir) = &cli.out {
        write_file(dir, &format!("{command}.json"), &text)?;
    }
    Ok(text)
}

fn write_file(dir: &Path, name: &str, body: &str) -> Result<(), LabError> {
    fs::create_dir_all(dir).map_err(|e| LabError::io(dir, e))?;
    let path = dir.join(name);
    fs::write(&path, body).map_err(|e| LabError::io(&path, e))
}

/// Runs the command and returns what goes to standard output.
pub fn execute(cli: &Cli) -> Result<String, LabError> {
    match cli.threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| LabError::Numeric(format!("thread pool: {e}")))?;
            pool.install(|| dispatch(cli))
        }
        None => dispatch(cli),
    }
}

fn dispatch(cli: &Cli) -> Result<String, LabError> {
    if let Command::Registry { name } = &cli.command {
        let text = match name {
            Some(n) => serde_json::to_string_pretty(&lookup(n, None)?),
            None => serde_json::to_string_pretty(&registry()),
        };
        return Ok(text.expect("registry serializes") + "\n");
    }
    let mut cfg = load_config(cli)?;
    // command flags override the configuration before validation
    match &cli.command {
        Command::Ce { n: Some(n) } | Command::Sr { n: Some(n), .. } => cfg.horizons.forward = *n,
        Command::Ce2 { n: Some(n) } => cfg.horizons.backward = *n,
        _ => {}
    }
    if let Command::Sr { c: Some(c), .. } = &cli.command {
        cfg.sr.c = Some(*c);
    }
    if let Command::Expshrink(a) = &cli.command {
        if let Some(s) = &a.anchor {
            cfg.expshrink.anchor = Some(point_arg("--anchor", s)?);
        }
        if let Some(r) = a.radius {
            cfg.radii.expshrink = r;
        }
        if let Some(d) = a.depth {
            cfg.horizons.cover = d;
        }
        if let Some(b) = a.branch {
            cfg.expshrink.branch = match b {
                Branch::Random => BranchMode::Random,
                Branch::Nearest => BranchMode::Nearest,
            };
        }
        if let Some(k) = a.base_samples {
            cfg.expshrink.base_samples = k;
        }
        if let Some(k) = a.branch_samples {
            cfg.expshrink.branch_samples = k;
        }
    }
    if let Command::Tce(a) = &cli.command {
        if let Some(s) = &a.point {
            cfg.tce.point = Some(point_arg("--point", s)?);
        }
        if let Some(r) = a.radius {
            cfg.radii.tce = r;
        }
        if let Some(m) = a.m {
            cfg.tce.m = m;
        }
        if let Some(p) = a.p {
            cfg.tce.p = p;
        }
        if let Some(h) = a.horizon {
            cfg.horizons.cover = h;
        }
    }
    cfg.validate()?;
    let f = cfg.map()?;
    let cs = classify(&f, &cfg);
    let vacuous = !cs.has_julia_critical();
    let mut failures = Vec::new();
    match &cli.command {
        Command::Orbit { z0, n } => {
            let n = n.unwrap_or(cfg.horizons.forward);
            let z = match z0 {
                Some(s) => point_arg("--z0", s)?,
                None => {
                    let c = cs.julia_points().first().copied().unwrap_or(cs.entries[0].point);
                    f.eval(c)
                }
            };
            let orbit = forward_orbit(&f, z, n).map_err(|e| LabError::Numeric(e.to_string()))?;
            emit(cli, &cfg, "orbit", orbit)
        }
        Command::Ce { .. } => {
            let b = equiv::ce_block(&f, &cs, cfg.horizons.forward, &mut failures);
            emit(cli, &cfg, "ce", checked(vacuous, b, failures)?)
        }
        Command::Ce2 { .. } => {
            let b = equiv::ce2_block(&f, &cs, cfg.horizons.backward, &mut failures);
            emit(cli, &cfg, "ce2", checked(vacuous, b, failures)?)
        }
        Command::Sr { .. } => {
            let b = equiv::sr_block(&f, &cs, cfg.horizons.forward, cfg.sr.c, &mut failures);
            emit(cli, &cfg, "sr", checked(vacuous, b, failures)?)
        }
        Command::Expshrink(_) => {
            let b = equiv::expshrink_block(&f, &equiv::expshrink_params(&cfg), &mut failures);
            emit(cli, &cfg, "expshrink", checked(false, b, failures)?)
        }
        Command::Tce(_) => {
            let numeric = |e: celab_core::cover::CoverError| LabError::Numeric(e.to_string());
            let z = match cfg.tce.point {
                Some(z) => z,
                None => *repelling_fixed_points(&f)
                    .map_err(numeric)?
                    .first()
                    .ok_or_else(|| LabError::Numeric("no repelling fixed point to default to".into()))?,
            };
            let sample = julia_sample(&f, cfg.samples.julia, cfg.seed).map_err(numeric)?;
            let params = TceParams {
                m: cfg.tce.m,
                p: cfg.tce.p,
                r: cfg.radii.tce,
            };
            let res = tce_check(&f, z, params, cfg.horizons.cover, cfg.samples.curve, Some(&sample)).map_err(numeric)?;
            emit(cli, &cfg, "tce", res)
        }
        Command::Equiv => {
            let rep = run_equivalence(&cfg)?;
            let files = emit_report(&rep, &cfg, Path::new(&cfg.output.dir))?;
            #[derive(Serialize)]
            struct Summary<'a> {
                verdict: &'a equiv::Verdict,
                consistency: &'a equiv::Consistency,
                files: Vec<String>,
            }
            let s = Summary {
                verdict: &rep.verdict,
                consistency: &rep.consistency,
                files: files.iter().map(|p| p.display().to_string()).collect(),
            };
            Ok(serde_json::to_string_pretty(&s).expect("summary serializes") + "\n")
        }
        Command::Registry { .. } => unreachable!("handled above"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn points_parse() {
        assert_eq!(parse_point("inf").unwrap(), SpherePoint::Infinity);
        assert_eq!(parse_point("-2").unwrap(), SpherePoint::real(-2.0));
        assert_eq!(parse_point(" 1.5, -0.5").unwrap(), SpherePoint::new(1.5, -0.5));
        assert!(parse_point("1,2,3").is_err());
        assert!(parse_point("x").is_err());
    }

    #[test]
    fn flags_override_config() {
        let cli = Cli::parse_from(["celab", "--map", "multicrit", "--param=-0.5,0.25", "--seed", "7", "ce"]);
        let cfg = load_config(&cli).unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.numerator[0], [-0.5, 0.25]);
        let cli = Cli::parse_from(["celab", "--map", "chebyshev", "--param", "1", "ce"]);
        assert!(load_config(&cli).is_err());
    }
}
