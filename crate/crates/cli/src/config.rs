//! Flag and config-file handling for the reconstruction command.
//!
//! Every flag doubles as a config key: `grid = 128` in the file is the same
//! as `--grid 128`. Hyphens and underscores are interchangeable and flags
//! override the file.

use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use clap::Args;
use nalgebra::Vector3;
use recon_core::io::OrientationSource;
use recon_core::pipeline::RunConfig;

#[derive(Args, Debug, Default, Clone)]
pub struct RunArgs {
    /// Oriented point cloud (.ply, or text with 3 or 6 columns).
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Output mesh (.obj or .ply).
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// "key = value" file with defaults for any of these flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Vertices along the longest bounding-box axis.
    #[arg(long)]
    pub grid: Option<usize>,
    /// Smoothness weight.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Regulariser: tv or poisson.
    #[arg(long)]
    pub mode: Option<String>,
    /// Threshold for binarizing the relaxed solution.
    #[arg(long)]
    pub mu: Option<f64>,
    /// Pyramid levels for the coarse-to-fine solve.
    #[arg(long)]
    pub levels: Option<usize>,
    /// Sweep budget per level.
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Relative energy change that counts as converged.
    #[arg(long)]
    pub tol: Option<f64>,
    /// SOR relaxation factor.
    #[arg(long)]
    pub omega: Option<f64>,
    /// Gradient-magnitude guard in the diffusivity.
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Bounding-box padding as a fraction of the longest side.
    #[arg(long)]
    pub pad: Option<f64>,
    /// Boundary condition on the outer layer: zero or free.
    #[arg(long)]
    pub boundary: Option<String>,
    /// Diffusivity on grid edges: owner or average.
    #[arg(long)]
    pub edge_weight: Option<String>,
    /// SOR visiting order: lex or red-black.
    #[arg(long)]
    pub sweep_order: Option<String>,
    /// Single view direction X,Y,Z for clouds without normals.
    #[arg(long, allow_hyphen_values = true)]
    pub viewdir: Option<String>,
    /// Per-point view directions, one "x y z" line per point.
    #[arg(long)]
    pub viewdir_file: Option<PathBuf>,
    /// CSV of the energy at every check.
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// Inside counts at a fixed set of thresholds.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    pub threads: Option<usize>,
    /// Accepted for reproducible scripts; the pipeline itself is deterministic.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Extract the relaxed solution directly instead of the smoothed binary one.
    #[arg(long)]
    pub no_rebinarize: bool,
}

const KEYS: &[&str] = &[
    "input",
    "output",
    "grid",
    "lambda",
    "mode",
    "mu",
    "levels",
    "max-iters",
    "tol",
    "omega",
    "epsilon",
    "pad",
    "boundary",
    "edge-weight",
    "sweep-order",
    "viewdir",
    "viewdir-file",
    "log",
    "report",
    "threads",
    "seed",
    "no-rebinarize",
];

fn normalize_key(k: &str) -> String {
    k.trim().to_ascii_lowercase().replace('_', "-")
}

/// Parse "key = value" lines; `#` starts a comment.
pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("line {}: expected 'key = value', got '{line}'", n + 1))?;
        let key = normalize_key(k);
        if key == "config" {
            bail!("line {}: config files cannot include other config files", n + 1);
        }
        if !KEYS.contains(&key.as_str()) {
            bail!("line {}: unknown key '{}'", n + 1, k.trim());
        }
        let value = v.trim().trim_matches('"').to_string();
        if out.insert(key.clone(), value).is_some() {
            bail!("line {}: '{key}' is set twice", n + 1);
        }
    }
    Ok(out)
}

impl RunArgs {
    /// The flags that were given, as config entries.
    fn entries(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        let mut put = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                m.insert(k.to_string(), v);
            }
        };
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.to_string_lossy().into_owned());
        put("input", path(&self.input));
        put("output", path(&self.output));
        put("grid", self.grid.map(|v| v.to_string()));
        put("lambda", self.lambda.map(|v| v.to_string()));
        put("mode", self.mode.clone());
        put("mu", self.mu.map(|v| v.to_string()));
        put("levels", self.levels.map(|v| v.to_string()));
        put("max-iters", self.max_iters.map(|v| v.to_string()));
        put("tol", self.tol.map(|v| v.to_string()));
        put("omega", self.omega.map(|v| v.to_string()));
        put("epsilon", self.epsilon.map(|v| v.to_string()));
        put("pad", self.pad.map(|v| v.to_string()));
        put("boundary", self.boundary.clone());
        put("edge-weight", self.edge_weight.clone());
        put("sweep-order", self.sweep_order.clone());
        put("viewdir", self.viewdir.clone());
        put("viewdir-file", path(&self.viewdir_file));
        put("log", path(&self.log));
        put("report", path(&self.report));
        put("threads", self.threads.map(|v| v.to_string()));
        put("seed", self.seed.map(|v| v.to_string()));
        put("no-rebinarize", self.no_rebinarize.then(|| "true".to_string()));
        m
    }
}

fn parse<T: FromStr>(key: &str, v: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    v.parse().map_err(|e| anyhow!("{key}: cannot parse '{v}': {e}"))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v.to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => bail!("{key}: expected true or false, got '{v}'"),
    }
}

pub fn parse_viewdir(v: &str) -> Result<Vector3<f64>> {
    let parts: Vec<&str> = v.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        bail!("viewdir: expected X,Y,Z, got '{v}'");
    }
    let c: Vec<f64> = parts.iter().map(|p| parse::<f64>("viewdir", p)).collect::<Result<_>>()?;
    let d = Vector3::new(c[0], c[1], c[2]);
    if !(d.norm() > 0.0) || !d.iter().all(|x| x.is_finite()) {
        bail!("viewdir: direction must be finite and non-zero, got '{v}'");
    }
    Ok(d)
}

/// Merge flags over the optional config file into a run configuration.
pub fn resolve(args: &RunArgs) -> Result<RunConfig> {
    let mut merged = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            parse_config(&text).with_context(|| format!("in {}", path.display()))?
        }
        None => BTreeMap::new(),
    };
    let flags = args.entries();
    // an orientation flag replaces whichever orientation the file chose
    if flags.contains_key("viewdir") {
        merged.remove("viewdir-file");
    }
    if flags.contains_key("viewdir-file") {
        merged.remove("viewdir");
    }
    merged.extend(flags);
    build(&merged)
}

fn build(m: &BTreeMap<String, String>) -> Result<RunConfig> {
    let input = m.get("input").ok_or_else(|| anyhow!("no input given (--input or 'input' in the config)"))?;
    let output = m.get("output").ok_or_else(|| anyhow!("no output given (--output or 'output' in the config)"))?;
    let mut cfg = RunConfig::new(input, output);
    if m.contains_key("viewdir") && m.contains_key("viewdir-file") {
        bail!("viewdir and viewdir-file are mutually exclusive");
    }
    let p = &mut cfg.params;
    for (k, v) in m {
        match k.as_str() {
            "input" | "output" => {}
            "grid" => p.grid = parse(k, v)?,
            "lambda" => p.solver.lambda = parse(k, v)?,
            "mode" => p.solver.mode = parse(k, v)?,
            "mu" => p.mu = parse(k, v)?,
            "levels" => p.solver.levels = parse(k, v)?,
            "max-iters" => p.solver.max_iters = parse(k, v)?,
            "tol" => p.solver.rel_energy_tol = parse(k, v)?,
            "omega" => p.solver.omega = parse(k, v)?,
            "epsilon" => p.solver.epsilon = parse(k, v)?,
            "pad" => p.padding = parse(k, v)?,
            "boundary" => p.solver.boundary = parse(k, v)?,
            "edge-weight" => p.solver.edge_weight = parse(k, v)?,
            "sweep-order" => p.solver.sweep_order = parse(k, v)?,
            "no-rebinarize" => p.no_rebinarize = parse_bool(k, v)?,
            "viewdir" => cfg.orientation = OrientationSource::ViewDir(parse_viewdir(v)?),
            "viewdir-file" => cfg.orientation = OrientationSource::ViewDirFile(PathBuf::from(v)),
            "log" => cfg.log = Some(PathBuf::from(v)),
            "report" => cfg.report = Some(PathBuf::from(v)),
            "threads" => cfg.threads = Some(parse(k, v)?),
            "seed" => cfg.seed = Some(parse(k, v)?),
            other => bail!("unknown key '{other}'"),
        }
    }
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use recon_core::{Boundary, Mode};

    #[test]
    fn keys_accept_either_separator_and_comments() {
        let m = parse_config("# header\nmax_iters = 50  # inline\n\nEdge-Weight = average\n").unwrap();
        assert_eq!(m["max-iters"], "50");
        assert_eq!(m["edge-weight"], "average");
    }

    #[test]
    fn bad_lines_are_rejected() {
        assert!(parse_config("grid 64").is_err());
        assert!(parse_config("gird = 64").unwrap_err().to_string().contains("unknown key"));
        assert!(parse_config("grid = 64\ngrid = 32").is_err());
        assert!(parse_config("config = other.cfg").is_err());
    }

    #[test]
    fn flags_override_the_file() {
        let file = parse_config("input = a.xyz\noutput = a.obj\ngrid = 64\nlambda = 0.5\nmode = poisson\n").unwrap();
        let args = RunArgs { grid: Some(32), boundary: Some("free".into()), ..Default::default() };
        let mut m = file;
        m.extend(args.entries());
        let cfg = build(&m).unwrap();
        assert_eq!(cfg.params.grid, 32);
        assert_eq!(cfg.params.solver.lambda, 0.5);
        assert_eq!(cfg.params.solver.mode, Mode::Poisson);
        assert_eq!(cfg.params.solver.boundary, Boundary::Free);
        assert_eq!(cfg.input, PathBuf::from("a.xyz"));
    }

    #[test]
    fn float_flags_round_trip_through_text() {
        let args = RunArgs {
            input: Some("i".into()),
            output: Some("o.obj".into()),
            lambda: Some(0.1 + 0.2),
            ..Default::default()
        };
        let cfg = build(&args.entries()).unwrap();
        assert_eq!(cfg.params.solver.lambda, 0.1 + 0.2);
    }

    #[test]
    fn viewdir_parsing() {
        assert_eq!(parse_viewdir("0, 0,-1").unwrap(), Vector3::new(0.0, 0.0, -1.0));
        assert!(parse_viewdir("0,0").is_err());
        assert!(parse_viewdir("0,0,0").is_err());
        assert!(parse_viewdir("a,0,1").is_err());
        let m = parse_config("input = i\noutput = o.obj\nviewdir = 1,0,0\nviewdir-file = d.txt\n").unwrap();
        assert!(build(&m).is_err());
    }

    #[test]
    fn missing_paths_are_reported() {
        let e = build(&BTreeMap::new()).unwrap_err();
        assert!(e.to_string().contains("no input"));
    }
}
