//! `key = value` run configuration.
//!
//! Every key has a default; files and `--set` overrides may only name keys
//! from [`KEYS`]. `#` starts a comment. `gset.arcs` may be given on several
//! lines, the values accumulate.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::CliError;

/// `(key, default, meaning)`.
pub const KEYS: &[(&str, &str, &str)] = &[
    ("grid.nx", "128", "nodes across Ω̄ in x"),
    ("grid.ny", "128", "nodes across Ω̄ in y"),
    ("grid.lx", "1.0", "width of Ω"),
    ("grid.ly", "1.0", "height of Ω"),
    ("grid.pad", "auto", "padding nodes on each side, or auto"),
    ("medium.kind", "constant", "constant | lens | two_lens | random_smooth"),
    ("medium.c0", "1.0", "speed for constant media"),
    ("medium.amp", "-0.3", "lens speed perturbation"),
    ("medium.radius", "0.2", "lens half-maximum radius, fraction of the shorter side"),
    ("medium.anisotropy", "0.0", "metric perturbation for random_smooth"),
    ("medium.q_scale", "0.0", "potential scale for random_smooth"),
    ("medium.count", "4", "bumps in random_smooth"),
    ("medium.seed", "0", "seed for random_smooth"),
    ("phantom.kind", "gaussians", "disks | gaussians | bars"),
    ("phantom.seed", "0", "phantom seed"),
    ("phantom.count", "3", "number of features"),
    ("phantom.angle", "0.0", "bar orientation in degrees"),
    ("phantom.support", "0.2:0.8:0.2:0.8", "support rectangle as x0:x1:y0:y1 fractions of Ω"),
    ("solve.T", "2.0", "final time"),
    ("solve.safety", "0.5", "CFL safety factor"),
    ("solve.dt", "auto", "time step, or auto"),
    ("recon.method", "neumann", "neumann | masked"),
    ("recon.iters", "10", "maximum Neumann iterations"),
    ("recon.tol", "1e-6", "stop when the relative update falls below this"),
    ("recon.cutoff", "0.1", "final-time cutoff width for timereverse, fraction of T"),
    ("recon.cg_tol", "1e-10", "relative residual target of the harmonic extension"),
    ("recon.cg_max_iter", "20000", "conjugate-gradient iteration cap"),
    ("recon.render", "false", "write a PGM for every iterate"),
    ("gset.arcs", "", "measurement arcs side:from:to:s, comma separated"),
    ("gset.side", "none", "none | all | bottom | right | top | left"),
    ("gset.s_const", "0.0", "time budget for gset.side"),
    ("rays.n_boundary", "64", "boundary points in the T(Ω) census"),
    ("rays.n_directions", "64", "directions per boundary point"),
    ("rays.x", "0.5", "fan origin x"),
    ("rays.y", "0.5", "fan origin y"),
    ("rays.fan", "16", "rays in the fan"),
    ("vis.directions", "32", "directions per node in the stability census"),
    ("vis.support", "0.2:0.8:0.2:0.8", "census rectangle as x0:x1:y0:y1 fractions of Ω"),
    ("input.phantom", "", "F64F initial pressure"),
    ("input.medium", "", "medium file; empty builds one from medium.*"),
    ("input.trace", "", "TRC1 boundary data"),
    ("input.field", "", "F64F field to assess"),
    ("input.truth", "", "F64F ground truth"),
    ("output.dir", ".", "directory for all outputs"),
    ("run.threads", "0", "worker threads, 0 for all cores"),
];

const UNECHOED: &[&str] = &["output.dir", "run.threads"];

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    values: BTreeMap<String, String>,
}

fn known(key: &str) -> Result<(), CliError> {
    if KEYS.iter().any(|(k, _, _)| *k == key) {
        Ok(())
    } else {
        Err(CliError::Validation(format!("unknown config key '{key}'")))
    }
}

fn split_pair(s: &str) -> Option<(&str, &str)> {
    let (k, v) = s.split_once('=')?;
    Some((k.trim(), v.trim()))
}

impl Default for Config {
    fn default() -> Self {
        Config { values: KEYS.iter().map(|(k, d, _)| (k.to_string(), d.to_string())).collect() }
    }
}

impl Config {
    pub fn parse(text: &str) -> Result<Config, CliError> {
        let mut cfg = Config::default();
        let mut arcs: Vec<String> = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = split_pair(line).ok_or_else(|| CliError::Validation(format!("line {}: expected key = value", n + 1)))?;
            known(k)?;
            if k == "gset.arcs" {
                arcs.push(v.to_string());
            } else {
                cfg.values.insert(k.to_string(), v.to_string());
            }
        }
        if !arcs.is_empty() {
            cfg.values.insert("gset.arcs".into(), arcs.join(","));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Config, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", path.display())))?;
        Config::parse(&text)
    }

    /// Applies one `key=value` override.
    pub fn set(&mut self, pair: &str) -> Result<(), CliError> {
        let (k, v) = split_pair(pair).ok_or_else(|| CliError::Validation(format!("override '{pair}' is not key=value")))?;
        known(k)?;
        self.values.insert(k.to_string(), v.to_string());
        Ok(())
    }

    pub fn str(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or_else(|| panic!("no key {key} in the schema"))
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<T, CliError> {
        let v = self.str(key);
        v.parse().map_err(|_| CliError::Validation(format!("{key} = '{v}' is not a valid value")))
    }

    /// `None` for the literal `auto`.
    pub fn auto<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError> {
        if self.str(key) == "auto" {
            Ok(None)
        } else {
            self.get(key).map(Some)
        }
    }

    /// `None` for an empty value.
    pub fn path(&self, key: &str) -> Option<&Path> {
        let v = self.str(key);
        (!v.is_empty()).then(|| Path::new(v))
    }

    pub fn fractions(&self, key: &str) -> Result<((f64, f64), (f64, f64)), CliError> {
        let bad = || CliError::Validation(format!("{key} must be x0:x1:y0:y1"));
        let parts: Vec<f64> = self.str(key).split(':').map(|p| p.trim().parse::<f64>()).collect::<Result<_, _>>().map_err(|_| bad())?;
        match parts[..] {
            [a, b, c, d] => Ok(((a, b), (c, d))),
            _ => Err(bad()),
        }
    }

    /// Keys that shape the results; where files go and how many threads
    /// run them does not.
    fn echoed(&self) -> impl Iterator<Item = (&String, &String)> {
        self.values.iter().filter(|(k, _)| !UNECHOED.contains(&k.as_str()))
    }

    /// The fully resolved configuration, for echoing into reports.
    pub fn echo(&self) -> serde_json::Value {
        serde_json::Value::Object(self.echoed().map(|(k, v)| (k.clone(), serde_json::Value::String(v.clone()))).collect())
    }

    /// The same echo as `# key = value` lines, for CSV headers.
    pub fn comment_block(&self) -> String {
        self.echoed().map(|(k, v)| format!("# {k} = {v}\n")).collect()
    }
}
