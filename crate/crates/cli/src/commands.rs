use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;
use serde_json::{json, Value};
use tat_core::elliptic::CgSettings;
use tat_core::energy::{energy_csv, l2_norm};
use tat_core::io::{read_field, read_medium, read_trace, write_atomic, write_field, write_medium, write_pgm, write_trace};
use tat_core::phantoms::{make_medium, make_phantom, MediumKind, MediumParams, PhantomKind, PhantomParams};
use tat_core::rays::{
    domain_t, stability_condition_map, trace_geodesic, uniqueness_condition_check, ArcSpec, MeasurementSet, PhasePoint,
    RayOptions, Sign,
};
use tat_core::reconstruct::{
    hd, masked_reconstruct, naive_time_reversal_a0, neumann_reconstruct, pseudo_inverse_a_with, NeumannOptions, Reconstruction,
};
use tat_core::wave::{cfl_dt, forward_solve, required_pad, stability_limit, SolveOptions};
use tat_core::{BoundaryTrace, Grid, Medium, ScalarField, TatError, TimeAxis};

use crate::config::Config;
use crate::CliError;

type Outputs = Vec<String>;

const DEFAULT_PAD: usize = 2;

pub fn dispatch(name: &str, cfg: &Config) -> Result<Outputs, CliError> {
    let mut out = Out::new(cfg)?;
    match name {
        "phantom" => phantom(cfg, &mut out)?,
        "medium" => medium(cfg, &mut out)?,
        "simulate" => simulate(cfg, &mut out)?,
        "reconstruct" => reconstruct(cfg, &mut out)?,
        "timereverse" => timereverse(cfg, &mut out)?,
        "rays" => rays(cfg, &mut out)?,
        "visibility" => visibility(cfg, &mut out)?,
        "report" => report(cfg, &mut out)?,
        other => return Err(CliError::Validation(format!("unknown subcommand {other}"))),
    }
    Ok(out.written)
}

/// Output directory plus a record of every file written.
struct Out {
    dir: PathBuf,
    written: Outputs,
}

impl Out {
    fn new(cfg: &Config) -> Result<Out, CliError> {
        let dir = PathBuf::from(cfg.str("output.dir"));
        std::fs::create_dir_all(&dir).map_err(TatError::from)?;
        Ok(Out { dir, written: Vec::new() })
    }

    fn path(&mut self, name: &str) -> PathBuf {
        let p = self.dir.join(name);
        self.written.push(p.display().to_string());
        p
    }

    fn bytes(&mut self, name: &str, b: &[u8]) -> Result<(), CliError> {
        let p = self.path(name);
        Ok(write_atomic(&p, b)?)
    }

    fn json(&mut self, name: &str, v: &Value) -> Result<(), CliError> {
        let mut s = serde_json::to_string_pretty(v).expect("serializable report");
        s.push('\n');
        self.bytes(name, s.as_bytes())
    }

    fn field(&mut self, name: &str, f: &ScalarField) -> Result<(), CliError> {
        let p = self.path(name);
        Ok(write_field(&p, f)?)
    }

    fn pgm(&mut self, name: &str, f: &ScalarField, rect: &tat_core::IndexRect) -> Result<(), CliError> {
        let p = self.path(name);
        self.written.push(format!("{}.scale.json", p.display()));
        Ok(write_pgm(&p, f, rect)?)
    }
}

fn jsonl(lines: &[Value]) -> String {
    lines.iter().map(|v| v.to_string() + "\n").collect()
}

fn header(cfg: &Config, command: &str) -> Value {
    json!({ "command": command, "config": cfg.echo() })
}

fn grid_json(g: &Grid) -> Value {
    json!({ "nx": g.nx, "ny": g.ny, "dx": g.dx, "dy": g.dy, "pad": g.pad(), "omega": [g.omega.nx(), g.omega.ny()] })
}

fn grid(cfg: &Config, pad: usize) -> Result<Grid, CliError> {
    let (nx, ny): (usize, usize) = (cfg.get("grid.nx")?, cfg.get("grid.ny")?);
    let (lx, ly): (f64, f64) = (cfg.get("grid.lx")?, cfg.get("grid.ly")?);
    if nx < 5 || ny < 5 {
        return Err(CliError::Validation("grid.nx and grid.ny must be at least 5".into()));
    }
    if !(lx > 0.0 && ly > 0.0 && lx.is_finite() && ly.is_finite()) {
        return Err(CliError::Validation("grid.lx and grid.ly must be positive".into()));
    }
    Ok(Grid::padded(nx, ny, lx / (nx - 1) as f64, ly / (ny - 1) as f64, pad)?)
}

fn fixed_pad(cfg: &Config) -> Result<usize, CliError> {
    Ok(cfg.auto("grid.pad")?.unwrap_or(DEFAULT_PAD))
}

/// Ω̄ of `g` must match the configured grid or the grid of another input.
fn same_omega(a: &Grid, b: &Grid, what: &str) -> Result<(), CliError> {
    let close = |x: f64, y: f64| (x - y).abs() <= 1e-12 * x.abs().max(y.abs());
    if a.omega.nx() != b.omega.nx() || a.omega.ny() != b.omega.ny() || !close(a.dx, b.dx) || !close(a.dy, b.dy) {
        return Err(CliError::Validation(format!(
            "{what}: Ω̄ is {}×{} with spacing ({}, {}), expected {}×{} with spacing ({}, {})",
            a.omega.nx(),
            a.omega.ny(),
            a.dx,
            a.dy,
            b.omega.nx(),
            b.omega.ny(),
            b.dx,
            b.dy
        )));
    }
    Ok(())
}

fn medium_params(cfg: &Config) -> Result<(MediumKind, MediumParams), CliError> {
    let kind = cfg.str("medium.kind").parse::<MediumKind>()?;
    let p = MediumParams {
        c0: cfg.get("medium.c0")?,
        amp: cfg.get("medium.amp")?,
        radius: cfg.get("medium.radius")?,
        anisotropy: cfg.get("medium.anisotropy")?,
        q_scale: cfg.get("medium.q_scale")?,
        count: cfg.get("medium.count")?,
        seed: cfg.get("medium.seed")?,
    };
    Ok((kind, p))
}

/// The medium from `input.medium`, or generated from `medium.*`, on `g`.
fn medium_on(cfg: &Config, g: &Grid) -> Result<Medium, CliError> {
    match cfg.path("input.medium") {
        Some(p) => {
            let m = read_medium(p)?;
            same_omega(m.grid(), g, "input.medium")?;
            Ok(m.with_pad(g.pad())?)
        }
        None => {
            let (kind, p) = medium_params(cfg)?;
            Ok(make_medium(g, kind, &p)?)
        }
    }
}

fn phantom_on(cfg: &Config, g: &Grid) -> Result<ScalarField, CliError> {
    match cfg.path("input.phantom") {
        Some(p) => {
            let f = read_field(p)?;
            same_omega(&f.grid, g, "input.phantom")?;
            Ok(f.with_pad(g.pad())?)
        }
        None => {
            let kind = cfg.str("phantom.kind").parse::<PhantomKind>()?;
            let (fx, fy) = cfg.fractions("phantom.support")?;
            let k = g.omega_fraction_rect(fx, fy)?;
            let params = PhantomParams { count: cfg.get("phantom.count")?, angle: cfg.get::<f64>("phantom.angle")? * PI / 180.0 };
            Ok(make_phantom(g, kind, k, cfg.get("phantom.seed")?, params)?)
        }
    }
}

fn field_input(cfg: &Config, key: &str, g: &Grid) -> Result<Option<ScalarField>, CliError> {
    match cfg.path(key) {
        Some(p) => {
            let f = read_field(p)?;
            same_omega(&f.grid, g, key)?;
            Ok(Some(f.with_pad(g.pad())?))
        }
        None => Ok(None),
    }
}

fn require<'a>(cfg: &'a Config, key: &str) -> Result<&'a Path, CliError> {
    cfg.path(key).ok_or_else(|| CliError::Validation(format!("{key} is required")))
}

/// `gset.arcs` together with `gset.side`/`gset.s_const`; `None` when neither is set.
fn measurement_set(cfg: &Config, g: &Grid) -> Result<Option<MeasurementSet>, CliError> {
    let mut arcs: Vec<ArcSpec> = Vec::new();
    for a in cfg.str("gset.arcs").split(',').map(str::trim).filter(|a| !a.is_empty()) {
        arcs.push(a.parse()?);
    }
    let side = cfg.str("gset.side");
    let s: f64 = cfg.get("gset.s_const")?;
    let extra = match side {
        "none" => None,
        "all" => Some(MeasurementSet::full(g, s)?),
        other => Some(MeasurementSet::from_arcs(g, &[format!("{other}:0:1:{s}").parse()?])?),
    };
    let from_arcs = if arcs.is_empty() { None } else { Some(MeasurementSet::from_arcs(g, &arcs)?) };
    Ok(match (from_arcs, extra) {
        (Some(a), Some(b)) => Some(a.union(&b)?),
        (a, b) => a.or(b),
    })
}

fn phantom(cfg: &Config, out: &mut Out) -> Result<(), CliError> {
    let g = grid(cfg, fixed_pad(cfg)?)?;
    let f = phantom_on(cfg, &g)?;
    let m = Medium::identity(&g);
    out.field("phantom.f64f", &f)?;
    out.pgm("phantom.pgm", &f, &g.omega)?;
    let mut rep = header(cfg, "phantom");
    rep["grid"] = grid_json(&g);
    rep["max"] = json!(f.max_abs());
    rep["hd_norm_euclidean"] = json!(hd(&m, &f)?);
    out.json("phantom.json", &rep)
}

fn medium(cfg: &Config, out: &mut Out) -> Result<(), CliError> {
    let g = grid(cfg, fixed_pad(cfg)?)?;
    let m = medium_on(cfg, &g)?;
    write_medium(&out.path("medium.tatm"), &m)?;
    out.pgm("medium_c.pgm", &m.c, &g.omega)?;
    let t = domain_t(&m, cfg.get("rays.n_boundary")?, cfg.get("rays.n_directions")?, RayOptions::default())?;
    let mut rep = header(cfg, "medium");
    rep["grid"] = grid_json(&g);
    rep["c_min"] = json!(m.min_speed_in_omega());
    rep["c_max"] = json!(m.max_speed_in_omega());
    rep["isotropic"] = json!(m.is_isotropic());
    rep["t_omega"] = json!(t.t_omega);
    rep["trapped"] = json!(t.trapped.len());
    out.json("medium.json", &rep)
}

/// Medium padded for a solve up to `t_final`, with the time axis.
fn solve_setup(cfg: &Config, t_final: f64) -> Result<(Medium, TimeAxis, usize), CliError> {
    let trial = medium_on(cfg, &grid(cfg, DEFAULT_PAD)?)?;
    let need = required_pad(&trial, t_final);
    let pad = match cfg.auto::<usize>("grid.pad")? {
        Some(p) if p < need => return Err(TatError::Padding { pad: p, needed: need, t_final }.into()),
        Some(p) => p,
        None => need + 2,
    };
    let m = trial.with_pad(pad)?;
    let dt = match cfg.auto::<f64>("solve.dt")? {
        Some(dt) => {
            let limit = stability_limit(&m);
            if !(dt > 0.0) || dt > limit {
                return Err(TatError::Cfl { dt, limit }.into());
            }
            dt
        }
        None => cfg_dt(cfg, &m)?,
    };
    Ok((m, TimeAxis::new(t_final, dt)?, need))
}

fn cfg_dt(cfg: &Config, m: &Medium) -> Result<f64, CliError> {
    let step = cfl_dt(m, cfg.get("solve.safety")?)?;
    if step.unguaranteed {
        log::warn!("CFL safety {} exceeds the guaranteed range", step.safety);
    }
    Ok(step.dt)
}

fn time_json(t: &TimeAxis) -> Value {
    json!({ "T": t.t_final(), "dt": t.dt, "nt": t.nt })
}

fn simulate(cfg: &Config, out: &mut Out) -> Result<(), CliError> {
    let t_final: f64 = cfg.get("solve.T")?;
    let (m, time, need) = solve_setup(cfg, t_final)?;
    let f = phantom_on(cfg, m.grid())?;
    let start = Instant::now();
    let sol = forward_solve(&m, &f, &time, SolveOptions { energy_log: true })?;
    info!("forward solve: {} steps in {:.2}s", time.nt, start.elapsed().as_secs_f64());
    write_trace(&out.path("trace.trc1"), &sol.trace)?;
    let mut log = sol.energy_omega.clone();
    log.extend_from_slice(&sol.energy_full);
    let csv = cfg.comment_block() + &energy_csv(&log);
    out.bytes("energy.csv", csv.as_bytes())?;
    out.field("final_u.f64f", &sol.final_state.u)?;
    out.field("final_ut.f64f", &sol.final_state.ut)?;
    let e0 = sol.energy_omega.first().map(|e| e.total);
    let et = sol.energy_omega.last().map(|e| e.total);
    let mut rep = header(cfg, "simulate");
    rep["grid"] = grid_json(m.grid());
    rep["required_pad"] = json!(need);
    rep["time"] = time_json(&time);
    rep["energy_omega_0"] = json!(e0);
    rep["energy_omega_T"] = json!(et);
    rep["trace_max"] = json!(sol.trace.max_abs());
    out.json("simulate.json", &rep)
}

/// Medium on the grid the trace was recorded on.
fn trace_setup(cfg: &Config) -> Result<(BoundaryTrace, Medium), CliError> {
    let trace = read_trace(require(cfg, "input.trace")?)?;
    let m = medium_on(cfg, &trace.grid)?;
    let need = required_pad(&m, trace.time.t_final());
    if trace.grid.pad() < need {
        return Err(TatError::Padding { pad: trace.grid.pad(), needed: need, t_final: trace.time.t_final() }.into());
    }
    let limit = stability_limit(&m);
    if trace.time.dt > limit {
        return Err(TatError::Cfl { dt: trace.time.dt, limit }.into());
    }
    Ok((trace, m))
}

fn write_reconstruction(cfg: &Config, out: &mut Out, m: &Medium, time: &TimeAxis, rec: &Reconstruction) -> Result<(), CliError> {
    let g = m.grid();
    out.field("recon.f64f", &rec.f)?;
    out.pgm("recon.pgm", &rec.f, &g.omega)?;
    for (k, f) in rec.iterates.iter().enumerate() {
        out.pgm(&format!("iterate_{k:03}.pgm"), f, &g.omega)?;
    }
    write_report(cfg, out, time, &rec.report)
}

fn write_report(cfg: &Config, out: &mut Out, time: &TimeAxis, report: &tat_core::reconstruct::ReconstructionReport) -> Result<(), CliError> {
    out.bytes("recon.csv", (cfg.comment_block() + &report.csv()).as_bytes())?;
    let mut head = header(cfg, "reconstruct");
    head["time"] = time_json(time);
    let mut lines = vec![head];
    lines.extend(report.iterations.iter().map(|r| serde_json::to_value(r).expect("serializable record")));
    lines.push(json!({
        "outcome": report.outcome,
        "masked": report.masked,
        "energy_ratio": report.energy_ratio,
        "final_error_hd": report.final_error_hd(),
    }));
    out.bytes("recon.jsonl", jsonl(&lines).as_bytes())
}

fn reconstruct(cfg: &Config, out: &mut Out) -> Result<(), CliError> {
    let (trace, m) = trace_setup(cfg)?;
    let truth = field_input(cfg, "input.truth", m.grid())?;
    let opts = NeumannOptions { max_iter: cfg.get("recon.iters")?, rel_update_tol: cfg.get("recon.tol")?, ground_truth: truth.as_ref(), cg: cg_settings(cfg)? };
    let keep: bool = cfg.get("recon.render")?;
    let start = Instant::now();
    let result = match cfg.str("recon.method") {
        "neumann" => neumann_reconstruct(&m, &trace, opts, keep),
        "masked" => {
            let set = measurement_set(cfg, m.grid())?
                .ok_or_else(|| CliError::Validation("masked reconstruction needs gset.arcs or gset.side".into()))?;
            masked_reconstruct(&m, &trace, &set, opts, keep)
        }
        other => return Err(CliError::Validation(format!("unknown recon.method '{other}'"))),
    };
    info!("reconstruction finished in {:.2}s", start.elapsed().as_secs_f64());
    match result {
        Ok(rec) => write_reconstruction(cfg, out, &m, &trace.time, &rec),
        Err(TatError::Diverged { report }) => {
            // Keep the record of the failed run before reporting it.
            write_report(cfg, out, &trace.time, &report)?;
            Err(TatError::Diverged { report }.into())
        }
        Err(e) => Err(e.into()),
    }
}

fn cg_settings(cfg: &Config) -> Result<CgSettings, CliError> {
    Ok(CgSettings { tol: cfg.get("recon.cg_tol")?, max_iter: cfg.get("recon.cg_max_iter")? })
}

fn errors(m: &Medium, f: &ScalarField, truth: Option<&ScalarField>) -> Result<Value, CliError> {
    let Some(t) = truth else { return Ok(Value::Null) };
    let d = f.sub(t);
    Ok(json!({ "hd": hd(m, &d)? / hd(m, t)?, "l2": l2_norm(m, &d)? / l2_norm(m, t)? }))
}

fn timereverse(cfg: &Config, out: &mut Out) -> Result<(), CliError> {
    let (trace, m) = trace_setup(cfg)?;
    let truth = field_input(cfg, "input.truth", m.grid())?;
    let a = pseudo_inverse_a_with(&m, &trace, cg_settings(cfg)?)?;
    let a0 = naive_time_reversal_a0(&m, &trace, cfg.get("recon.cutoff")?)?;
    out.field("timereverse_a.f64f", &a)?;
    out.field("timereverse_a0.f64f", &a0.f)?;
    out.pgm("timereverse_a.pgm", &a, &m.grid().omega)?;
    let mut rep = header(cfg, "timereverse");
    rep["time"] = time_json(&trace.time);
    rep["a0_compatible"] = json!(a0.compatible);
    rep["a0_mismatch"] = json!(a0.mismatch);
    rep["error_a"] = errors(&m, &a, truth.as_ref())?;
    rep["error_a0"] = errors(&m, &a0.f, truth.as_ref())?;
    out.json("timereverse.json", &rep)
}

fn rays(cfg: &Config, out: &mut Out) -> Result<(), CliError> {
    let g = grid(cfg, fixed_pad(cfg)?)?;
    let m = medium_on(cfg, &g)?;
    let t = domain_t(&m, cfg.get("rays.n_boundary")?, cfg.get("rays.n_directions")?, RayOptions::default())?;
    let x = [cfg.get("rays.x")?, cfg.get("rays.y")?];
    let n: usize = cfg.get("rays.fan")?;
    if n == 0 {
        return Err(CliError::Validation("rays.fan must be positive".into()));
    }
    let mut csv = cfg.comment_block() + "ray,theta,t,x,y\n";
    let mut lines = vec![header(cfg, "rays")];
    let opts = RayOptions { record_path: true, ..RayOptions::default() };
    for r in 0..n {
        let theta = 2.0 * PI * r as f64 / n as f64;
        let ray = trace_geodesic(&m, PhasePoint::from_angle(&m, x, theta)?, Sign::Plus, opts)?;
        for p in &ray.path {
            csv.push_str(&format!("{r},{theta:e},{:e},{:e},{:e}\n", p[0], p[1], p[2]));
        }
        lines.push(json!({
            "ray": r,
            "theta": theta,
            "exit": ray.exit,
            "trapped": ray.trapped,
            "hamiltonian_drift": ray.hamiltonian_drift,
        }));
    }
    lines.push(json!({
        "t_omega": t.t_omega,
        "argmax": t.argmax,
        "n_rays": t.n_rays,
        "trapped": t.trapped.len(),
    }));
    out.bytes("rays.csv", csv.as_bytes())?;
    out.bytes("rays.jsonl", jsonl(&lines).as_bytes())
}

fn visibility(cfg: &Config, out: &mut Out) -> Result<(), CliError> {
    let g = grid(cfg, fixed_pad(cfg)?)?;
    let m = medium_on(cfg, &g)?;
    let set = measurement_set(cfg, &g)?.ok_or_else(|| CliError::Validation("visibility needs gset.arcs or gset.side".into()))?;
    let (fx, fy) = cfg.fractions("vis.support")?;
    let k = g.omega_fraction_rect(fx, fy)?;
    let uniq = uniqueness_condition_check(&m, &set, k)?;
    let census = stability_condition_map(&m, &set, k, cfg.get("vis.directions")?)?;
    out.pgm("visibility_worst.pgm", &census.worst_field(&g), &k)?;
    out.pgm("visibility_mean.pgm", &census.mean_field(&g), &k)?;
    out.pgm("uniqueness.pgm", &uniq.field(&g), &g.omega)?;
    let min_worst = census.worst.iter().copied().fold(f64::INFINITY, f64::min);
    let mut lines = vec![header(cfg, "visibility")];
    lines.push(json!({
        "uniqueness": uniq.verdict,
        "stability": census.verdict,
        "delta": census.delta,
        "n_directions": census.n_directions,
        "min_worst_symbol": min_worst,
        "failing": census.failing.len(),
    }));
    lines.extend(census.failing.iter().map(|d| serde_json::to_value(d).expect("serializable direction")));
    out.bytes("visibility.jsonl", jsonl(&lines).as_bytes())
}

fn report(cfg: &Config, out: &mut Out) -> Result<(), CliError> {
    let f = read_field(require(cfg, "input.field")?)?;
    let g = f.grid;
    let m = medium_on(cfg, &g)?;
    let truth = field_input(cfg, "input.truth", &g)?;
    out.pgm("field.pgm", &f, &g.omega)?;
    if let Some(t) = &truth {
        out.pgm("error.pgm", &f.sub(t), &g.omega)?;
    }
    let mut rep = header(cfg, "report");
    rep["grid"] = grid_json(&g);
    rep["hd_norm"] = json!(hd(&m, &f)?);
    rep["l2_norm"] = json!(l2_norm(&m, &f)?);
    rep["max_abs"] = json!(f.max_abs());
    rep["relative_error"] = errors(&m, &f, truth.as_ref())?;
    out.json("report.json", &rep)
}
