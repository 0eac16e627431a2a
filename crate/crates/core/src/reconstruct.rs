//! Time reversal and the Neumann-series inversion of `Λ`.
//!
//! `A h` runs the wave equation backward from `(φ, 0)`, where `φ` is the
//! harmonic extension of `h(T)`, with `h` imposed on ∂Ω. The error operator
//! `K = Id − AΛ` is never assembled; every application costs one forward
//! and one backward solve.

use std::time::Instant;

use serde::Serialize;

use crate::elliptic::{harmonic_extension, CgSettings};
use crate::energy::{energy, WaveState};
use crate::error::{invalid, Result, TatError};
use crate::grid::{Region, ScalarField};
use crate::medium::Medium;
use crate::operator::{dirichlet_form, inner_l2};
use crate::rays::measurement::{time_window, MeasurementSet};
use crate::wave::{backward_dirichlet_solve, forward_solve, BoundaryTrace, SolveOptions, TimeAxis};

/// An update counts as growing when it exceeds the previous one by this factor.
pub const GROWTH_SLACK: f64 = 1.02;
/// Consecutive growing updates that abort the iteration.
pub const GROWTH_STREAK: usize = 3;
/// Contraction estimates at or above this value count as stagnation.
pub const STALL_RATIO: f64 = 0.98;

/// Dirichlet seminorm over Ω̄; the `H_D` norm for fields vanishing on ∂Ω.
pub fn hd(medium: &Medium, f: &ScalarField) -> Result<f64> {
    Ok(dirichlet_form(medium, f, f, Region::Omega)?.max(0.0).sqrt())
}

fn l2(medium: &Medium, f: &ScalarField) -> Result<f64> {
    Ok(inner_l2(medium, f, f, Region::Omega)?.max(0.0).sqrt())
}

/// Keeps only the values at interior nodes of Ω.
pub fn zero_off_interior(f: &ScalarField) -> ScalarField {
    let g = f.grid;
    let mut out = ScalarField::zeros(&g);
    for (i, j) in g.omega.iter() {
        if g.omega.is_interior(i, j) {
            out.set(i, j, f.at(i, j));
        }
    }
    out
}

fn check_trace(medium: &Medium, trace: &BoundaryTrace) -> Result<()> {
    if trace.grid != *medium.grid() {
        return Err(TatError::Shape("trace and medium live on different grids".into()));
    }
    if trace.values.iter().any(|v| !v.is_finite()) {
        return Err(TatError::NonFinite("trace"));
    }
    Ok(())
}

/// `A h = v(0)`; the result carries `h(0)` on ∂Ω.
pub fn pseudo_inverse_a(medium: &Medium, trace: &BoundaryTrace) -> Result<ScalarField> {
    pseudo_inverse_a_with(medium, trace, CgSettings::default())
}

pub fn pseudo_inverse_a_with(medium: &Medium, trace: &BoundaryTrace, cg: CgSettings) -> Result<ScalarField> {
    check_trace(medium, trace)?;
    let g = *medium.grid();
    let phi = harmonic_extension(medium, trace.row(trace.time.nt), cg.tol, cg.max_iter)?.phi;
    let zero = ScalarField::zeros(&g);
    Ok(backward_dirichlet_solve(medium, trace, &phi, &zero, SolveOptions::default())?.v0)
}

#[derive(Debug, Clone)]
pub struct TimeReversal {
    pub f: ScalarField,
    /// False when the tapered trace does not vanish at `t = T`.
    pub compatible: bool,
    pub mismatch: f64,
}

/// `A₀ h`: zero final data and a trace tapered to zero over the last
/// `cutoff_width·T`.
pub fn naive_time_reversal_a0(medium: &Medium, trace: &BoundaryTrace, cutoff_width: f64) -> Result<TimeReversal> {
    check_trace(medium, trace)?;
    if !(0.0..=0.5).contains(&cutoff_width) {
        return invalid(format!("cutoff width {cutoff_width} outside [0, 0.5]"));
    }
    let t_final = trace.time.t_final();
    let mut tapered = trace.clone();
    if cutoff_width > 0.0 {
        for n in 0..=trace.time.nt {
            let w = time_window(trace.time.time(n), t_final, cutoff_width);
            tapered.row_mut(n).iter_mut().for_each(|v| *v *= w);
        }
    }
    let zero = ScalarField::zeros(medium.grid());
    let sol = backward_dirichlet_solve(medium, &tapered, &zero, &zero, SolveOptions::default())?;
    Ok(TimeReversal { f: sol.v0, compatible: sol.compatible, mismatch: sol.compat_mismatch })
}

/// `K f = f − A Λ f`.
pub fn apply_k(medium: &Medium, f: &ScalarField, time: &TimeAxis) -> Result<ScalarField> {
    let fw = forward_solve(medium, f, time, SolveOptions::default())?;
    Ok(f.sub(&pseudo_inverse_a(medium, &fw.trace)?))
}

/// Quantities from the proof of the contraction estimate, for one `f`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ContractionDiagnostics {
    /// `‖f‖_{H_D}`.
    pub f_norm: f64,
    /// `‖K f‖_{H_D}`.
    pub kf_norm: f64,
    /// `E_Ω(u, 0)`.
    pub e0: f64,
    /// `E_Ω(u, T)`.
    pub et: f64,
    /// `|(u^T − φ, φ)_{H_D}| / (‖u^T‖·‖φ‖)`.
    pub orthogonality: f64,
    /// `‖u^T − φ‖²_{H_D} + ‖u^T_t‖²_{L²}`.
    pub split_energy: f64,
}

impl ContractionDiagnostics {
    pub fn ratio(&self) -> f64 {
        if self.f_norm == 0.0 { 0.0 } else { self.kf_norm / self.f_norm }
    }

    pub fn energy_ratio(&self) -> f64 {
        if self.e0 == 0.0 { 0.0 } else { self.et / self.e0 }
    }
}

pub fn contraction_diagnostics(medium: &Medium, f: &ScalarField, time: &TimeAxis) -> Result<ContractionDiagnostics> {
    let g = *medium.grid();
    let fw = forward_solve(medium, f, time, SolveOptions::default())?;
    let e0 = energy(medium, &WaveState { u: f.clone(), ut: ScalarField::zeros(&g), t: 0.0 }, Region::Omega)?.total;
    let et = energy(medium, &fw.final_state, Region::Omega)?.total;
    let cg = CgSettings::default();
    let phi = harmonic_extension(medium, fw.trace.row(time.nt), cg.tol, cg.max_iter)?.phi;
    let ut = &fw.final_state.u;
    let diff = ut.sub(&phi);
    let cross = dirichlet_form(medium, &diff, &phi, Region::Omega)?;
    let scale = hd(medium, ut)? * hd(medium, &phi)?;
    let orthogonality = if scale == 0.0 { 0.0 } else { cross.abs() / scale };
    let split_energy = dirichlet_form(medium, &diff, &diff, Region::Omega)? + inner_l2(medium, &fw.final_state.ut, &fw.final_state.ut, Region::Omega)?;
    let zero = ScalarField::zeros(&g);
    let af = backward_dirichlet_solve(medium, &fw.trace, &phi, &zero, SolveOptions::default())?.v0;
    let kf = f.sub(&af);
    Ok(ContractionDiagnostics { f_norm: hd(medium, f)?, kf_norm: hd(medium, &kf)?, e0, et, orthogonality, split_energy })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Converged,
    Stalled,
    Diverged,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct IterationRecord {
    pub k: usize,
    /// `‖f_k − f_{k−1}‖ / ‖f_k‖` in `H_D` (`f_{−1} = 0`).
    pub rel_update: f64,
    /// `‖f_k − f_{k−1}‖ / ‖f_{k−1} − f_{k−2}‖`, an estimate of `‖K‖`.
    pub contraction: Option<f64>,
    pub rel_error_hd: Option<f64>,
    pub rel_error_l2: Option<f64>,
    /// Seconds spent on this iteration; kept out of the serialized forms so that
    /// written reports are reproducible.
    #[serde(skip)]
    pub wall_time: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReconstructionReport {
    pub iterations: Vec<IterationRecord>,
    pub outcome: Outcome,
    /// `E_Ω(u, T) / E_Ω(u, 0)` for the first iterate.
    pub energy_ratio: Option<f64>,
    pub masked: bool,
}

impl ReconstructionReport {
    pub fn csv(&self) -> String {
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:e}"));
        let mut s = String::from("k,rel_update,contraction,rel_error_hd,rel_error_l2\n");
        for r in &self.iterations {
            s.push_str(&format!(
                "{},{:e},{},{},{}\n",
                r.k,
                r.rel_update,
                opt(r.contraction),
                opt(r.rel_error_hd),
                opt(r.rel_error_l2)
            ));
        }
        s
    }

    pub fn json_lines(&self) -> String {
        self.iterations
            .iter()
            .map(|r| serde_json::to_string(r).unwrap_or_default() + "\n")
            .collect()
    }

    pub fn final_error_hd(&self) -> Option<f64> {
        self.iterations.last().and_then(|r| r.rel_error_hd)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct NeumannOptions<'a> {
    pub max_iter: usize,
    pub rel_update_tol: f64,
    pub ground_truth: Option<&'a ScalarField>,
    pub cg: CgSettings,
}

#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub f: ScalarField,
    pub report: ReconstructionReport,
    /// All iterates `f_0 … f_{k*}` when requested.
    pub iterates: Vec<ScalarField>,
}

/// `f₀ = A h`, `f_{k+1} = f_k + A(h − Λ f_k)`.
pub fn neumann_reconstruct(medium: &Medium, trace: &BoundaryTrace, opts: NeumannOptions<'_>, keep_iterates: bool) -> Result<Reconstruction> {
    check_trace(medium, trace)?;
    iterate(medium, trace, None, opts, keep_iterates)
}

/// Same iteration with `Λ` replaced by `χΛ`.
pub fn masked_reconstruct(
    medium: &Medium,
    trace: &BoundaryTrace,
    mask: &MeasurementSet,
    opts: NeumannOptions<'_>,
    keep_iterates: bool,
) -> Result<Reconstruction> {
    check_trace(medium, trace)?;
    if mask.grid != *medium.grid() {
        return Err(TatError::Shape("mask and medium live on different grids".into()));
    }
    let chi = mask.chi_lattice(&trace.time);
    let nb = trace.nb();
    if chi[trace.time.nt * nb..].iter().any(|&v| v != 0.0) {
        return invalid(format!(
            "mask does not vanish at T = {}; the largest budget is {}",
            trace.time.t_final(),
            mask.sup_s()
        ));
    }
    iterate(medium, trace, Some(&chi), opts, keep_iterates)
}

fn iterate(
    medium: &Medium,
    trace: &BoundaryTrace,
    chi: Option<&[f64]>,
    opts: NeumannOptions<'_>,
    keep_iterates: bool,
) -> Result<Reconstruction> {
    if opts.max_iter == 0 {
        return invalid("max_iter must be at least 1");
    }
    if let Some(t) = opts.ground_truth {
        if t.grid != *medium.grid() {
            return Err(TatError::Shape("ground truth on a different grid".into()));
        }
    }
    let time = trace.time;
    let data = match chi {
        Some(c) => trace.masked(c)?,
        None => trace.clone(),
    };
    let truth_norms = match opts.ground_truth {
        Some(t) => Some((hd(medium, t)?, l2(medium, t)?)),
        None => None,
    };
    let errors = |f: &ScalarField| -> Result<(Option<f64>, Option<f64>)> {
        match (opts.ground_truth, truth_norms) {
            (Some(t), Some((nh, nl))) => {
                let d = f.sub(t);
                Ok((Some(hd(medium, &d)? / nh.max(f64::MIN_POSITIVE)), Some(l2(medium, &d)? / nl.max(f64::MIN_POSITIVE))))
            }
            _ => Ok((None, None)),
        }
    };

    let start = Instant::now();
    let mut f = zero_off_interior(&pseudo_inverse_a_with(medium, &data, opts.cg)?);
    let mut update_norm = hd(medium, &f)?;
    let (e_hd, e_l2) = errors(&f)?;
    let mut records = vec![IterationRecord {
        k: 0,
        rel_update: if update_norm == 0.0 { 0.0 } else { 1.0 },
        contraction: None,
        rel_error_hd: e_hd,
        rel_error_l2: e_l2,
        wall_time: start.elapsed().as_secs_f64(),
    }];
    let mut iterates = if keep_iterates { vec![f.clone()] } else { Vec::new() };
    let mut energy_ratio = None;
    let mut outcome = Outcome::Stalled;
    let mut growth = 0usize;
    let mut stall = 0usize;
    if update_norm == 0.0 {
        outcome = Outcome::Converged;
    }

    let mut k = 0;
    while outcome != Outcome::Converged && k < opts.max_iter {
        k += 1;
        let t0 = Instant::now();
        let fw = forward_solve(medium, &f, &time, SolveOptions::default())?;
        if energy_ratio.is_none() {
            let g = *medium.grid();
            let e0 = energy(medium, &WaveState { u: f.clone(), ut: ScalarField::zeros(&g), t: 0.0 }, Region::Omega)?.total;
            let et = energy(medium, &fw.final_state, Region::Omega)?.total;
            energy_ratio = Some(if e0 > 0.0 { et / e0 } else { 0.0 });
        }
        let mut residual = data.sub(&fw.trace)?;
        if let Some(c) = chi {
            residual = residual.masked(c)?;
        }
        let step = zero_off_interior(&pseudo_inverse_a_with(medium, &residual, opts.cg)?);
        f = f.add(&step);
        let norm = hd(medium, &step)?;
        let f_norm = hd(medium, &f)?;
        let contraction = if update_norm > 0.0 { Some(norm / update_norm) } else { None };
        let rel_update = if norm == 0.0 { 0.0 } else { norm / f_norm.max(f64::MIN_POSITIVE) };
        update_norm = norm;
        let (e_hd, e_l2) = errors(&f)?;
        records.push(IterationRecord {
            k,
            rel_update,
            contraction,
            rel_error_hd: e_hd,
            rel_error_l2: e_l2,
            wall_time: t0.elapsed().as_secs_f64(),
        });
        if keep_iterates {
            iterates.push(f.clone());
        }
        log::debug!("iteration {k}: rel_update {rel_update:.3e}, contraction {contraction:?}");
        if rel_update < opts.rel_update_tol {
            outcome = Outcome::Converged;
            break;
        }
        match contraction {
            Some(r) if r > GROWTH_SLACK => {
                growth += 1;
                stall = 0;
            }
            Some(r) if r >= STALL_RATIO => {
                growth = 0;
                stall += 1;
            }
            _ => {
                growth = 0;
                stall = 0;
            }
        }
        if growth >= GROWTH_STREAK {
            let report = ReconstructionReport { iterations: records, outcome: Outcome::Diverged, energy_ratio, masked: chi.is_some() };
            return Err(TatError::Diverged { report: Box::new(report) });
        }
        if stall >= GROWTH_STREAK {
            log::warn!("iteration stalled: contraction estimate stays above {STALL_RATIO}");
            break;
        }
    }
    let report = ReconstructionReport { iterations: records, outcome, energy_ratio, masked: chi.is_some() };
    Ok(Reconstruction { f, report, iterates })
}
