//! Leapfrog time stepping of `u_tt + P u = 0`.
//!
//! Forward solves run on the whole padded lattice with a hard zero wall;
//! backward solves run on Ω̄ only, with the boundary trace injected on ∂Ω at
//! every level. Both use the same [`Stencil`] so that the interior
//! arithmetic of the two directions is identical and a forward solve
//! followed by a backward solve from its exact final state reproduces the
//! initial field up to rounding.

use serde::{Deserialize, Serialize};

use crate::energy::{EnergyReport, WaveState};
use crate::error::{invalid, Result, TatError};
use crate::grid::{Grid, Region, ScalarField};
use crate::medium::Medium;
use crate::operator::{Stencil, DIRICHLET_TOL};

/// A time step chosen from the CFL formula.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CflStep {
    pub dt: f64,
    pub safety: f64,
    /// Set when `safety ≥ 1`: the step is accepted but stability is not guaranteed.
    pub unguaranteed: bool,
}

/// `dt = safety · min(dx, dy) / (c_max · √(max g^ii) · √2)`.
pub fn cfl_dt(medium: &Medium, safety: f64) -> Result<CflStep> {
    if !(safety > 0.0 && safety.is_finite()) {
        return invalid(format!("CFL safety factor must be positive, got {safety}"));
    }
    let g = medium.grid();
    let c_max = medium.c_max();
    let gi = medium.g_inv_max();
    if !(c_max > 0.0 && gi > 0.0 && c_max.is_finite() && gi.is_finite()) {
        return invalid("degenerate medium");
    }
    let dt = safety * g.dx.min(g.dy) / (c_max * gi.sqrt() * std::f64::consts::SQRT_2);
    if safety >= 1.0 {
        log::warn!("CFL safety {safety} ≥ 1: stability is not guaranteed");
    }
    Ok(CflStep { dt, safety, unguaranteed: safety >= 1.0 })
}

/// Largest stable leapfrog step `2/√λ_max`, with `λ_max` bounded by the
/// Gershgorin row sums of `P` over the lattice.
pub fn stability_limit(medium: &Medium) -> f64 {
    let g = medium.grid();
    let (idx2, idy2) = (1.0 / (g.dx * g.dx), 1.0 / (g.dy * g.dy));
    let node_w = |k: usize| {
        let (g11, g22) = (medium.g11.values[k], medium.g22.values[k]);
        ((g22 / g11).sqrt(), (g11 / g22).sqrt())
    };
    let mut lam: f64 = 0.0;
    for i in 1..g.nx - 1 {
        for j in 1..g.ny - 1 {
            let k = g.idx(i, j);
            let (wxk, wyk) = node_w(k);
            let sx = 0.5 * (wxk + node_w(g.idx(i + 1, j)).0) + 0.5 * (wxk + node_w(g.idx(i - 1, j)).0);
            let sy = 0.5 * (wyk + node_w(g.idx(i, j + 1)).1) + 0.5 * (wyk + node_w(g.idx(i, j - 1)).1);
            let c = medium.c.values[k];
            let s = (medium.g11.values[k] * medium.g22.values[k]).sqrt();
            let row = 2.0 * c * c / s * (sx * idx2 + sy * idy2) + medium.q.values[k];
            lam = lam.max(row);
        }
    }
    2.0 / lam.sqrt()
}

/// Uniform time levels `t_n = n·dt`, `n = 0..=nt`, with `nt·dt = T`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeAxis {
    pub nt: usize,
    pub dt: f64,
}

impl TimeAxis {
    /// The coarsest uniform axis on `[0, T]` whose step does not exceed `dt_max`.
    pub fn new(t_final: f64, dt_max: f64) -> Result<Self> {
        if !(t_final > 0.0 && t_final.is_finite()) {
            return invalid(format!("final time must be positive, got {t_final}"));
        }
        if !(dt_max > 0.0) {
            return invalid("time step must be positive");
        }
        let nt = ((t_final / dt_max) - 1e-9).ceil().max(1.0) as usize;
        Ok(TimeAxis { nt, dt: t_final / nt as f64 })
    }

    pub fn t_final(&self) -> f64 {
        self.nt as f64 * self.dt
    }

    pub fn time(&self, n: usize) -> f64 {
        n as f64 * self.dt
    }
}

/// Boundary values `h(t_n, x_b)` on the perimeter nodes of Ω̄.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryTrace {
    pub grid: Grid,
    pub nodes: Vec<(usize, usize)>,
    pub time: TimeAxis,
    /// `(nt + 1) × nb`, time-major.
    pub values: Vec<f64>,
}

impl BoundaryTrace {
    pub fn zeros(grid: &Grid, time: TimeAxis) -> Self {
        let nodes = grid.boundary_nodes();
        let values = vec![0.0; (time.nt + 1) * nodes.len()];
        BoundaryTrace { grid: *grid, nodes, time, values }
    }

    pub fn from_values(grid: &Grid, time: TimeAxis, values: Vec<f64>) -> Result<Self> {
        let mut t = BoundaryTrace::zeros(grid, time);
        if values.len() != t.values.len() {
            return Err(TatError::Shape(format!(
                "trace has {} values, expected {}",
                values.len(),
                t.values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(TatError::NonFinite("boundary trace"));
        }
        t.values = values;
        Ok(t)
    }

    pub fn nb(&self) -> usize {
        self.nodes.len()
    }

    pub fn row(&self, n: usize) -> &[f64] {
        let nb = self.nb();
        &self.values[n * nb..(n + 1) * nb]
    }

    pub fn row_mut(&mut self, n: usize) -> &mut [f64] {
        let nb = self.nb();
        &mut self.values[n * nb..(n + 1) * nb]
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn norm(&self) -> f64 {
        (self.values.iter().map(|v| v * v).sum::<f64>() * self.time.dt).sqrt()
    }

    pub fn sub(&self, other: &BoundaryTrace) -> Result<BoundaryTrace> {
        self.check_compatible(other)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        Ok(BoundaryTrace { values, ..self.clone() })
    }

    /// Pointwise product with a mask on the same `(t, node)` lattice.
    pub fn masked(&self, mask: &[f64]) -> Result<BoundaryTrace> {
        if mask.len() != self.values.len() {
            return Err(TatError::Shape("mask and trace lattices differ".into()));
        }
        let values = self.values.iter().zip(mask).map(|(a, b)| a * b).collect();
        Ok(BoundaryTrace { values, ..self.clone() })
    }

    pub fn check_compatible(&self, other: &BoundaryTrace) -> Result<()> {
        if self.grid != other.grid || self.time != other.time {
            return Err(TatError::Shape("traces live on different lattices".into()));
        }
        Ok(())
    }

    /// Physical coordinates of the boundary nodes.
    pub fn node_coords(&self) -> Vec<(f64, f64)> {
        self.nodes.iter().map(|&(i, j)| self.grid.coords(i, j)).collect()
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SolveOptions {
    /// Record `E_Ω` (and `E_full` for forward solves) at every level.
    pub energy_log: bool,
}

#[derive(Debug, Clone)]
pub struct ForwardSolution {
    pub trace: BoundaryTrace,
    /// `(u, u_t)` at `t = T`, restricted to Ω̄ (zero elsewhere).
    pub final_state: WaveState,
    pub energy_omega: Vec<EnergyReport>,
    pub energy_full: Vec<EnergyReport>,
}

#[derive(Debug, Clone)]
pub struct BackwardSolution {
    /// `v(0, ·)` on Ω̄, zero elsewhere.
    pub v0: ScalarField,
    /// Largest `|final_u − h(T)|` on ∂Ω, relative to the data scale.
    pub compat_mismatch: f64,
    pub compatible: bool,
    /// `E_Ω` at levels `nt−1` down to `1`.
    pub energy_log: Vec<EnergyReport>,
}

/// Relative mismatch above which final data and trace count as incompatible.
pub const COMPAT_TOL: f64 = 1e-8;

/// Minimum padding (nodes) so outer-wall reflections cannot reach ∂Ω before `T`.
pub fn required_pad(medium: &Medium, t_final: f64) -> usize {
    let g = medium.grid();
    (medium.max_speed() * t_final / (2.0 * g.dx.min(g.dy)) - 1e-9).ceil().max(1.0) as usize
}

fn check_dt(medium: &Medium, dt: f64) -> Result<()> {
    let limit = stability_limit(medium);
    if dt > limit {
        return Err(TatError::Cfl { dt, limit });
    }
    Ok(())
}

fn local_boundary(st: &Stencil, nodes: &[(usize, usize)]) -> Vec<usize> {
    nodes
        .iter()
        .map(|&(i, j)| (i - st.rect.i_lo) * st.my + (j - st.rect.j_lo))
        .collect()
}

/// Solves `u_tt + P u = 0`, `u(0) = f`, `u_t(0) = 0` on the padded lattice
/// and records `Λf = u|_{[0,T]×∂Ω}`.
pub fn forward_solve(medium: &Medium, f: &ScalarField, time: &TimeAxis, opts: SolveOptions) -> Result<ForwardSolution> {
    let g = *medium.grid();
    if f.grid != g {
        return Err(TatError::Shape("initial field and medium live on different grids".into()));
    }
    f.check_finite("initial field")?;
    let interior = g.omega.shrink(1).ok_or_else(|| TatError::Validation("Ω has no interior".into()))?;
    let outside = f.max_abs_outside(&interior);
    if outside > DIRICHLET_TOL * f.max_abs() && outside > 0.0 {
        return invalid(format!("initial field must be supported inside Ω (max |f| on or outside ∂Ω is {outside:.3e})"));
    }
    let t_final = time.t_final();
    let needed = required_pad(medium, t_final);
    if g.pad() < needed {
        return Err(TatError::Padding { pad: g.pad(), needed, t_final });
    }
    check_dt(medium, time.dt)?;

    let st = Stencil::new(medium, g.full_rect());
    let st_omega = Stencil::new(medium, g.omega);
    let nodes = g.boundary_nodes();
    let bidx: Vec<usize> = nodes.iter().map(|&(i, j)| g.idx(i, j)).collect();
    let nb = nodes.len();
    let mut trace = BoundaryTrace::zeros(&g, *time);

    let dt = time.dt;
    let dt2 = dt * dt;
    let n_levels = g.len();
    let mut prev = f.values.clone();
    let mut cur = vec![0.0; n_levels];
    st.taylor_step(&prev, &vec![0.0; n_levels], &mut cur, dt);
    let mut next = vec![0.0; n_levels];

    let record = |tr: &mut BoundaryTrace, n: usize, u: &[f64]| {
        let row = &mut tr.values[n * nb..(n + 1) * nb];
        for (r, &k) in row.iter_mut().zip(&bidx) {
            *r = u[k];
        }
    };
    record(&mut trace, 0, &prev);
    if time.nt >= 1 {
        record(&mut trace, 1, &cur);
    }

    let mut energy_omega = Vec::new();
    let mut energy_full = Vec::new();
    let log_energy = |n: usize, um: &[f64], u: &[f64], up: &[f64], eo: &mut Vec<EnergyReport>, ef: &mut Vec<EnergyReport>| {
        let ut: Vec<f64> = up.iter().zip(um).map(|(a, b)| (a - b) / (2.0 * dt)).collect();
        let t = time.time(n);
        let e_hd = st.dirichlet(u, u);
        let e_kin = st.l2(&ut, &ut);
        ef.push(EnergyReport { t, e_hd, e_kin, total: e_hd + e_kin, region: Region::Full });
        let uo = extract_window(&st_omega, &g, u);
        let uto = extract_window(&st_omega, &g, &ut);
        let e_hd = st_omega.dirichlet(&uo, &uo);
        let e_kin = st_omega.l2(&uto, &uto);
        eo.push(EnergyReport { t, e_hd, e_kin, total: e_hd + e_kin, region: Region::Omega });
    };
    if opts.energy_log {
        // u_{-1} = u_1 by evenness in time.
        log_energy(0, &cur, &prev, &cur, &mut energy_omega, &mut energy_full);
    }

    // Levels: prev = n-1, cur = n, next = n+1.
    for n in 1..=time.nt {
        st.leapfrog(&prev, &cur, &mut next, dt2);
        if n < time.nt {
            record(&mut trace, n + 1, &next);
        }
        if opts.energy_log {
            log_energy(n, &prev, &cur, &next, &mut energy_omega, &mut energy_full);
        }
        if n < time.nt {
            std::mem::swap(&mut prev, &mut cur);
            std::mem::swap(&mut cur, &mut next);
        }
    }
    // Now cur = u^N, prev = u^{N-1}, next = u^{N+1}.
    let ut: Vec<f64> = next.iter().zip(&prev).map(|(a, b)| (a - b) / (2.0 * dt)).collect();
    let u_final = ScalarField { grid: g, values: cur }.restricted(&g.omega);
    let ut_final = ScalarField { grid: g, values: ut }.restricted(&g.omega);
    Ok(ForwardSolution {
        trace,
        final_state: WaveState { u: u_final, ut: ut_final, t: t_final },
        energy_omega,
        energy_full,
    })
}

fn extract_window(st: &Stencil, g: &Grid, full: &[f64]) -> Vec<f64> {
    let r = st.rect;
    let mut out = Vec::with_capacity(st.len());
    for i in r.i_lo..=r.i_hi {
        let base = g.idx(i, r.j_lo);
        out.extend_from_slice(&full[base..base + st.my]);
    }
    out
}

/// Solves `v_tt + P v = 0` in Ω backward from `t = T` with
/// `v|_{∂Ω} = h`, `v(T) = final_u`, `v_t(T) = final_ut`, returning `v(0)`.
///
/// Trace values take precedence on ∂Ω at `t = T`; a mismatch with
/// `final_u` there is reported (and logged) but not fatal.
pub fn backward_dirichlet_solve(
    medium: &Medium,
    trace: &BoundaryTrace,
    final_u: &ScalarField,
    final_ut: &ScalarField,
    opts: SolveOptions,
) -> Result<BackwardSolution> {
    let g = *medium.grid();
    if trace.grid != g || final_u.grid != g || final_ut.grid != g {
        return Err(TatError::Shape("trace, final data and medium must share a grid".into()));
    }
    final_u.check_finite("final value")?;
    final_ut.check_finite("final velocity")?;
    let time = trace.time;
    check_dt(medium, time.dt)?;

    let st = Stencil::new(medium, g.omega);
    let bidx = local_boundary(&st, &trace.nodes);
    let dt = time.dt;
    let dt2 = dt * dt;
    let n = st.len();
    let nt = time.nt;

    let inject = |buf: &mut [f64], level: usize| {
        for (&k, &v) in bidx.iter().zip(trace.row(level)) {
            buf[k] = v;
        }
    };

    let mut upper = st.extract(final_u);
    let mut mismatch: f64 = 0.0;
    for (&k, &v) in bidx.iter().zip(trace.row(nt)) {
        mismatch = mismatch.max((upper[k] - v).abs());
    }
    let scale = st
        .extract(final_u)
        .iter()
        .fold(trace.max_abs(), |m, v| m.max(v.abs()))
        .max(f64::MIN_POSITIVE);
    let compat_mismatch = mismatch / scale;
    let compatible = compat_mismatch <= COMPAT_TOL;
    if !compatible {
        log::warn!("final data disagree with the trace at t = T on ∂Ω (relative mismatch {compat_mismatch:.3e})");
    }
    inject(&mut upper, nt);

    let vel = st.extract(final_ut);
    let mut mid = vec![0.0; n];
    st.taylor_step(&upper, &vel, &mut mid, dt);
    inject(&mut mid, nt - 1);

    let mut energy_log = Vec::new();
    let mut lower = vec![0.0; n];
    // upper = level k+1, mid = level k, lower = level k-1.
    for k in (1..nt).rev() {
        st.leapfrog(&upper, &mid, &mut lower, dt2);
        inject(&mut lower, k - 1);
        if opts.energy_log {
            let ut: Vec<f64> = upper.iter().zip(&lower).map(|(a, b)| (a - b) / (2.0 * dt)).collect();
            let e_hd = st.dirichlet(&mid, &mid);
            let e_kin = st.l2(&ut, &ut);
            energy_log.push(EnergyReport { t: time.time(k), e_hd, e_kin, total: e_hd + e_kin, region: Region::Omega });
        }
        std::mem::swap(&mut upper, &mut mid);
        std::mem::swap(&mut mid, &mut lower);
    }
    Ok(BackwardSolution { v0: st.embed(&g, &mid), compat_mismatch, compatible, energy_log })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup(n: usize, pad: usize) -> (Medium, ScalarField) {
        let h = 1.0 / (n - 1) as f64;
        let g = Grid::padded(n, n, h, h, pad).unwrap();
        let m = Medium::identity(&g);
        let f = ScalarField::from_fn(&g, |x, y| {
            let r2 = (x - 0.5).powi(2) + (y - 0.5).powi(2);
            if r2 < 0.09 {
                (-(r2) / (2.0 * 0.06f64.powi(2))).exp() * (1.0 - r2 / 0.09).powi(3)
            } else {
                0.0
            }
        });
        (m, f)
    }

    #[test]
    fn cfl_formula_instances() {
        let g = Grid::padded(33, 33, 0.1, 0.1, 2).unwrap();
        let m = Medium::identity(&g);
        let s = cfl_dt(&m, 0.5).unwrap();
        assert!((s.dt - 0.05 / 2f64.sqrt()).abs() < 1e-15);
        assert!(!s.unguaranteed);
        let m2 = Medium::from_profile(&g, crate::medium::Profile::Constant { c0: 2.0 }).unwrap();
        assert!((cfl_dt(&m2, 0.5).unwrap().dt - 0.5 * s.dt).abs() < 1e-15);
        assert!(cfl_dt(&m, 1.2).unwrap().unguaranteed);
        assert!(cfl_dt(&m, 0.0).is_err());
        assert!((stability_limit(&m) - 0.1 / 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn time_axis_hits_final_time() {
        let t = TimeAxis::new(1.7, 0.013).unwrap();
        assert!((t.t_final() - 1.7).abs() < 1e-12);
        assert!(t.dt <= 0.013);
    }

    #[test]
    fn zero_data_give_zero_everything() {
        let (m, _) = setup(24, 20);
        let time = TimeAxis::new(0.5, cfl_dt(&m, 0.5).unwrap().dt).unwrap();
        let z = ScalarField::zeros(m.grid());
        let fw = forward_solve(&m, &z, &time, SolveOptions::default()).unwrap();
        assert_eq!(fw.trace.max_abs(), 0.0);
        assert_eq!(fw.final_state.u.max_abs(), 0.0);
        let bw = backward_dirichlet_solve(&m, &fw.trace, &z, &z, SolveOptions::default()).unwrap();
        assert_eq!(bw.v0.max_abs(), 0.0);
    }

    #[test]
    fn rejects_bad_support_padding_and_cfl() {
        let (m, f) = setup(24, 4);
        let time = TimeAxis::new(1.0, cfl_dt(&m, 0.5).unwrap().dt).unwrap();
        assert!(matches!(forward_solve(&m, &f, &time, SolveOptions::default()), Err(TatError::Padding { .. })));
        let (m, _) = setup(24, 20);
        let ones = ScalarField::constant(m.grid(), 1.0);
        let time = TimeAxis::new(0.3, cfl_dt(&m, 0.5).unwrap().dt).unwrap();
        assert!(forward_solve(&m, &ones, &time, SolveOptions::default()).is_err());
        let big = TimeAxis::new(0.3, 2.0 * cfl_dt(&m, 1.0).unwrap().dt).unwrap();
        let (_, f) = setup(24, 20);
        assert!(matches!(forward_solve(&m, &f, &big, SolveOptions::default()), Err(TatError::Cfl { .. })));
    }

    #[test]
    fn forward_then_backward_is_reversible() {
        let (m, f) = setup(33, 24);
        let time = TimeAxis::new(0.6, cfl_dt(&m, 0.5).unwrap().dt).unwrap();
        let fw = forward_solve(&m, &f, &time, SolveOptions::default()).unwrap();
        assert!(fw.trace.max_abs() > 1e-6);
        let bw = backward_dirichlet_solve(&m, &fw.trace, &fw.final_state.u, &fw.final_state.ut, SolveOptions::default()).unwrap();
        assert!(bw.compatible);
        let err = bw.v0.sub(&f).max_abs();
        assert!(err < 1e-10 * f.max_abs(), "round trip error {err:e}");
    }

    #[test]
    fn incompatible_final_data_are_flagged_not_fatal() {
        let (m, f) = setup(33, 24);
        let time = TimeAxis::new(0.6, cfl_dt(&m, 0.5).unwrap().dt).unwrap();
        let fw = forward_solve(&m, &f, &time, SolveOptions::default()).unwrap();
        let z = ScalarField::zeros(m.grid());
        let bw = backward_dirichlet_solve(&m, &fw.trace, &z, &z, SolveOptions::default()).unwrap();
        assert!(!bw.compatible);
        assert!(bw.v0.values.iter().all(|v| v.is_finite()));
    }
}
