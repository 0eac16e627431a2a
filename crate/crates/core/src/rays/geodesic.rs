//! Unit-speed geodesics of `c⁻²g` as bicharacteristics of
//! `H(x, ξ) = ½ c²(ξ₁²/g₁₁ + ξ₂²/g₂₂)` on the level set `H = ½`.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Result};
use crate::medium::{CoefficientSampler, Medium};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhasePoint {
    pub x: [f64; 2],
    pub xi: [f64; 2],
}

fn hamiltonian(s: &CoefficientSampler<'_>, x: [f64; 2], xi: [f64; 2]) -> f64 {
    let k = s.eval(x[0], x[1]);
    0.5 * k.c * k.c * (xi[0] * xi[0] / k.g11 + xi[1] * xi[1] / k.g22)
}

impl PhasePoint {
    /// Scales `xi` onto `H = ½`.
    pub fn normalized(medium: &Medium, x: [f64; 2], xi: [f64; 2]) -> Result<PhasePoint> {
        let h = hamiltonian(&medium.sampler(), x, xi);
        if !(h > 0.0 && h.is_finite()) {
            return invalid("codirection must be non-zero and finite");
        }
        let s = (2.0 * h).sqrt();
        Ok(PhasePoint { x, xi: [xi[0] / s, xi[1] / s] })
    }

    /// Unit codirection at polar angle `theta`.
    pub fn from_angle(medium: &Medium, x: [f64; 2], theta: f64) -> Result<PhasePoint> {
        Self::normalized(medium, x, [theta.cos(), theta.sin()])
    }

    /// Codirection whose geodesic leaves `x` with Euclidean velocity along `dir`.
    pub fn from_velocity(medium: &Medium, x: [f64; 2], dir: [f64; 2]) -> Result<PhasePoint> {
        let k = medium.sampler().eval(x[0], x[1]);
        Self::normalized(medium, x, [k.g11 * dir[0], k.g22 * dir[1]])
    }

    pub fn reversed(&self) -> PhasePoint {
        PhasePoint { x: self.x, xi: [-self.xi[0], -self.xi[1]] }
    }

    pub fn hamiltonian(&self, medium: &Medium) -> f64 {
        hamiltonian(&medium.sampler(), self.x, self.xi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Sign {
    Plus,
    Minus,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RayOptions {
    /// RK4 step; defaults to `0.25·min(dx,dy)/c_max`.
    pub step: Option<f64>,
    /// Trapping budget; defaults to `50·diam/c_min`.
    pub max_time: Option<f64>,
    pub record_path: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RayExit {
    pub time: f64,
    pub point: [f64; 2],
    pub xi: [f64; 2],
}

#[derive(Debug, Clone, Serialize)]
pub struct Ray {
    /// `(t, x, y)` at every step when requested.
    pub path: Vec<[f64; 3]>,
    pub exit: Option<RayExit>,
    pub trapped: bool,
    /// `max |H − H₀|` over the accepted steps.
    pub hamiltonian_drift: f64,
}

type State = [f64; 4];

fn rhs(s: &CoefficientSampler<'_>, y: &State) -> State {
    let k = s.eval(y[0], y[1]);
    let (x1, x2) = (y[2] / k.g11, y[3] / k.g22);
    let c2 = k.c * k.c;
    let e = y[2] * x1 + y[3] * x2;
    let mut out = [c2 * x1, c2 * x2, 0.0, 0.0];
    for d in 0..2 {
        out[2 + d] = -(k.c * k.dc[d] * e - 0.5 * c2 * (x1 * x1 * k.dg11[d] + x2 * x2 * k.dg22[d]));
    }
    out
}

fn rk4(s: &CoefficientSampler<'_>, y: &State, h: f64) -> State {
    let add = |a: &State, b: &State, f: f64| -> State { [a[0] + f * b[0], a[1] + f * b[1], a[2] + f * b[2], a[3] + f * b[3]] };
    let k1 = rhs(s, y);
    let k2 = rhs(s, &add(y, &k1, 0.5 * h));
    let k3 = rhs(s, &add(y, &k2, 0.5 * h));
    let k4 = rhs(s, &add(y, &k3, h));
    let mut out = *y;
    for d in 0..4 {
        out[d] += h / 6.0 * (k1[d] + 2.0 * k2[d] + 2.0 * k3[d] + k4[d]);
    }
    out
}

struct Box2 {
    lo: [f64; 2],
    hi: [f64; 2],
}

impl Box2 {
    /// Positive outside, non-positive on Ω̄.
    fn outside(&self, x: f64, y: f64) -> f64 {
        (self.lo[0] - x).max(x - self.hi[0]).max(self.lo[1] - y).max(y - self.hi[1])
    }
}

pub(crate) fn default_step(medium: &Medium) -> f64 {
    let g = medium.grid();
    0.25 * g.dx.min(g.dy) / medium.max_speed_in_omega()
}

pub(crate) fn default_max_time(medium: &Medium) -> f64 {
    50.0 * medium.grid().omega_diameter() / medium.min_speed_in_omega()
}

/// Follows `γ_{x,±ξ}` from `p` until it leaves Ω̄.
pub fn trace_geodesic(medium: &Medium, p: PhasePoint, sign: Sign, opts: RayOptions) -> Result<Ray> {
    let g = medium.grid();
    let (lo, hi) = g.omega_bounds();
    let bx = Box2 { lo, hi };
    let tol_x = 1e-12 * g.omega_diameter();
    if !(p.x[0].is_finite() && p.x[1].is_finite()) || bx.outside(p.x[0], p.x[1]) > tol_x {
        return invalid(format!("start point ({}, {}) is outside Ω̄", p.x[0], p.x[1]));
    }
    let h = opts.step.unwrap_or_else(|| default_step(medium));
    let max_time = opts.max_time.unwrap_or_else(|| default_max_time(medium));
    if !(h > 0.0 && max_time > 0.0) {
        return invalid("ray step and time budget must be positive");
    }
    let s = medium.sampler();
    let xi = match sign {
        Sign::Plus => p.xi,
        Sign::Minus => [-p.xi[0], -p.xi[1]],
    };
    let mut y: State = [p.x[0], p.x[1], xi[0], xi[1]];
    let h0 = hamiltonian(&s, p.x, xi);
    let mut drift: f64 = 0.0;
    let mut t = 0.0;
    let mut path = Vec::new();
    if opts.record_path {
        path.push([0.0, y[0], y[1]]);
    }
    let time_tol = 1e-8 * g.dx.min(g.dy) / medium.max_speed_in_omega();
    while t < max_time {
        let next = rk4(&s, &y, h);
        if bx.outside(next[0], next[1]) <= 0.0 {
            y = next;
            t += h;
            drift = drift.max((hamiltonian(&s, [y[0], y[1]], [y[2], y[3]]) - h0).abs());
            if opts.record_path {
                path.push([t, y[0], y[1]]);
            }
            continue;
        }
        // Bracket the crossing inside this step.
        let (mut a, mut b) = (0.0, h);
        let mut fa = bx.outside(y[0], y[1]);
        let mut fb = bx.outside(next[0], next[1]);
        let mut yb = next;
        while b - a > time_tol {
            let m = 0.5 * (a + b);
            let ym = rk4(&s, &y, m);
            let fm = bx.outside(ym[0], ym[1]);
            if fm <= 0.0 {
                a = m;
                fa = fm;
            } else {
                b = m;
                fb = fm;
                yb = ym;
            }
        }
        let tau = if fb > fa { a + (b - a) * (-fa) / (fb - fa) } else { b };
        let ye = if tau == b { yb } else { rk4(&s, &y, tau) };
        let point = [ye[0].clamp(lo[0], hi[0]), ye[1].clamp(lo[1], hi[1])];
        if opts.record_path {
            path.push([t + tau, point[0], point[1]]);
        }
        return Ok(Ray {
            path,
            exit: Some(RayExit { time: t + tau, point, xi: [ye[2], ye[3]] }),
            trapped: false,
            hamiltonian_drift: drift,
        });
    }
    Ok(Ray { path, exit: None, trapped: true, hamiltonian_drift: drift })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ExitTimes {
    pub plus: Option<RayExit>,
    pub minus: Option<RayExit>,
}

impl ExitTimes {
    pub fn tau_plus(&self) -> Option<f64> {
        self.plus.map(|e| e.time)
    }

    pub fn tau_minus(&self) -> Option<f64> {
        self.minus.map(|e| e.time)
    }
}

pub fn exit_times(medium: &Medium, p: PhasePoint, opts: RayOptions) -> Result<ExitTimes> {
    let o = RayOptions { record_path: false, ..opts };
    Ok(ExitTimes {
        plus: trace_geodesic(medium, p, Sign::Plus, o)?.exit,
        minus: trace_geodesic(medium, p, Sign::Minus, o)?.exit,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct DomainTime {
    /// `T(Ω)` estimate; infinite when any sample is trapped.
    pub t_omega: f64,
    /// The sample realizing the maximum.
    pub argmax: Option<PhasePoint>,
    pub trapped: Vec<PhasePoint>,
    pub n_rays: usize,
}

/// Boundary sample points: the four corners plus `n` points equally spaced
/// along the perimeter starting at the lower-left corner.
pub fn boundary_samples(medium: &Medium, n: usize) -> Vec<[f64; 2]> {
    let (lo, hi) = medium.grid().omega_bounds();
    let (w, h) = (hi[0] - lo[0], hi[1] - lo[1]);
    let per = 2.0 * (w + h);
    let mut pts = vec![lo, [hi[0], lo[1]], hi, [lo[0], hi[1]]];
    for k in 0..n {
        let p = k as f64 * per / n as f64;
        let pt = if p < w {
            [lo[0] + p, lo[1]]
        } else if p < w + h {
            [hi[0], lo[1] + (p - w)]
        } else if p < 2.0 * w + h {
            [hi[0] - (p - w - h), hi[1]]
        } else {
            [lo[0], hi[1] - (p - 2.0 * w - h)]
        };
        if !pts.contains(&pt) {
            pts.push(pt);
        }
    }
    pts
}

fn points_inward(lo: [f64; 2], hi: [f64; 2], x: [f64; 2], xi: [f64; 2], tol: f64) -> bool {
    let mut any = false;
    for d in 0..2 {
        if (x[d] - lo[d]).abs() <= tol {
            any = true;
            if xi[d] <= 1e-12 {
                return false;
            }
        }
        if (x[d] - hi[d]).abs() <= tol {
            any = true;
            if xi[d] >= -1e-12 {
                return false;
            }
        }
    }
    any
}

/// Longest sampled transit time through Ω̄: a lower bound for `T(Ω)`.
pub fn domain_t(medium: &Medium, n_boundary: usize, n_directions: usize, opts: RayOptions) -> Result<DomainTime> {
    if n_boundary == 0 || n_directions == 0 {
        return invalid("domain_T needs at least one boundary point and one direction");
    }
    let (lo, hi) = medium.grid().omega_bounds();
    let tol = 1e-12 * medium.grid().omega_diameter();
    let mut starts = Vec::new();
    for x in boundary_samples(medium, n_boundary) {
        for m in 0..n_directions {
            let theta = 2.0 * std::f64::consts::PI * m as f64 / n_directions as f64;
            let p = PhasePoint::from_angle(medium, x, theta)?;
            if points_inward(lo, hi, x, p.xi, tol) {
                starts.push(p);
            }
        }
    }
    let o = RayOptions { record_path: false, ..opts };
    let results: Vec<Result<Ray>> = starts.par_iter().map(|p| trace_geodesic(medium, *p, Sign::Plus, o)).collect();
    let mut best = 0.0;
    let mut argmax = None;
    let mut trapped = Vec::new();
    for (p, r) in starts.iter().zip(results) {
        let r = r?;
        match r.exit {
            Some(e) if !r.trapped => {
                if e.time > best {
                    best = e.time;
                    argmax = Some(*p);
                }
            }
            _ => trapped.push(*p),
        }
    }
    let t_omega = if trapped.is_empty() { best } else { f64::INFINITY };
    Ok(DomainTime { t_omega, argmax, trapped, n_rays: starts.len() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;

    fn unit_square(n: usize) -> Medium {
        let g = Grid::padded(n, n, 1.0 / (n - 1) as f64, 1.0 / (n - 1) as f64, 2).unwrap();
        Medium::identity(&g)
    }

    #[test]
    fn straight_rays_in_flat_media() {
        let m = unit_square(33);
        let p = PhasePoint::from_angle(&m, [0.5, 0.5], 0.0).unwrap();
        let e = exit_times(&m, p, RayOptions::default()).unwrap();
        assert!((e.tau_plus().unwrap() - 0.5).abs() < 1e-8);
        assert!((e.tau_minus().unwrap() - 0.5).abs() < 1e-8);
        let p = PhasePoint::from_angle(&m, [0.5, 0.5], std::f64::consts::FRAC_PI_4).unwrap();
        let e = exit_times(&m, p, RayOptions::default()).unwrap();
        assert!((e.tau_plus().unwrap() - 0.5 * 2f64.sqrt()).abs() < 1e-8);
        assert!((e.plus.unwrap().point[0] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn rejects_start_outside() {
        let m = unit_square(17);
        let p = PhasePoint { x: [1.5, 0.5], xi: [1.0, 0.0] };
        assert!(trace_geodesic(&m, p, Sign::Plus, RayOptions::default()).is_err());
    }

    #[test]
    fn outward_start_on_boundary_exits_immediately() {
        let m = unit_square(17);
        let p = PhasePoint::from_angle(&m, [1.0, 0.5], 0.0).unwrap();
        let r = trace_geodesic(&m, p, Sign::Plus, RayOptions::default()).unwrap();
        assert!(r.exit.unwrap().time < 1e-9);
    }

    #[test]
    fn square_domain_time_is_the_diagonal() {
        let m = unit_square(17);
        let d = domain_t(&m, 16, 16, RayOptions::default()).unwrap();
        assert!((d.t_omega - 2f64.sqrt()).abs() < 1e-8);
        assert!(d.trapped.is_empty());
    }

    #[test]
    fn tiny_budget_reports_trapping() {
        let m = unit_square(17);
        let p = PhasePoint::from_angle(&m, [0.5, 0.5], 0.3).unwrap();
        let r = trace_geodesic(&m, p, Sign::Plus, RayOptions { max_time: Some(0.1), ..Default::default() }).unwrap();
        assert!(r.trapped && r.exit.is_none());
    }
}
