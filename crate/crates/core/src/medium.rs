//! Medium coefficients `c`, diagonal metric `(g11, g22)` and potential `q`.
//!
//! A medium always carries its sampled grid fields. Media built from an
//! analytic [`Profile`] keep the profile too, so that ray tracing can use
//! exact coefficient gradients instead of interpolated ones.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result, TatError};
use crate::grid::{Grid, ScalarField};

/// Compactly supported C^∞ bump `amp · exp(1 − 1/(1 − ρ²))`, `ρ = |x − center| / radius`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    pub center: [f64; 2],
    pub radius: f64,
    pub amp: f64,
}

impl Bump {
    /// Value and gradient.
    pub fn eval(&self, x: f64, y: f64) -> (f64, [f64; 2]) {
        let rx = x - self.center[0];
        let ry = y - self.center[1];
        let r2 = (rx * rx + ry * ry) / (self.radius * self.radius);
        if r2 >= 1.0 {
            return (0.0, [0.0, 0.0]);
        }
        let w = 1.0 - r2;
        let b = self.amp * (1.0 - 1.0 / w).exp();
        let k = -2.0 * b / (w * w * self.radius * self.radius);
        (b, [k * rx, k * ry])
    }

    fn inside_box(&self, lo: [f64; 2], hi: [f64; 2]) -> bool {
        self.center[0] - self.radius > lo[0]
            && self.center[0] + self.radius < hi[0]
            && self.center[1] - self.radius > lo[1]
            && self.center[1] + self.radius < hi[1]
    }
}

/// Closed-form description of a medium inside Ω̄.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Profile {
    /// `c = c0` on Ω̄, identity metric, no potential.
    Constant { c0: f64 },
    /// `c = 1 + Σ c_bumps`, `g11 = 1 + Σ g11_bumps`, `g22 = 1 + Σ g22_bumps`,
    /// `q = q_scale · (Σ q_bumps)²`.
    Bumps {
        c: Vec<Bump>,
        g11: Vec<Bump>,
        g22: Vec<Bump>,
        q: Vec<Bump>,
        q_scale: f64,
    },
}

/// Coefficients and their gradients at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointCoefficients {
    pub c: f64,
    pub dc: [f64; 2],
    pub g11: f64,
    pub dg11: [f64; 2],
    pub g22: f64,
    pub dg22: [f64; 2],
}

fn sum_bumps(bumps: &[Bump], x: f64, y: f64) -> (f64, [f64; 2]) {
    bumps.iter().fold((0.0, [0.0, 0.0]), |(v, d), b| {
        let (bv, bd) = b.eval(x, y);
        (v + bv, [d[0] + bd[0], d[1] + bd[1]])
    })
}

impl Profile {
    pub fn eval(&self, x: f64, y: f64) -> PointCoefficients {
        match self {
            Profile::Constant { c0 } => PointCoefficients {
                c: *c0,
                dc: [0.0; 2],
                g11: 1.0,
                dg11: [0.0; 2],
                g22: 1.0,
                dg22: [0.0; 2],
            },
            Profile::Bumps { c, g11, g22, .. } => {
                let (cv, dc) = sum_bumps(c, x, y);
                let (g1, dg1) = sum_bumps(g11, x, y);
                let (g2, dg2) = sum_bumps(g22, x, y);
                PointCoefficients { c: 1.0 + cv, dc, g11: 1.0 + g1, dg11: dg1, g22: 1.0 + g2, dg22: dg2 }
            }
        }
    }

    pub fn potential(&self, x: f64, y: f64) -> f64 {
        match self {
            Profile::Constant { .. } => 0.0,
            Profile::Bumps { q, q_scale, .. } => {
                let s = sum_bumps(q, x, y).0;
                q_scale * s * s
            }
        }
    }

    fn all_bumps(&self) -> Vec<Bump> {
        match self {
            Profile::Constant { .. } => Vec::new(),
            Profile::Bumps { c, g11, g22, q, .. } => c.iter().chain(g11).chain(g22).chain(q).copied().collect(),
        }
    }

    /// True when the metric is conformal (`g11 = g22` everywhere).
    pub fn is_isotropic(&self) -> bool {
        match self {
            Profile::Constant { .. } => true,
            Profile::Bumps { g11, g22, .. } => g11 == g22,
        }
    }
}

/// Sound speed, diagonal metric and potential sampled on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Medium {
    pub c: ScalarField,
    pub g11: ScalarField,
    pub g22: ScalarField,
    pub q: ScalarField,
    pub profile: Option<Profile>,
}

impl Medium {
    /// Validates positivity and the exterior normalization `(c, g, q) = (1, I, 0)` off Ω̄.
    pub fn new(c: ScalarField, g11: ScalarField, g22: ScalarField, q: ScalarField, profile: Option<Profile>) -> Result<Self> {
        c.check_same_grid(&g11)?;
        c.check_same_grid(&g22)?;
        c.check_same_grid(&q)?;
        for (f, name) in [(&c, "medium c"), (&g11, "medium g11"), (&g22, "medium g22"), (&q, "medium q")] {
            f.check_finite(name)?;
        }
        if c.values.iter().any(|&v| v <= 0.0) {
            return invalid("sound speed must be positive everywhere");
        }
        if g11.values.iter().chain(&g22.values).any(|&v| v <= 0.0) {
            return invalid("metric entries must be positive everywhere");
        }
        if q.values.iter().any(|&v| v < 0.0) {
            return invalid("potential q must be non-negative");
        }
        let grid = c.grid;
        for i in 0..grid.nx {
            for j in 0..grid.ny {
                if grid.omega.contains(i, j) {
                    continue;
                }
                let k = grid.idx(i, j);
                if c.values[k] != 1.0 || g11.values[k] != 1.0 || g22.values[k] != 1.0 || q.values[k] != 0.0 {
                    return invalid(format!("medium is not normalized outside Ω at node ({i}, {j})"));
                }
            }
        }
        Ok(Medium { c, g11, g22, q, profile })
    }

    /// Samples an analytic profile; exterior nodes get the identity medium.
    pub fn from_profile(grid: &Grid, profile: Profile) -> Result<Self> {
        let (lo, hi) = grid.omega_bounds();
        for b in profile.all_bumps() {
            if !(b.radius > 0.0) || !b.inside_box(lo, hi) {
                return invalid(format!(
                    "bump at ({}, {}) with radius {} does not fit strictly inside Ω",
                    b.center[0], b.center[1], b.radius
                ));
            }
        }
        if let Profile::Bumps { q_scale, .. } = &profile {
            if *q_scale < 0.0 {
                return invalid("q_scale must be non-negative");
            }
        }
        let mut c = ScalarField::constant(grid, 1.0);
        let mut g11 = ScalarField::constant(grid, 1.0);
        let mut g22 = ScalarField::constant(grid, 1.0);
        let mut q = ScalarField::zeros(grid);
        for (i, j) in grid.omega.iter() {
            let (x, y) = grid.coords(i, j);
            let p = profile.eval(x, y);
            let k = grid.idx(i, j);
            if !(p.c > 0.0) {
                return Err(TatError::Validation(format!("profile gives c = {} ≤ 0 at ({x}, {y})", p.c)));
            }
            if !(p.g11 > 0.0 && p.g22 > 0.0) {
                return invalid(format!("profile gives a non-positive metric at ({x}, {y})"));
            }
            c.values[k] = p.c;
            g11.values[k] = p.g11;
            g22.values[k] = p.g22;
            q.values[k] = profile.potential(x, y);
        }
        Medium::new(c, g11, g22, q, Some(profile))
    }

    pub fn identity(grid: &Grid) -> Self {
        Medium::from_profile(grid, Profile::Constant { c0: 1.0 }).expect("identity medium is valid")
    }

    pub fn grid(&self) -> &Grid {
        &self.c.grid
    }

    pub fn c_max(&self) -> f64 {
        self.c.values.iter().fold(0.0, |m: f64, &v| m.max(v))
    }

    pub fn c_min(&self) -> f64 {
        self.c.values.iter().fold(f64::INFINITY, |m: f64, &v| m.min(v))
    }

    /// Largest contravariant metric entry `max(1/g11, 1/g22)`.
    pub fn g_inv_max(&self) -> f64 {
        self.g11.values.iter().chain(&self.g22.values).fold(0.0, |m: f64, &v| m.max(1.0 / v))
    }

    /// Largest local propagation speed `c·sqrt(g^ii)` over the lattice.
    pub fn max_speed(&self) -> f64 {
        let mut m: f64 = 0.0;
        for k in 0..self.c.values.len() {
            let gi = (1.0 / self.g11.values[k]).max(1.0 / self.g22.values[k]);
            m = m.max(self.c.values[k] * gi.sqrt());
        }
        m
    }

    /// Largest local speed restricted to Ω̄.
    pub fn max_speed_in_omega(&self) -> f64 {
        let g = self.grid();
        g.omega
            .iter()
            .map(|(i, j)| {
                let k = g.idx(i, j);
                let gi = (1.0 / self.g11.values[k]).max(1.0 / self.g22.values[k]);
                self.c.values[k] * gi.sqrt()
            })
            .fold(0.0, f64::max)
    }

    /// Smallest local speed `c / sqrt(max g_ii)` over Ω̄.
    pub fn min_speed_in_omega(&self) -> f64 {
        let g = self.grid();
        g.omega
            .iter()
            .map(|(i, j)| {
                let k = g.idx(i, j);
                self.c.values[k] / self.g11.values[k].max(self.g22.values[k]).sqrt()
            })
            .fold(f64::INFINITY, f64::min)
    }

    pub fn is_isotropic(&self) -> bool {
        match &self.profile {
            Some(p) => p.is_isotropic(),
            None => self.g11.values == self.g22.values,
        }
    }

    /// The same medium re-sampled with a different padding width.
    pub fn with_pad(&self, pad: usize) -> Result<Medium> {
        let g = self.grid().with_pad(pad)?;
        if let Some(p) = &self.profile {
            return Medium::from_profile(&g, p.clone());
        }
        let copy = |f: &ScalarField, fill: f64| {
            let mut out = ScalarField::constant(&g, fill);
            let old = self.grid();
            for (a, b) in (0..old.omega.nx()).flat_map(|a| (0..old.omega.ny()).map(move |b| (a, b))) {
                out.set(g.omega.i_lo + a, g.omega.j_lo + b, f.at(old.omega.i_lo + a, old.omega.j_lo + b));
            }
            out
        };
        Medium::new(copy(&self.c, 1.0), copy(&self.g11, 1.0), copy(&self.g22, 1.0), copy(&self.q, 0.0), None)
    }

    /// Coefficient sampler used by the ray tracer.
    pub fn sampler(&self) -> CoefficientSampler<'_> {
        match &self.profile {
            Some(p) => CoefficientSampler::Analytic(p),
            None => CoefficientSampler::Interpolated(self),
        }
    }
}

/// Evaluates `(c, g11, g22)` and gradients at arbitrary points of Ω̄.
///
/// Grid-only media use Catmull–Rom bicubic interpolation over Ω̄ nodes
/// (clamped at the perimeter), which keeps the Hamiltonian vector field
/// continuous.
#[derive(Debug, Clone, Copy)]
pub enum CoefficientSampler<'a> {
    Analytic(&'a Profile),
    Interpolated(&'a Medium),
}

fn catmull_rom(t: f64) -> ([f64; 4], [f64; 4]) {
    let t2 = t * t;
    let t3 = t2 * t;
    let w = [
        -0.5 * t3 + t2 - 0.5 * t,
        1.5 * t3 - 2.5 * t2 + 1.0,
        -1.5 * t3 + 2.0 * t2 + 0.5 * t,
        0.5 * t3 - 0.5 * t2,
    ];
    let dw = [
        -1.5 * t2 + 2.0 * t - 0.5,
        4.5 * t2 - 5.0 * t,
        -4.5 * t2 + 4.0 * t + 0.5,
        1.5 * t2 - t,
    ];
    (w, dw)
}

impl CoefficientSampler<'_> {
    pub fn eval(&self, x: f64, y: f64) -> PointCoefficients {
        match self {
            CoefficientSampler::Analytic(p) => p.eval(x, y),
            CoefficientSampler::Interpolated(m) => {
                let g = m.grid();
                let o = g.omega;
                let fx = (x - g.origin[0]) / g.dx;
                let fy = (y - g.origin[1]) / g.dy;
                let i0 = (fx.floor() as isize).clamp(o.i_lo as isize, o.i_hi as isize - 1);
                let j0 = (fy.floor() as isize).clamp(o.j_lo as isize, o.j_hi as isize - 1);
                let (wx, dwx) = catmull_rom(fx - i0 as f64);
                let (wy, dwy) = catmull_rom(fy - j0 as f64);
                let mut acc = [[0.0f64; 3]; 3];
                for a in 0..4 {
                    let ii = (i0 - 1 + a as isize).clamp(o.i_lo as isize, o.i_hi as isize) as usize;
                    for b in 0..4 {
                        let jj = (j0 - 1 + b as isize).clamp(o.j_lo as isize, o.j_hi as isize) as usize;
                        let k = g.idx(ii, jj);
                        let vals = [m.c.values[k], m.g11.values[k], m.g22.values[k]];
                        for (n, v) in vals.iter().enumerate() {
                            acc[n][0] += wx[a] * wy[b] * v;
                            acc[n][1] += dwx[a] * wy[b] * v / g.dx;
                            acc[n][2] += wx[a] * dwy[b] * v / g.dy;
                        }
                    }
                }
                PointCoefficients {
                    c: acc[0][0],
                    dc: [acc[0][1], acc[0][2]],
                    g11: acc[1][0],
                    dg11: [acc[1][1], acc[1][2]],
                    g22: acc[2][0],
                    dg22: [acc[2][1], acc[2][2]],
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bump_gradient_matches_finite_differences() {
        let b = Bump { center: [0.3, 0.4], radius: 0.25, amp: -0.7 };
        let h = 1e-6;
        for &(x, y) in &[(0.35, 0.41), (0.2, 0.5), (0.45, 0.3)] {
            let (_, d) = b.eval(x, y);
            let ddx = (b.eval(x + h, y).0 - b.eval(x - h, y).0) / (2.0 * h);
            let ddy = (b.eval(x, y + h).0 - b.eval(x, y - h).0) / (2.0 * h);
            assert!((d[0] - ddx).abs() < 1e-7, "{} vs {}", d[0], ddx);
            assert!((d[1] - ddy).abs() < 1e-7);
        }
        assert_eq!(b.eval(0.3 + 0.26, 0.4).0, 0.0);
    }

    #[test]
    fn exterior_normalization_is_enforced() {
        let g = Grid::padded(20, 20, 0.05, 0.05, 3).unwrap();
        let mut c = ScalarField::constant(&g, 1.0);
        c.set(0, 0, 1.5);
        let one = ScalarField::constant(&g, 1.0);
        let zero = ScalarField::zeros(&g);
        assert!(Medium::new(c, one.clone(), one.clone(), zero.clone(), None).is_err());
        let m = Medium::identity(&g);
        for i in 0..g.nx {
            for j in 0..g.ny {
                if !g.omega.contains(i, j) {
                    assert_eq!((m.c.at(i, j), m.g11.at(i, j), m.g22.at(i, j), m.q.at(i, j)), (1.0, 1.0, 1.0, 0.0));
                }
            }
        }
    }

    #[test]
    fn rejects_nonpositive_speed_and_negative_potential() {
        let g = Grid::padded(20, 20, 0.05, 0.05, 3).unwrap();
        let one = ScalarField::constant(&g, 1.0);
        let mut q = ScalarField::zeros(&g);
        q.set(10, 10, -1.0);
        assert!(Medium::new(one.clone(), one.clone(), one.clone(), q, None).is_err());
        let bad = Profile::Bumps {
            c: vec![Bump { center: [0.5, 0.5], radius: 0.3, amp: -1.2 }],
            g11: vec![],
            g22: vec![],
            q: vec![],
            q_scale: 0.0,
        };
        assert!(Medium::from_profile(&g, bad).is_err());
    }

    #[test]
    fn interpolated_sampler_reproduces_nodes_and_smooth_fields() {
        let g = Grid::padded(41, 41, 0.025, 0.025, 3).unwrap();
        let p = Profile::Bumps {
            c: vec![Bump { center: [0.5, 0.5], radius: 0.35, amp: -0.3 }],
            g11: vec![],
            g22: vec![],
            q: vec![],
            q_scale: 0.0,
        };
        let analytic = Medium::from_profile(&g, p.clone()).unwrap();
        let mut gridded = analytic.clone();
        gridded.profile = None;
        let s = gridded.sampler();
        let (x, y) = g.coords(g.omega.i_lo + 17, g.omega.j_lo + 9);
        assert!((s.eval(x, y).c - gridded.c.at(g.omega.i_lo + 17, g.omega.j_lo + 9)).abs() < 1e-14);
        let a = p.eval(0.43, 0.52);
        let b = s.eval(0.43, 0.52);
        assert!((a.c - b.c).abs() < 1e-4);
        assert!((a.dc[0] - b.dc[0]).abs() < 2e-2);
    }
}
