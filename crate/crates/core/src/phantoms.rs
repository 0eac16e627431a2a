//! Test initial pressures supported in a rectangle 𝒦 ⊂ Ω, and test media.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result, TatError};
use crate::grid::{Grid, IndexRect, ScalarField};
use crate::medium::{Bump, Medium, Profile};
use crate::rays::{domain_t, RayOptions};

/// Smallest allowed node gap between 𝒦 and ∂Ω.
pub const MIN_MARGIN: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PhantomKind {
    Disks,
    Gaussians,
    Bars,
}

impl std::str::FromStr for PhantomKind {
    type Err = TatError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "disks" => Ok(PhantomKind::Disks),
            "gaussians" => Ok(PhantomKind::Gaussians),
            "bars" => Ok(PhantomKind::Bars),
            other => invalid(format!("unknown phantom kind '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhantomParams {
    /// Number of disks, Gaussians or bars.
    pub count: usize,
    /// Bar orientation (radians from the x axis).
    pub angle: f64,
}

impl Default for PhantomParams {
    fn default() -> Self {
        PhantomParams { count: 3, angle: 0.0 }
    }
}

/// `C^∞` step: 0 for `u ≤ 0`, 1 for `u ≥ 1`.
pub fn smooth_step(u: f64) -> f64 {
    if u <= 0.0 {
        return 0.0;
    }
    if u >= 1.0 {
        return 1.0;
    }
    let a = (-1.0 / u).exp();
    let b = (-1.0 / (1.0 - u)).exp();
    a / (a + b)
}

struct Window {
    lo: [f64; 2],
    hi: [f64; 2],
    ramp: f64,
}

impl Window {
    fn new(grid: &Grid, k: &IndexRect, frac: f64) -> Window {
        let lo = grid.coords(k.i_lo, k.j_lo);
        let hi = grid.coords(k.i_hi, k.j_hi);
        let ramp = frac * (hi.0 - lo.0).min(hi.1 - lo.1);
        Window { lo: [lo.0, lo.1], hi: [hi.0, hi.1], ramp }
    }

    fn eval(&self, x: f64, y: f64) -> f64 {
        let s = |u: f64| smooth_step(u / self.ramp);
        s(x - self.lo[0]) * s(self.hi[0] - x) * s(y - self.lo[1]) * s(self.hi[1] - y)
    }

    fn center(&self) -> [f64; 2] {
        [0.5 * (self.lo[0] + self.hi[0]), 0.5 * (self.lo[1] + self.hi[1])]
    }

    fn side(&self) -> f64 {
        (self.hi[0] - self.lo[0]).min(self.hi[1] - self.lo[1])
    }
}

fn normalize(mut f: ScalarField) -> ScalarField {
    let m = f.values.iter().fold(0.0f64, |a, &v| a.max(v));
    if m > 0.0 {
        f.values.iter_mut().for_each(|v| *v = (*v / m).clamp(0.0, 1.0));
    }
    f
}

/// A phantom supported in `k`, with values in `[0, 1]`.
pub fn make_phantom(grid: &Grid, kind: PhantomKind, k: IndexRect, seed: u64, params: PhantomParams) -> Result<ScalarField> {
    match k.margin_within(&grid.omega) {
        Some(m) if m >= MIN_MARGIN => {}
        _ => return invalid(format!("𝒦 must keep at least {MIN_MARGIN} nodes from ∂Ω")),
    }
    if k.nx() < 5 || k.ny() < 5 {
        return invalid("𝒦 needs at least 5 nodes per side");
    }
    if params.count == 0 {
        return invalid("phantom count must be positive");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let win = Window::new(grid, &k, 0.2);
    let side = win.side();
    let c = win.center();
    let f = match kind {
        PhantomKind::Gaussians => {
            let blobs: Vec<([f64; 2], f64, f64)> = (0..params.count)
                .map(|_| {
                    let cx = c[0] + rng.gen_range(-0.25..0.25) * (win.hi[0] - win.lo[0]);
                    let cy = c[1] + rng.gen_range(-0.25..0.25) * (win.hi[1] - win.lo[1]);
                    ([cx, cy], rng.gen_range(0.05..0.12) * side, rng.gen_range(0.5..1.0))
                })
                .collect();
            ScalarField::from_fn(grid, |x, y| {
                let s: f64 = blobs
                    .iter()
                    .map(|(p, sig, a)| a * (-((x - p[0]).powi(2) + (y - p[1]).powi(2)) / (2.0 * sig * sig)).exp())
                    .sum();
                s * win.eval(x, y)
            })
        }
        PhantomKind::Disks => {
            let disks: Vec<([f64; 2], f64, f64)> = (0..params.count)
                .map(|_| {
                    let r = rng.gen_range(0.08..0.2) * side;
                    let cx = rng.gen_range(win.lo[0] + r + win.ramp..win.hi[0] - r - win.ramp);
                    let cy = rng.gen_range(win.lo[1] + r + win.ramp..win.hi[1] - r - win.ramp);
                    ([cx, cy], r, rng.gen_range(0.5..1.0))
                })
                .collect();
            ScalarField::from_fn(grid, |x, y| {
                let v = disks
                    .iter()
                    .filter(|(p, r, _)| (x - p[0]).powi(2) + (y - p[1]).powi(2) <= r * r)
                    .fold(0.0f64, |m, (_, _, a)| m.max(*a));
                v * win.eval(x, y)
            })
        }
        PhantomKind::Bars => {
            let (ca, sa) = (params.angle.cos(), params.angle.sin());
            let half_len = 0.3 * side;
            let width = 0.06 * side;
            let edge = 5.0 * grid.dx.max(grid.dy);
            let n = params.count;
            let bars: Vec<(f64, f64)> = (0..n)
                .map(|b| ((b as f64 - 0.5 * (n as f64 - 1.0)) * 2.5 * width, rng.gen_range(0.6..1.0)))
                .collect();
            ScalarField::from_fn(grid, |x, y| {
                let (dx, dy) = (x - c[0], y - c[1]);
                let along = dx * ca + dy * sa;
                let across = -dx * sa + dy * ca;
                let taper = smooth_step(1.0 - along.abs() / half_len);
                let v = bars
                    .iter()
                    .map(|(off, a)| a * smooth_step((0.5 * width - (across - off).abs()) / edge + 0.5))
                    .fold(0.0f64, f64::max);
                v * taper * win.eval(x, y)
            })
        }
    };
    let mut f = normalize(f);
    // Exact zeros outside 𝒦.
    for (i, j) in grid.full_rect().iter() {
        if !k.contains(i, j) {
            f.set(i, j, 0.0);
        }
    }
    Ok(f)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MediumKind {
    Constant,
    Lens,
    TwoLens,
    RandomSmooth,
}

impl std::str::FromStr for MediumKind {
    type Err = TatError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "constant" => Ok(MediumKind::Constant),
            "lens" => Ok(MediumKind::Lens),
            "two_lens" => Ok(MediumKind::TwoLens),
            "random_smooth" => Ok(MediumKind::RandomSmooth),
            other => invalid(format!("unknown medium kind '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MediumParams {
    /// Speed for `constant`.
    pub c0: f64,
    /// Speed perturbation at lens centres, `|amp| ≤ 0.5`.
    pub amp: f64,
    /// Lens half-maximum radius as a fraction of the shorter side of Ω.
    pub radius: f64,
    /// Largest relative metric perturbation for `random_smooth`.
    pub anisotropy: f64,
    /// Potential scale for `random_smooth`.
    pub q_scale: f64,
    pub count: usize,
    pub seed: u64,
}

impl Default for MediumParams {
    fn default() -> Self {
        MediumParams { c0: 1.0, amp: -0.3, radius: 0.2, anisotropy: 0.0, q_scale: 0.0, count: 4, seed: 0 }
    }
}

/// `ρ` at which the bump `exp(1 − 1/(1 − ρ²))` falls to one half.
pub fn bump_half_radius() -> f64 {
    let l = std::f64::consts::LN_2;
    (l / (1.0 + l)).sqrt()
}

fn omega_frame(grid: &Grid) -> ([f64; 2], [f64; 2], f64) {
    let (lo, hi) = grid.omega_bounds();
    (lo, hi, (hi[0] - lo[0]).min(hi[1] - lo[1]))
}

pub fn medium_profile(grid: &Grid, kind: MediumKind, p: &MediumParams) -> Result<Profile> {
    if p.amp.abs() > 0.5 {
        return invalid(format!("lens amplitude {} outside [-0.5, 0.5]", p.amp));
    }
    let (lo, hi, side) = omega_frame(grid);
    let at = |fx: f64, fy: f64| [lo[0] + fx * (hi[0] - lo[0]), lo[1] + fy * (hi[1] - lo[1])];
    let bumps_only = |c: Vec<Bump>| Profile::Bumps { c, g11: Vec::new(), g22: Vec::new(), q: Vec::new(), q_scale: 0.0 };
    Ok(match kind {
        MediumKind::Constant => {
            if !(p.c0 > 0.0 && p.c0.is_finite()) {
                return invalid("constant speed must be positive");
            }
            Profile::Constant { c0: p.c0 }
        }
        MediumKind::Lens => {
            let r = p.radius * side / bump_half_radius();
            bumps_only(vec![Bump { center: at(0.5, 0.5), radius: r, amp: p.amp }])
        }
        // Two lenses at 60% of the requested radius, so that both fit side by side.
        MediumKind::TwoLens => {
            let r = 0.6 * p.radius * side / bump_half_radius();
            bumps_only(vec![
                Bump { center: at(0.3, 0.5), radius: r, amp: p.amp },
                Bump { center: at(0.7, 0.5), radius: r, amp: p.amp },
            ])
        }
        MediumKind::RandomSmooth => {
            if p.count == 0 {
                return invalid("random_smooth needs at least one bump");
            }
            if !(0.0..1.0).contains(&p.anisotropy) || p.q_scale < 0.0 {
                return invalid("anisotropy must lie in [0, 1) and q_scale must be non-negative");
            }
            let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
            let mut draw = |amp: f64| -> Bump {
                let r = rng.gen_range(0.1..0.25) * side;
                let cx = rng.gen_range(lo[0] + 1.05 * r..hi[0] - 1.05 * r);
                let cy = rng.gen_range(lo[1] + 1.05 * r..hi[1] - 1.05 * r);
                Bump { center: [cx, cy], radius: r, amp: rng.gen_range(-1.0..1.0) * amp }
            };
            let c: Vec<Bump> = (0..p.count).map(|_| draw(p.amp.abs())).collect();
            let (g11, g22) = if p.anisotropy > 0.0 {
                let a: Vec<Bump> = (0..p.count).map(|_| draw(p.anisotropy)).collect();
                let b: Vec<Bump> = (0..p.count).map(|_| draw(p.anisotropy)).collect();
                (a, b)
            } else {
                (Vec::new(), Vec::new())
            };
            let q = if p.q_scale > 0.0 { (0..p.count).map(|_| draw(1.0)).collect() } else { Vec::new() };
            Profile::Bumps { c, g11, g22, q, q_scale: p.q_scale }
        }
    })
}

/// Builds a test medium; non-constant media are checked for trapped rays on
/// a coarse boundary census.
pub fn make_medium(grid: &Grid, kind: MediumKind, p: &MediumParams) -> Result<Medium> {
    let m = Medium::from_profile(grid, medium_profile(grid, kind, p)?)?;
    if kind != MediumKind::Constant {
        let t = domain_t(&m, 32, 32, RayOptions::default())?;
        if !t.trapped.is_empty() {
            return invalid(format!("medium traps {} of {} sampled rays", t.trapped.len(), t.n_rays));
        }
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Grid {
        Grid::padded(65, 65, 1.0 / 64.0, 1.0 / 64.0, 4).unwrap()
    }

    #[test]
    fn phantoms_respect_support_and_range() {
        let g = grid();
        let k = g.omega.shrink(8).unwrap();
        for kind in [PhantomKind::Disks, PhantomKind::Gaussians, PhantomKind::Bars] {
            let f = make_phantom(&g, kind, k, 7, PhantomParams::default()).unwrap();
            assert_eq!(f.max_abs_outside(&k), 0.0);
            assert!(f.values.iter().all(|v| (0.0..=1.0).contains(v)));
            assert!((f.max_abs() - 1.0).abs() < 1e-12);
            for (i, j) in k.iter().filter(|&(i, j)| k.on_perimeter(i, j)) {
                assert!(f.at(i, j).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn rejects_thin_margins() {
        let g = grid();
        let k = g.omega.shrink(2).unwrap();
        assert!(make_phantom(&g, PhantomKind::Disks, k, 0, PhantomParams::default()).is_err());
    }

    #[test]
    fn seeds_are_reproducible() {
        let g = grid();
        let k = g.omega.shrink(6).unwrap();
        let a = make_phantom(&g, PhantomKind::Disks, k, 0, PhantomParams::default()).unwrap();
        let b = make_phantom(&g, PhantomKind::Disks, k, 0, PhantomParams::default()).unwrap();
        let c = make_phantom(&g, PhantomKind::Disks, k, 1, PhantomParams::default()).unwrap();
        assert_eq!(a.values, b.values);
        assert_ne!(a.values, c.values);
    }

    #[test]
    fn media_kinds() {
        let g = grid();
        let one = make_medium(&g, MediumKind::Constant, &MediumParams::default()).unwrap();
        assert_eq!(one, Medium::identity(&g));
        let lens = make_medium(&g, MediumKind::Lens, &MediumParams::default()).unwrap();
        assert!((lens.min_speed_in_omega() - 0.7).abs() < 1e-3);
        let half = lens.sampler().eval(0.5 + 0.2, 0.5).c;
        assert!((half - 0.85).abs() < 1e-12);
        assert!(make_medium(&g, MediumKind::TwoLens, &MediumParams::default()).is_ok());
        let p = MediumParams { amp: 0.2, anisotropy: 0.3, q_scale: 2.0, seed: 3, ..Default::default() };
        let r1 = make_medium(&g, MediumKind::RandomSmooth, &p).unwrap();
        let r2 = make_medium(&g, MediumKind::RandomSmooth, &p).unwrap();
        assert_eq!(r1, r2);
        assert!(r1.q.values.iter().all(|&v| v >= 0.0) && r1.q.max_abs() > 0.0);
        assert!(!r1.is_isotropic());
        assert!(make_medium(&g, MediumKind::Lens, &MediumParams { amp: -0.6, ..Default::default() }).is_err());
    }
}
