//! Partial-data geometry `𝒢 = {(t, x) : x ∈ Γ, 0 < t < s(x)}` and its smooth
//! mask `χ`.
//!
//! `Γ` is stored per boundary node together with a piecewise-constant time
//! budget `s`. The mask is a product of a spatial raised-cosine ramp (over
//! two boundary spacings next to every excluded node) and a temporal ramp
//! over the last 10% of `s`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result, TatError};
use crate::grid::Grid;
use crate::wave::TimeAxis;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Bottom,
    Right,
    Top,
    Left,
}

impl std::str::FromStr for Side {
    type Err = TatError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bottom" | "s" | "south" => Ok(Side::Bottom),
            "right" | "e" | "east" => Ok(Side::Right),
            "top" | "n" | "north" => Ok(Side::Top),
            "left" | "w" | "west" => Ok(Side::Left),
            other => invalid(format!("unknown side '{other}'")),
        }
    }
}

/// One measured boundary arc: the nodes of `side` whose fractional position
/// along the side (increasing x or y) lies in `[from, to]`, each measured
/// for `0 < t < s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArcSpec {
    pub side: Side,
    pub from: f64,
    pub to: f64,
    pub s: f64,
}

impl std::str::FromStr for ArcSpec {
    type Err = TatError;
    /// Parses `side:from:to:s`.
    fn from_str(text: &str) -> Result<Self> {
        let parts: Vec<&str> = text.trim().split(':').collect();
        if parts.len() != 4 {
            return invalid(format!("arc '{text}' must have the form side:from:to:s"));
        }
        let num = |p: &str| -> Result<f64> {
            p.trim().parse::<f64>().map_err(|_| TatError::Validation(format!("bad number '{p}' in arc '{text}'")))
        };
        let arc = ArcSpec { side: parts[0].trim().parse()?, from: num(parts[1])?, to: num(parts[2])?, s: num(parts[3])? };
        if !(0.0..=1.0).contains(&arc.from) || !(0.0..=1.0).contains(&arc.to) || arc.from > arc.to {
            return invalid(format!("arc '{text}' needs 0 ≤ from ≤ to ≤ 1"));
        }
        if !(arc.s > 0.0 && arc.s.is_finite()) {
            return invalid(format!("arc '{text}' needs a positive time budget"));
        }
        Ok(arc)
    }
}

/// Fraction of the time budget covered by the temporal taper.
pub const TIME_TAPER: f64 = 0.1;
/// Width of the spatial taper, in boundary spacings.
pub const SPACE_TAPER_NODES: f64 = 2.0;

/// Raised-cosine ramp: 0 for `u ≤ 0`, 1 for `u ≥ 1`.
pub fn raised_cosine(u: f64) -> f64 {
    if u <= 0.0 {
        0.0
    } else if u >= 1.0 {
        1.0
    } else {
        0.5 * (1.0 - (std::f64::consts::PI * u).cos())
    }
}

/// Temporal factor: 1 on `[0, (1−w)s]`, 0 from `s` on.
pub fn time_window(t: f64, s: f64, w: f64) -> f64 {
    if w <= 0.0 {
        return if t < s { 1.0 } else if t <= s { 1.0 } else { 0.0 };
    }
    raised_cosine((s - t) / (w * s))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSet {
    pub grid: Grid,
    /// Per boundary node (in `Grid::boundary_nodes` order).
    pub in_gamma: Vec<bool>,
    /// Time budget per boundary node; zero outside Γ.
    pub s: Vec<f64>,
    perim: Vec<f64>,
    perimeter: f64,
    excluded: Vec<f64>,
    /// Node indices sorted by perimeter coordinate.
    order: Vec<usize>,
}

fn side_fraction(grid: &Grid, side: Side, x: f64, y: f64) -> f64 {
    let (lo, hi) = grid.omega_bounds();
    match side {
        Side::Bottom | Side::Top => (x - lo[0]) / (hi[0] - lo[0]),
        Side::Left | Side::Right => (y - lo[1]) / (hi[1] - lo[1]),
    }
}

fn on_side(grid: &Grid, side: Side, i: usize, j: usize) -> bool {
    let o = grid.omega;
    match side {
        Side::Bottom => j == o.j_lo,
        Side::Top => j == o.j_hi,
        Side::Left => i == o.i_lo,
        Side::Right => i == o.i_hi,
    }
}

impl MeasurementSet {
    pub fn from_arcs(grid: &Grid, arcs: &[ArcSpec]) -> Result<Self> {
        let nodes = grid.boundary_nodes();
        let mut in_gamma = vec![false; nodes.len()];
        let mut s = vec![0.0; nodes.len()];
        for arc in arcs {
            for (b, &(i, j)) in nodes.iter().enumerate() {
                if !on_side(grid, arc.side, i, j) {
                    continue;
                }
                let (x, y) = grid.coords(i, j);
                let fr = side_fraction(grid, arc.side, x, y);
                if fr >= arc.from - 1e-12 && fr <= arc.to + 1e-12 {
                    in_gamma[b] = true;
                    s[b] = f64::max(s[b], arc.s);
                }
            }
        }
        Self::from_nodes(grid, in_gamma, s)
    }

    /// Γ = ∂Ω with a constant budget.
    pub fn full(grid: &Grid, s: f64) -> Result<Self> {
        let nb = grid.boundary_nodes().len();
        Self::from_nodes(grid, vec![true; nb], vec![s; nb])
    }

    pub fn from_nodes(grid: &Grid, in_gamma: Vec<bool>, s: Vec<f64>) -> Result<Self> {
        let nodes = grid.boundary_nodes();
        if in_gamma.len() != nodes.len() || s.len() != nodes.len() {
            return Err(TatError::Shape("measurement set does not match the boundary".into()));
        }
        for (g, v) in in_gamma.iter().zip(&s) {
            if *g && !(*v > 0.0 && v.is_finite()) {
                return invalid("time budget must be positive on Γ");
            }
        }
        let perim: Vec<f64> = nodes.iter().map(|&(i, j)| {
            let (x, y) = grid.coords(i, j);
            perimeter_coord(grid, x, y)
        }).collect();
        let (lo, hi) = grid.omega_bounds();
        let perimeter = 2.0 * ((hi[0] - lo[0]) + (hi[1] - lo[1]));
        let excluded = perim.iter().zip(&in_gamma).filter(|(_, g)| !**g).map(|(p, _)| *p).collect();
        let s = s.iter().zip(&in_gamma).map(|(v, g)| if *g { *v } else { 0.0 }).collect();
        let mut order: Vec<usize> = (0..perim.len()).collect();
        order.sort_by(|&a, &b| perim[a].total_cmp(&perim[b]));
        Ok(MeasurementSet { grid: *grid, in_gamma, s, perim, perimeter, excluded, order })
    }

    pub fn is_empty(&self) -> bool {
        !self.in_gamma.iter().any(|&g| g)
    }

    pub fn sup_s(&self) -> f64 {
        self.s.iter().fold(0.0, |m, &v| m.max(v))
    }

    /// Returns a copy with Γ enlarged by `other` and budgets raised to the pointwise max.
    pub fn union(&self, other: &MeasurementSet) -> Result<MeasurementSet> {
        let g: Vec<bool> = self.in_gamma.iter().zip(&other.in_gamma).map(|(a, b)| *a || *b).collect();
        let s: Vec<f64> = self.s.iter().zip(&other.s).map(|(a, b)| a.max(*b)).collect();
        MeasurementSet::from_nodes(&self.grid, g, s)
    }

    fn cyclic(&self, a: f64, b: f64) -> f64 {
        let d = (a - b).abs() % self.perimeter;
        d.min(self.perimeter - d)
    }

    fn spatial_factor(&self, p: f64) -> f64 {
        if self.excluded.is_empty() {
            return 1.0;
        }
        let d = self.excluded.iter().fold(f64::INFINITY, |m, &e| m.min(self.cyclic(p, e)));
        let h = self.grid.dx.min(self.grid.dy);
        raised_cosine(d / (SPACE_TAPER_NODES * h))
    }

    fn node_chi(&self, t: f64, b: usize) -> f64 {
        if self.in_gamma[b] {
            self.spatial_factor(self.perim[b]) * time_window(t, self.s[b], TIME_TAPER)
        } else {
            0.0
        }
    }

    /// `χ(t, x)` at a point of ∂Ω, interpolated along the perimeter between
    /// the two neighbouring boundary nodes.
    pub fn chi(&self, t: f64, x: f64, y: f64) -> f64 {
        let p = perimeter_coord(&self.grid, x, y);
        let n = self.order.len();
        let k = self.order.partition_point(|&b| self.perim[b] <= p);
        let (a, b) = (self.order[(k + n - 1) % n], self.order[k % n]);
        let gap = (self.perim[b] - self.perim[a]).rem_euclid(self.perimeter);
        let w = if gap > 0.0 { (p - self.perim[a]).rem_euclid(self.perimeter) / gap } else { 0.0 };
        (1.0 - w) * self.node_chi(t, a) + w * self.node_chi(t, b)
    }

    /// `χ` on the `(t_n, node_b)` lattice of a trace, time-major.
    pub fn chi_lattice(&self, time: &TimeAxis) -> Vec<f64> {
        let nb = self.in_gamma.len();
        let space: Vec<f64> = (0..nb)
            .map(|b| if self.in_gamma[b] { self.spatial_factor(self.perim[b]) } else { 0.0 })
            .collect();
        let mut out = vec![0.0; (time.nt + 1) * nb];
        for n in 0..=time.nt {
            let t = time.time(n);
            for b in 0..nb {
                if space[b] > 0.0 {
                    out[n * nb + b] = space[b] * time_window(t, self.s[b], TIME_TAPER);
                }
            }
        }
        out
    }
}

/// Counterclockwise arclength from the lower-left corner of Ω̄ to the
/// boundary point nearest `(x, y)`.
pub fn perimeter_coord(grid: &Grid, x: f64, y: f64) -> f64 {
    let (lo, hi) = grid.omega_bounds();
    let (w, h) = (hi[0] - lo[0], hi[1] - lo[1]);
    let xc = x.clamp(lo[0], hi[0]);
    let yc = y.clamp(lo[1], hi[1]);
    let d = [yc - lo[1], hi[0] - xc, hi[1] - yc, xc - lo[0]];
    let side = (0..4).min_by(|&a, &b| d[a].total_cmp(&d[b])).unwrap_or(0);
    match side {
        0 => xc - lo[0],
        1 => w + (yc - lo[1]),
        2 => w + h + (hi[0] - xc),
        _ => {
            let p = 2.0 * w + h + (hi[1] - yc);
            if p >= 2.0 * (w + h) { 0.0 } else { p }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Grid {
        Grid::padded(33, 33, 1.0 / 32.0, 1.0 / 32.0, 4).unwrap()
    }

    #[test]
    fn parses_arc_grammar() {
        let a: ArcSpec = "bottom:0.2:0.8:1.5".parse().unwrap();
        assert_eq!(a, ArcSpec { side: Side::Bottom, from: 0.2, to: 0.8, s: 1.5 });
        assert!("bottom:0.8:0.2:1".parse::<ArcSpec>().is_err());
        assert!("up:0:1:1".parse::<ArcSpec>().is_err());
        assert!("left:0:1:-1".parse::<ArcSpec>().is_err());
    }

    #[test]
    fn mask_is_supported_in_g() {
        let g = grid();
        let m = MeasurementSet::from_arcs(&g, &["bottom:0:1:1.0".parse().unwrap(), "left:0.5:1:0.6".parse().unwrap()]).unwrap();
        let time = TimeAxis::new(1.2, 0.01).unwrap();
        let chi = m.chi_lattice(&time);
        let nb = m.in_gamma.len();
        for n in 0..=time.nt {
            for b in 0..nb {
                let v = chi[n * nb + b];
                assert!((0.0..=1.0).contains(&v));
                if v > 0.0 {
                    assert!(m.in_gamma[b] && time.time(n) < m.s[b]);
                }
            }
        }
        // Interior of the bottom arc, early time: fully measured.
        assert_eq!(m.chi(0.1, 0.5, 0.0), 1.0);
        assert_eq!(m.chi(0.1, 1.0, 0.5), 0.0);
        assert_eq!(m.chi(1.0, 0.5, 0.0), 0.0);
    }

    #[test]
    fn full_boundary_has_no_spatial_taper() {
        let g = grid();
        let m = MeasurementSet::full(&g, 2.0).unwrap();
        assert_eq!(m.chi(0.5, 0.0, 0.0), 1.0);
        assert_eq!(m.chi(0.5, 1.0, 0.37), 1.0);
        assert!(m.chi(1.9, 1.0, 0.37) < 1.0);
        assert_eq!(m.chi(2.0, 1.0, 0.37), 0.0);
    }

    #[test]
    fn perimeter_coordinates_are_ccw() {
        let g = grid();
        assert!((perimeter_coord(&g, 0.5, 0.0) - 0.5).abs() < 1e-12);
        assert!((perimeter_coord(&g, 1.0, 0.25) - 1.25).abs() < 1e-12);
        assert!((perimeter_coord(&g, 0.25, 1.0) - 2.75).abs() < 1e-12);
        assert!((perimeter_coord(&g, 0.0, 0.25) - 3.75).abs() < 1e-12);
    }
}
