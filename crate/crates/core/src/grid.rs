//! Computational lattice, the interior rectangle Ω and grid functions.
//!
//! Node `(i, j)` sits at `origin + (i·dx, j·dy)`. Field values are stored
//! row-major over the shape `(nx, ny)`, so the flat index is `i·ny + j` and
//! `j` (the y index) is the contiguous one.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result, TatError};

/// Inclusive index rectangle `[i_lo, i_hi] × [j_lo, j_hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexRect {
    pub i_lo: usize,
    pub i_hi: usize,
    pub j_lo: usize,
    pub j_hi: usize,
}

impl IndexRect {
    pub fn new(i_lo: usize, i_hi: usize, j_lo: usize, j_hi: usize) -> Self {
        IndexRect { i_lo, i_hi, j_lo, j_hi }
    }

    pub fn nx(&self) -> usize {
        self.i_hi - self.i_lo + 1
    }

    pub fn ny(&self) -> usize {
        self.j_hi - self.j_lo + 1
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        i >= self.i_lo && i <= self.i_hi && j >= self.j_lo && j <= self.j_hi
    }

    /// Strictly inside: not on the rectangle's own perimeter.
    pub fn is_interior(&self, i: usize, j: usize) -> bool {
        i > self.i_lo && i < self.i_hi && j > self.j_lo && j < self.j_hi
    }

    pub fn on_perimeter(&self, i: usize, j: usize) -> bool {
        self.contains(i, j) && !self.is_interior(i, j)
    }

    /// Shrinks by `k` nodes on every side; `None` if nothing is left.
    pub fn shrink(&self, k: usize) -> Option<IndexRect> {
        if self.i_lo + k > self.i_hi.checked_sub(k)? || self.j_lo + k > self.j_hi.checked_sub(k)? {
            return None;
        }
        Some(IndexRect::new(self.i_lo + k, self.i_hi - k, self.j_lo + k, self.j_hi - k))
    }

    /// Number of nodes separating `self` from the perimeter of `outer`.
    pub fn margin_within(&self, outer: &IndexRect) -> Option<usize> {
        if !outer.contains(self.i_lo, self.j_lo) || !outer.contains(self.i_hi, self.j_hi) {
            return None;
        }
        Some(
            (self.i_lo - outer.i_lo)
                .min(outer.i_hi - self.i_hi)
                .min(self.j_lo - outer.j_lo)
                .min(outer.j_hi - self.j_hi),
        )
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (self.i_lo..=self.i_hi).flat_map(move |i| (self.j_lo..=self.j_hi).map(move |j| (i, j)))
    }
}

/// Which part of the lattice a reduction or operator acts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Region {
    /// The closed interior rectangle Ω̄.
    Omega,
    /// The whole padded lattice (its perimeter is the hard outer wall).
    Full,
}

impl std::fmt::Display for Region {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Region::Omega => write!(f, "omega"),
            Region::Full => write!(f, "full"),
        }
    }
}

impl std::str::FromStr for Region {
    type Err = TatError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "omega" => Ok(Region::Omega),
            "full" => Ok(Region::Full),
            other => invalid(format!("unknown region tag '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub nx: usize,
    pub ny: usize,
    pub dx: f64,
    pub dy: f64,
    pub origin: [f64; 2],
    pub omega: IndexRect,
}

impl Grid {
    pub fn new(nx: usize, ny: usize, dx: f64, dy: f64, origin: [f64; 2], omega: IndexRect) -> Result<Self> {
        if nx < 16 || ny < 16 {
            return invalid(format!("grid must have at least 16 nodes per axis, got {nx}×{ny}"));
        }
        if !(dx > 0.0 && dy > 0.0 && dx.is_finite() && dy.is_finite()) {
            return invalid(format!("grid spacing must be positive, got dx={dx}, dy={dy}"));
        }
        if !(origin[0].is_finite() && origin[1].is_finite()) {
            return Err(TatError::NonFinite("grid origin"));
        }
        if omega.i_lo < 1 || omega.j_lo < 1 || omega.i_hi + 1 >= nx || omega.j_hi + 1 >= ny {
            return invalid("Ω must leave at least one padding node on every side");
        }
        if omega.i_hi < omega.i_lo + 2 || omega.j_hi < omega.j_lo + 2 {
            return invalid("Ω must contain at least 3×3 nodes");
        }
        Ok(Grid { nx, ny, dx, dy, origin, omega })
    }

    /// Ω̄ of `omega_nx × omega_ny` nodes with its lower-left corner at the
    /// physical origin, surrounded by `pad` exterior nodes on every side.
    pub fn padded(omega_nx: usize, omega_ny: usize, dx: f64, dy: f64, pad: usize) -> Result<Self> {
        if omega_nx < 3 || omega_ny < 3 {
            return invalid("Ω must contain at least 3×3 nodes");
        }
        let omega = IndexRect::new(pad, pad + omega_nx - 1, pad, pad + omega_ny - 1);
        Grid::new(
            omega_nx + 2 * pad,
            omega_ny + 2 * pad,
            dx,
            dy,
            [-(pad as f64) * dx, -(pad as f64) * dy],
            omega,
        )
    }

    /// The same Ω̄ with a different padding width.
    pub fn with_pad(&self, pad: usize) -> Result<Self> {
        let mut g = Grid::padded(self.omega.nx(), self.omega.ny(), self.dx, self.dy, pad)?;
        let (x0, y0) = self.coords(self.omega.i_lo, self.omega.j_lo);
        g.origin = [x0 - pad as f64 * self.dx, y0 - pad as f64 * self.dy];
        Ok(g)
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        i * self.ny + j
    }

    pub fn coords(&self, i: usize, j: usize) -> (f64, f64) {
        (self.origin[0] + i as f64 * self.dx, self.origin[1] + j as f64 * self.dy)
    }

    /// Smallest distance (in nodes) between Ω̄ and the outer wall.
    pub fn pad(&self) -> usize {
        self.omega
            .i_lo
            .min(self.nx - 1 - self.omega.i_hi)
            .min(self.omega.j_lo)
            .min(self.ny - 1 - self.omega.j_hi)
    }

    pub fn full_rect(&self) -> IndexRect {
        IndexRect::new(0, self.nx - 1, 0, self.ny - 1)
    }

    pub fn rect(&self, region: Region) -> IndexRect {
        match region {
            Region::Omega => self.omega,
            Region::Full => self.full_rect(),
        }
    }

    /// Physical bounds of Ω̄ as `([x_lo, y_lo], [x_hi, y_hi])`.
    pub fn omega_bounds(&self) -> ([f64; 2], [f64; 2]) {
        let (x0, y0) = self.coords(self.omega.i_lo, self.omega.j_lo);
        let (x1, y1) = self.coords(self.omega.i_hi, self.omega.j_hi);
        ([x0, y0], [x1, y1])
    }

    pub fn omega_diameter(&self) -> f64 {
        let (lo, hi) = self.omega_bounds();
        (hi[0] - lo[0]).hypot(hi[1] - lo[1])
    }

    /// Perimeter nodes of Ω̄ in counterclockwise order, starting at the
    /// lower-left corner and running along the bottom side first.
    pub fn boundary_nodes(&self) -> Vec<(usize, usize)> {
        let r = self.omega;
        let mut out = Vec::with_capacity(2 * (r.nx() - 1) + 2 * (r.ny() - 1));
        for i in r.i_lo..r.i_hi {
            out.push((i, r.j_lo));
        }
        for j in r.j_lo..r.j_hi {
            out.push((r.i_hi, j));
        }
        for i in (r.i_lo + 1..=r.i_hi).rev() {
            out.push((i, r.j_hi));
        }
        for j in (r.j_lo + 1..=r.j_hi).rev() {
            out.push((r.i_lo, j));
        }
        out
    }

    /// Nearest node to a physical point (clamped to the lattice).
    pub fn nearest(&self, x: f64, y: f64) -> (usize, usize) {
        let fi = ((x - self.origin[0]) / self.dx).round().clamp(0.0, (self.nx - 1) as f64);
        let fj = ((y - self.origin[1]) / self.dy).round().clamp(0.0, (self.ny - 1) as f64);
        (fi as usize, fj as usize)
    }

    /// Index rectangle covering physical fractions of Ω̄, e.g. `(0.2, 0.8)`
    /// along each axis.
    pub fn omega_fraction_rect(&self, fx: (f64, f64), fy: (f64, f64)) -> Result<IndexRect> {
        let o = self.omega;
        let span_x = (o.nx() - 1) as f64;
        let span_y = (o.ny() - 1) as f64;
        for v in [fx.0, fx.1, fy.0, fy.1] {
            if !(0.0..=1.0).contains(&v) {
                return invalid(format!("region fraction {v} outside [0, 1]"));
            }
        }
        if fx.0 >= fx.1 || fy.0 >= fy.1 {
            return invalid("region fractions must be increasing");
        }
        Ok(IndexRect::new(
            o.i_lo + (fx.0 * span_x).round() as usize,
            o.i_lo + (fx.1 * span_x).round() as usize,
            o.j_lo + (fy.0 * span_y).round() as usize,
            o.j_lo + (fy.1 * span_y).round() as usize,
        ))
    }
}

/// A real grid function.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub grid: Grid,
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: &Grid) -> Self {
        ScalarField { grid: *grid, values: vec![0.0; grid.len()] }
    }

    pub fn constant(grid: &Grid, v: f64) -> Self {
        ScalarField { grid: *grid, values: vec![v; grid.len()] }
    }

    pub fn from_values(grid: &Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(TatError::Shape(format!(
                "field has {} values, grid needs {}",
                values.len(),
                grid.len()
            )));
        }
        let f = ScalarField { grid: *grid, values };
        f.check_finite("field")?;
        Ok(f)
    }

    pub fn from_fn(grid: &Grid, mut f: impl FnMut(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.len());
        for i in 0..grid.nx {
            for j in 0..grid.ny {
                let (x, y) = grid.coords(i, j);
                values.push(f(x, y));
            }
        }
        ScalarField { grid: *grid, values }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.idx(i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let k = self.grid.idx(i, j);
        self.values[k] = v;
    }

    pub fn check_finite(&self, what: &'static str) -> Result<()> {
        if self.values.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(TatError::NonFinite(what))
        }
    }

    pub fn check_same_grid(&self, other: &ScalarField) -> Result<()> {
        if self.grid != other.grid {
            return Err(TatError::Shape("fields live on different grids".into()));
        }
        Ok(())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest magnitude over the perimeter of Ω̄.
    pub fn max_abs_on_boundary(&self) -> f64 {
        self.grid
            .boundary_nodes()
            .into_iter()
            .fold(0.0, |m, (i, j)| m.max(self.at(i, j).abs()))
    }

    /// Largest magnitude over nodes outside `rect`.
    pub fn max_abs_outside(&self, rect: &IndexRect) -> f64 {
        let mut m: f64 = 0.0;
        for i in 0..self.grid.nx {
            for j in 0..self.grid.ny {
                if !rect.contains(i, j) {
                    m = m.max(self.at(i, j).abs());
                }
            }
        }
        m
    }

    /// Copy with everything outside `rect` set to zero.
    pub fn restricted(&self, rect: &IndexRect) -> ScalarField {
        let mut out = ScalarField::zeros(&self.grid);
        for (i, j) in rect.iter() {
            out.set(i, j, self.at(i, j));
        }
        out
    }

    /// The Ω̄ values carried over to a grid with padding `pad`; zero elsewhere.
    pub fn with_pad(&self, pad: usize) -> Result<ScalarField> {
        let g = self.grid.with_pad(pad)?;
        let (o, n) = (self.grid.omega, g.omega);
        let mut out = ScalarField::zeros(&g);
        for a in 0..o.nx() {
            for b in 0..o.ny() {
                out.set(n.i_lo + a, n.j_lo + b, self.at(o.i_lo + a, o.j_lo + b));
            }
        }
        Ok(out)
    }

    pub fn sub(&self, other: &ScalarField) -> ScalarField {
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        ScalarField { grid: self.grid, values }
    }

    pub fn add(&self, other: &ScalarField) -> ScalarField {
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect();
        ScalarField { grid: self.grid, values }
    }

    pub fn scaled(&self, s: f64) -> ScalarField {
        ScalarField { grid: self.grid, values: self.values.iter().map(|v| v * s).collect() }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScalarField {
        ScalarField { grid: self.grid, values: self.values.iter().map(|&v| f(v)).collect() }
    }
}
