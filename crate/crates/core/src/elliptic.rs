//! Harmonic extension: `P φ = 0` in Ω, `φ = h` on ∂Ω.
//!
//! The boundary data are lifted by the field `e` that equals `h` on ∂Ω and
//! vanishes inside; `φ₀ = φ − e` solves the symmetric positive definite
//! interior system `M φ₀ = −M e`, `M = vol·P`, by Jacobi-preconditioned
//! conjugate gradients.

use crate::error::{Result, TatError};
use crate::grid::ScalarField;
use crate::medium::Medium;
use crate::operator::Stencil;

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 20_000;

/// Stopping rule for the conjugate-gradient solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgSettings {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for CgSettings {
    fn default() -> Self {
        CgSettings { tol: DEFAULT_TOL, max_iter: DEFAULT_MAX_ITER }
    }
}

#[derive(Debug, Clone)]
pub struct HarmonicExtension {
    pub phi: ScalarField,
    pub iterations: usize,
    /// Relative residual `‖r_k‖ / ‖b‖` per iteration.
    pub residual_history: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Extends per-boundary-node values (in [`crate::grid::Grid::boundary_nodes`]
/// order) harmonically into Ω.
pub fn harmonic_extension(medium: &Medium, boundary_values: &[f64], tol: f64, max_iter: usize) -> Result<HarmonicExtension> {
    let g = *medium.grid();
    let nodes = g.boundary_nodes();
    if boundary_values.len() != nodes.len() {
        return Err(TatError::Shape(format!(
            "{} boundary values for {} boundary nodes",
            boundary_values.len(),
            nodes.len()
        )));
    }
    if boundary_values.iter().any(|v| !v.is_finite()) {
        return Err(TatError::NonFinite("boundary values"));
    }
    let st = Stencil::new(medium, g.omega);
    let (mx, my) = (st.mx, st.my);
    let n = st.len();

    let mut lift = vec![0.0; n];
    for (&(i, j), &v) in nodes.iter().zip(boundary_values) {
        lift[(i - g.omega.i_lo) * my + (j - g.omega.j_lo)] = v;
    }
    let mut b = vec![0.0; n];
    st.apply_weighted(&lift, &mut b);
    b.iter_mut().for_each(|v| *v = -*v);

    let interior = |k: usize| {
        let (a, c) = (k / my, k % my);
        a > 0 && a < mx - 1 && c > 0 && c < my - 1
    };
    let mut inv_diag = vec![0.0; n];
    for (k, d) in inv_diag.iter_mut().enumerate() {
        if interior(k) {
            *d = 1.0 / st.weighted_diagonal(k / my, k % my);
        }
    }

    let b_norm = dot(&b, &b).sqrt();
    let mut x = vec![0.0; n];
    let mut history = Vec::new();
    if b_norm == 0.0 {
        return Ok(HarmonicExtension { phi: st.embed(&g, &lift), iterations: 0, residual_history: history });
    }
    let mut r = b.clone();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(a, d)| a * d).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);
    let mut converged = false;
    let mut it = 0;
    while it < max_iter {
        st.apply_weighted(&p, &mut ap);
        let alpha = rz / dot(&p, &ap);
        for k in 0..n {
            x[k] += alpha * p[k];
            r[k] -= alpha * ap[k];
        }
        it += 1;
        let rel = dot(&r, &r).sqrt() / b_norm;
        history.push(rel);
        if rel <= tol {
            converged = true;
            break;
        }
        for k in 0..n {
            z[k] = r[k] * inv_diag[k];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for k in 0..n {
            p[k] = z[k] + beta * p[k];
        }
    }
    if !converged {
        return Err(TatError::CgNotConverged { iterations: it, last: *history.last().unwrap_or(&1.0), history });
    }
    for (xk, lk) in x.iter_mut().zip(&lift) {
        *xk += lk;
    }
    Ok(HarmonicExtension { phi: st.embed(&g, &x), iterations: it, residual_history: history })
}
