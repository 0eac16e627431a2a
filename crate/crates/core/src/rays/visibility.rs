//! Uniqueness and stability conditions for a measurement set, and the
//! principal symbol `½(χ(γ₊) + χ(γ₋))` of the masked reconstruction.

use rayon::prelude::*;
use serde::Serialize;

use super::eikonal::travel_time;
use super::geodesic::{exit_times, PhasePoint, RayExit, RayOptions};
use super::measurement::MeasurementSet;
use crate::error::{invalid, Result, TatError};
use crate::grid::{IndexRect, ScalarField};
use crate::medium::Medium;

/// Margin below 1 for a mask value to count as fully measured.
pub const STABILITY_DELTA: f64 = 1e-3;

fn check_set(medium: &Medium, set: &MeasurementSet) -> Result<()> {
    if set.grid != *medium.grid() {
        return Err(TatError::Shape("measurement set and medium live on different grids".into()));
    }
    Ok(())
}

fn check_k(medium: &Medium, k: &IndexRect) -> Result<()> {
    let o = medium.grid().omega;
    if k.i_lo < o.i_lo || k.i_hi > o.i_hi || k.j_lo < o.j_lo || k.j_hi > o.j_hi || k.i_lo > k.i_hi || k.j_lo > k.j_hi {
        return invalid("𝒦 must be a non-empty rectangle inside Ω̄");
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct UniquenessMap {
    /// Marked flags on the Ω̄ window, local index `a·ny + b`.
    pub marked: Vec<bool>,
    pub omega: IndexRect,
    pub k: IndexRect,
    pub verdict: bool,
}

impl UniquenessMap {
    pub fn is_marked(&self, i: usize, j: usize) -> bool {
        self.marked[(i - self.omega.i_lo) * self.omega.ny() + (j - self.omega.j_lo)]
    }

    pub fn field(&self, grid: &crate::grid::Grid) -> ScalarField {
        let mut f = ScalarField::zeros(grid);
        for (i, j) in self.omega.iter() {
            if self.is_marked(i, j) {
                f.set(i, j, 1.0);
            }
        }
        f
    }
}

/// Maximal runs of consecutive Γ nodes (cyclically) sharing one budget.
pub fn gamma_arcs(set: &MeasurementSet) -> Vec<(Vec<usize>, f64)> {
    let nb = set.in_gamma.len();
    let same = |a: usize, b: usize| set.in_gamma[a] && set.in_gamma[b] && set.s[a] == set.s[b];
    // Start scanning right after a break so that no arc wraps around index 0.
    let start = (0..nb).find(|&b| !same((b + nb - 1) % nb, b)).unwrap_or(0);
    let mut arcs: Vec<(Vec<usize>, f64)> = Vec::new();
    for step in 0..nb {
        let b = (start + step) % nb;
        if !set.in_gamma[b] {
            continue;
        }
        if step > 0 && same((b + nb - 1) % nb, b) {
            if let Some(last) = arcs.last_mut() {
                last.0.push(b);
                continue;
            }
        }
        arcs.push((vec![b], set.s[b]));
    }
    arcs
}

/// Marks `x ∈ Ω̄` with `dist(x, z) ≤ s(z) − dx` for some `z ∈ Γ`.
pub fn uniqueness_condition_check(medium: &Medium, set: &MeasurementSet, k: IndexRect) -> Result<UniquenessMap> {
    check_set(medium, set)?;
    check_k(medium, &k)?;
    if set.is_empty() {
        return invalid("Γ is empty");
    }
    let g = *medium.grid();
    let nodes = g.boundary_nodes();
    let arcs = gamma_arcs(set);
    let fields: Vec<(Vec<f64>, f64)> = arcs
        .par_iter()
        .map(|(idx, s)| {
            let seeds: Vec<(usize, usize)> = idx.iter().map(|&b| nodes[b]).collect();
            (travel_time(medium, &seeds).values, *s)
        })
        .collect();
    let omega = g.omega;
    let n = omega.nx() * omega.ny();
    let mut marked = vec![false; n];
    for (d, s) in &fields {
        for (m, v) in marked.iter_mut().zip(d) {
            *m |= *v <= s - g.dx;
        }
    }
    let my = omega.ny();
    let verdict = k.iter().all(|(i, j)| marked[(i - omega.i_lo) * my + (j - omega.j_lo)]);
    Ok(UniquenessMap { marked, omega, k, verdict })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Visibility {
    pub value: f64,
    pub chi_plus: f64,
    pub chi_minus: f64,
    pub exit_plus: Option<RayExit>,
    pub exit_minus: Option<RayExit>,
    pub trapped_plus: bool,
    pub trapped_minus: bool,
}

pub fn visibility_symbol(medium: &Medium, set: &MeasurementSet, p: PhasePoint) -> Result<Visibility> {
    check_set(medium, set)?;
    let e = exit_times(medium, p, RayOptions::default())?;
    let chi = |x: Option<RayExit>| x.map_or(0.0, |r| set.chi(r.time, r.point[0], r.point[1]));
    let (cp, cm) = (chi(e.plus), chi(e.minus));
    Ok(Visibility {
        value: 0.5 * (cp + cm),
        chi_plus: cp,
        chi_minus: cm,
        exit_plus: e.plus,
        exit_minus: e.minus,
        trapped_plus: e.plus.is_none(),
        trapped_minus: e.minus.is_none(),
    })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct FailingDirection {
    pub i: usize,
    pub j: usize,
    pub x: [f64; 2],
    pub theta: f64,
    pub chi_plus: f64,
    pub chi_minus: f64,
}

/// Per-node ray census over `n` codirections `θ_m = 2πm/n`.
#[derive(Debug, Clone)]
pub struct VisibilityCensus {
    pub k: IndexRect,
    pub n_directions: usize,
    /// `min_θ max(χ₊, χ₋)` per 𝒦 node, local index `a·ny + b` over `k`.
    pub worst: Vec<f64>,
    /// Direction-averaged symbol per 𝒦 node.
    pub mean_symbol: Vec<f64>,
    pub failing: Vec<FailingDirection>,
    pub verdict: bool,
    pub delta: f64,
}

impl VisibilityCensus {
    fn to_field(&self, grid: &crate::grid::Grid, v: &[f64]) -> ScalarField {
        let mut f = ScalarField::zeros(grid);
        let my = self.k.ny();
        for (i, j) in self.k.iter() {
            f.set(i, j, v[(i - self.k.i_lo) * my + (j - self.k.j_lo)]);
        }
        f
    }

    pub fn worst_field(&self, grid: &crate::grid::Grid) -> ScalarField {
        self.to_field(grid, &self.worst)
    }

    pub fn mean_field(&self, grid: &crate::grid::Grid) -> ScalarField {
        self.to_field(grid, &self.mean_symbol)
    }
}

/// Checks that every sampled phase point over 𝒦 has an exit with `χ ≥ 1 − δ`.
pub fn stability_condition_map(medium: &Medium, set: &MeasurementSet, k: IndexRect, n_directions: usize) -> Result<VisibilityCensus> {
    check_set(medium, set)?;
    check_k(medium, &k)?;
    if n_directions < 8 {
        return invalid("at least 8 directions are required");
    }
    let g = *medium.grid();
    let nodes: Vec<(usize, usize)> = k.iter().collect();
    let per_node: Vec<Result<(f64, f64, Vec<FailingDirection>)>> = nodes
        .par_iter()
        .map(|&(i, j)| {
            let (x, y) = g.coords(i, j);
            let mut worst: f64 = 1.0;
            let mut sum = 0.0;
            let mut failing = Vec::new();
            for m in 0..n_directions {
                let theta = 2.0 * std::f64::consts::PI * m as f64 / n_directions as f64;
                let p = PhasePoint::from_angle(medium, [x, y], theta)?;
                let v = visibility_symbol(medium, set, p)?;
                let best = v.chi_plus.max(v.chi_minus);
                worst = worst.min(best);
                sum += v.value;
                if best < 1.0 - STABILITY_DELTA {
                    failing.push(FailingDirection { i, j, x: [x, y], theta, chi_plus: v.chi_plus, chi_minus: v.chi_minus });
                }
            }
            Ok((worst, sum / n_directions as f64, failing))
        })
        .collect();
    let mut worst = Vec::with_capacity(nodes.len());
    let mut mean_symbol = Vec::with_capacity(nodes.len());
    let mut failing = Vec::new();
    for r in per_node {
        let (w, m, f) = r?;
        worst.push(w);
        mean_symbol.push(m);
        failing.extend(f);
    }
    let verdict = failing.is_empty();
    Ok(VisibilityCensus { k, n_directions, worst, mean_symbol, failing, verdict, delta: STABILITY_DELTA })
}
