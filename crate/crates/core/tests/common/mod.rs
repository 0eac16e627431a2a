//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tat_core::grid::{Grid, IndexRect, ScalarField};
use tat_core::medium::Medium;
use tat_core::phantoms::{make_medium, MediumKind, MediumParams};
use tat_core::wave::{cfl_dt, required_pad, TimeAxis};

/// Unit square Ω̄ with `n × n` nodes.
pub fn square(n: usize, pad: usize) -> Grid {
    let h = 1.0 / (n - 1) as f64;
    Grid::padded(n, n, h, h, pad).unwrap()
}

pub fn lens(grid: &Grid) -> Medium {
    make_medium(grid, MediumKind::Lens, &MediumParams::default()).unwrap()
}

/// Grid, medium and time axis sized for a forward solve of length `t`.
pub fn padded_setup(n: usize, t: f64, kind: MediumKind, safety: f64) -> (Medium, TimeAxis) {
    let g = square(n, 1);
    let m = make_medium(&g, kind, &MediumParams::default()).unwrap();
    let g = square(n, required_pad(&m, t) + 2);
    let m = make_medium(&g, kind, &MediumParams::default()).unwrap();
    let dt = cfl_dt(&m, safety).unwrap().dt;
    (m, TimeAxis::new(t, dt).unwrap())
}

/// Random field vanishing off the interior of Ω.
pub fn random_interior(grid: &Grid, seed: u64) -> ScalarField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut f = ScalarField::zeros(grid);
    for (i, j) in grid.omega.iter() {
        if grid.omega.is_interior(i, j) {
            f.set(i, j, rng.gen_range(-1.0..1.0));
        }
    }
    f
}

/// `P f` at one node written straight from the flux formula.
pub fn naive_p(m: &Medium, f: &ScalarField, i: usize, j: usize) -> f64 {
    let g = m.grid();
    let at = |fld: &ScalarField, a: usize, b: usize| fld.values[g.idx(a, b)];
    let wx = |a: usize, b: usize| (at(&m.g22, a, b) / at(&m.g11, a, b)).sqrt();
    let wy = |a: usize, b: usize| (at(&m.g11, a, b) / at(&m.g22, a, b)).sqrt();
    let fx = |a: usize, b: usize| 0.5 * (wx(a, b) + wx(a + 1, b)) * (at(f, a + 1, b) - at(f, a, b)) / g.dx;
    let fy = |a: usize, b: usize| 0.5 * (wy(a, b) + wy(a, b + 1)) * (at(f, a, b + 1) - at(f, a, b)) / g.dy;
    let div = (fx(i, j) - fx(i - 1, j)) / g.dx + (fy(i, j) - fy(i, j - 1)) / g.dy;
    let c = at(&m.c, i, j);
    let s = (at(&m.g11, i, j) * at(&m.g22, i, j)).sqrt();
    -c * c / s * div + at(&m.q, i, j) * at(f, i, j)
}

/// Weighted `L²` product over Ω̄ with trapezoid weights, from the definition.
pub fn naive_l2(m: &Medium, f: &ScalarField, h: &ScalarField) -> f64 {
    let g = m.grid();
    let o = g.omega;
    let mut s = 0.0;
    for (i, j) in o.iter() {
        let k = g.idx(i, j);
        let wi = if i == o.i_lo || i == o.i_hi { 0.5 } else { 1.0 };
        let wj = if j == o.j_lo || j == o.j_hi { 0.5 } else { 1.0 };
        let vol = (m.g11.values[k] * m.g22.values[k]).sqrt() / (m.c.values[k] * m.c.values[k]);
        s += wi * wj * vol * f.values[k] * h.values[k];
    }
    s * g.dx * g.dy
}

/// Straight-line exit time from `x` along unit direction `d` out of `[lo, hi]`.
pub fn box_exit(lo: [f64; 2], hi: [f64; 2], x: [f64; 2], d: [f64; 2]) -> f64 {
    let mut t = f64::INFINITY;
    for k in 0..2 {
        if d[k] > 0.0 {
            t = t.min((hi[k] - x[k]) / d[k]);
        } else if d[k] < 0.0 {
            t = t.min((lo[k] - x[k]) / d[k]);
        }
    }
    t
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 { a.abs() } else { gcd(b, a % b) }
}

/// Travel times on Ω̄ from one node by Dijkstra over a wide stencil
/// (all primitive offsets with entries up to 3), with edge lengths from
/// 8-point midpoint quadrature of the metric along each segment.
pub fn wide_dijkstra(m: &Medium, seed: (usize, usize)) -> Vec<f64> {
    let g = m.grid();
    let o = g.omega;
    let (mx, my) = (o.nx(), o.ny());
    let sampler = m.sampler();
    let mut offsets = Vec::new();
    for a in -3i64..=3 {
        for b in -3i64..=3 {
            if (a, b) != (0, 0) && gcd(a, b) == 1 {
                offsets.push((a, b));
            }
        }
    }
    let mut d = vec![f64::INFINITY; mx * my];
    let s0 = (seed.0 - o.i_lo) * my + (seed.1 - o.j_lo);
    d[s0] = 0.0;
    let mut heap = BinaryHeap::new();
    heap.push(Reverse((0u64, s0)));
    let key = |v: f64| v.to_bits();
    while let Some(Reverse((kv, n))) = heap.pop() {
        let v = f64::from_bits(kv);
        if v > d[n] {
            continue;
        }
        let (a, b) = ((n / my) as i64, (n % my) as i64);
        let (x0, y0) = g.coords(o.i_lo + a as usize, o.j_lo + b as usize);
        for &(da, db) in &offsets {
            let (na, nb) = (a + da, b + db);
            if na < 0 || nb < 0 || na >= mx as i64 || nb >= my as i64 {
                continue;
            }
            let (ex, ey) = (da as f64 * g.dx, db as f64 * g.dy);
            let mut len = 0.0;
            for q in 0..8 {
                let t = (q as f64 + 0.5) / 8.0;
                let k = sampler.eval(x0 + t * ex, y0 + t * ey);
                len += (k.g11 * ex * ex + k.g22 * ey * ey).sqrt() / k.c / 8.0;
            }
            let q = na as usize * my + nb as usize;
            if v + len < d[q] {
                d[q] = v + len;
                heap.push(Reverse((key(v + len), q)));
            }
        }
    }
    d
}

/// Nodes of `rect` whose 8-neighbourhood within `rect` contains a different flag.
pub fn near_interface(flags: &[bool], rect: &IndexRect, i: usize, j: usize) -> bool {
    let my = rect.ny();
    let at = |a: usize, b: usize| flags[(a - rect.i_lo) * my + (b - rect.j_lo)];
    let me = at(i, j);
    for di in -1i64..=1 {
        for dj in -1i64..=1 {
            let (a, b) = (i as i64 + di, j as i64 + dj);
            if a < rect.i_lo as i64 || b < rect.j_lo as i64 || a > rect.i_hi as i64 || b > rect.j_hi as i64 {
                continue;
            }
            if at(a as usize, b as usize) != me {
                return true;
            }
        }
    }
    false
}
