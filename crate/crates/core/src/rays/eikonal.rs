//! Travel-time distance in the metric `c⁻²g` on the Ω̄ lattice.
//!
//! Isotropic metrics use first-order fast marching; anisotropic (diagonal)
//! metrics use Dijkstra on the 8-neighbour graph with trapezoidal edge
//! lengths.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use crate::grid::IndexRect;
use crate::medium::Medium;

#[derive(Debug, Clone, Copy, PartialEq)]
struct Key(f64);

impl Eq for Key {}

impl PartialOrd for Key {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Key {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// Distances on the Ω̄ window, local index `a·ny + b`.
#[derive(Debug, Clone)]
pub struct DistanceField {
    pub rect: IndexRect,
    pub values: Vec<f64>,
}

impl DistanceField {
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[(i - self.rect.i_lo) * self.rect.ny() + (j - self.rect.j_lo)]
    }
}

fn local_setup(medium: &Medium) -> (IndexRect, usize, usize) {
    let r = medium.grid().omega;
    (r, r.nx(), r.ny())
}

/// First-order fast marching for `|∇d| = √g / c`; assumes `g₁₁ = g₂₂`.
pub fn fast_marching(medium: &Medium, seeds: &[(usize, usize)]) -> DistanceField {
    let (rect, mx, my) = local_setup(medium);
    let g = medium.grid();
    let (dx, dy) = (g.dx, g.dy);
    let n = mx * my;
    let slow: Vec<f64> = rect
        .iter()
        .map(|(i, j)| {
            let k = g.idx(i, j);
            medium.g11.values[k].sqrt() / medium.c.values[k]
        })
        .collect();
    let mut d = vec![f64::INFINITY; n];
    let mut done = vec![false; n];
    let mut heap = BinaryHeap::new();
    for &(i, j) in seeds {
        let k = (i - rect.i_lo) * my + (j - rect.j_lo);
        d[k] = 0.0;
        heap.push(Reverse((Key(0.0), k)));
    }
    while let Some(Reverse((Key(v), k))) = heap.pop() {
        if done[k] || v > d[k] {
            continue;
        }
        done[k] = true;
        let (a, b) = (k / my, k % my);
        let mut nbrs = Vec::with_capacity(4);
        if a > 0 {
            nbrs.push(k - my);
        }
        if a + 1 < mx {
            nbrs.push(k + my);
        }
        if b > 0 {
            nbrs.push(k - 1);
        }
        if b + 1 < my {
            nbrs.push(k + 1);
        }
        for nb in nbrs {
            if done[nb] {
                continue;
            }
            let (na, nbb) = (nb / my, nb % my);
            let pick = |u: Option<usize>, w: Option<usize>| -> f64 {
                let f = |o: Option<usize>| o.filter(|&q| done[q]).map_or(f64::INFINITY, |q| d[q]);
                f(u).min(f(w))
            };
            let tx = pick(na.checked_sub(1).map(|q| q * my + nbb), (na + 1 < mx).then(|| (na + 1) * my + nbb));
            let ty = pick(nbb.checked_sub(1).map(|q| na * my + q), (nbb + 1 < my).then(|| na * my + nbb + 1));
            let s = slow[nb];
            let cand = if tx.is_finite() && ty.is_finite() {
                let (ax, ay) = (1.0 / (dx * dx), 1.0 / (dy * dy));
                let qa = ax + ay;
                let qb = -2.0 * (tx * ax + ty * ay);
                let qc = tx * tx * ax + ty * ty * ay - s * s;
                let disc = qb * qb - 4.0 * qa * qc;
                let two = if disc >= 0.0 { (-qb + disc.sqrt()) / (2.0 * qa) } else { f64::NEG_INFINITY };
                if two >= tx.max(ty) {
                    two
                } else {
                    (tx + s * dx).min(ty + s * dy)
                }
            } else if tx.is_finite() {
                tx + s * dx
            } else {
                ty + s * dy
            };
            if cand < d[nb] {
                d[nb] = cand;
                heap.push(Reverse((Key(cand), nb)));
            }
        }
    }
    DistanceField { rect, values: d }
}

/// Dijkstra on the 8-neighbour graph of Ω̄ with edge length
/// `½(ℓ(a) + ℓ(b))`, `ℓ = √(g₁₁Δx² + g₂₂Δy²)/c`.
pub fn dijkstra(medium: &Medium, seeds: &[(usize, usize)]) -> DistanceField {
    let (rect, mx, my) = local_setup(medium);
    let g = medium.grid();
    let coef: Vec<(f64, f64, f64)> = rect
        .iter()
        .map(|(i, j)| {
            let k = g.idx(i, j);
            (medium.g11.values[k], medium.g22.values[k], medium.c.values[k])
        })
        .collect();
    let n = mx * my;
    let mut d = vec![f64::INFINITY; n];
    let mut heap = BinaryHeap::new();
    for &(i, j) in seeds {
        let k = (i - rect.i_lo) * my + (j - rect.j_lo);
        d[k] = 0.0;
        heap.push(Reverse((Key(0.0), k)));
    }
    let len = |k: usize, ex: f64, ey: f64| {
        let (a, b, c) = coef[k];
        (a * ex * ex + b * ey * ey).sqrt() / c
    };
    while let Some(Reverse((Key(v), k))) = heap.pop() {
        if v > d[k] {
            continue;
        }
        let (a, b) = ((k / my) as isize, (k % my) as isize);
        for da in -1isize..=1 {
            for db in -1isize..=1 {
                if da == 0 && db == 0 {
                    continue;
                }
                let (na, nb) = (a + da, b + db);
                if na < 0 || nb < 0 || na >= mx as isize || nb >= my as isize {
                    continue;
                }
                let q = na as usize * my + nb as usize;
                let (ex, ey) = (da as f64 * g.dx, db as f64 * g.dy);
                let w = 0.5 * (len(k, ex, ey) + len(q, ex, ey));
                if v + w < d[q] {
                    d[q] = v + w;
                    heap.push(Reverse((Key(v + w), q)));
                }
            }
        }
    }
    DistanceField { rect, values: d }
}

/// Fast marching for isotropic media, Dijkstra otherwise.
pub fn travel_time(medium: &Medium, seeds: &[(usize, usize)]) -> DistanceField {
    if medium.is_isotropic() {
        fast_marching(medium, seeds)
    } else {
        dijkstra(medium, seeds)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;

    #[test]
    fn plane_front_from_a_side_is_exact() {
        let g = Grid::padded(21, 21, 0.05, 0.05, 2).unwrap();
        let m = Medium::identity(&g);
        let seeds: Vec<_> = (g.omega.i_lo..=g.omega.i_hi).map(|i| (i, g.omega.j_lo)).collect();
        let d = fast_marching(&m, &seeds);
        for (i, j) in g.omega.iter() {
            let y = g.coords(i, j).1;
            assert!((d.at(i, j) - y).abs() < 1e-12);
        }
        let d = dijkstra(&m, &seeds);
        for (i, j) in g.omega.iter() {
            assert!((d.at(i, j) - g.coords(i, j).1).abs() < 1e-12);
        }
    }

    #[test]
    fn point_source_is_close_to_euclidean() {
        let g = Grid::padded(41, 41, 0.025, 0.025, 2).unwrap();
        let m = Medium::identity(&g);
        let d = fast_marching(&m, &[g.nearest(0.5, 0.5)]);
        let (i, j) = g.nearest(0.9, 0.8);
        assert!((d.at(i, j) - 0.5).abs() < 0.03);
    }
}
