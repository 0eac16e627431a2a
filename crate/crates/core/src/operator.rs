//! The discrete operator `P f = −c²/√det g · ∂_i(g^ii √det g ∂_i f) + q f` in
//! flux (divergence) form, plus the weighted `L²` and Dirichlet inner
//! products it is self-adjoint and positive for.
//!
//! With diagonal `g` the flux weights are `w_x = √(g22/g11)` and
//! `w_y = √(g11/g22)`; edge weights are arithmetic means of the two end
//! nodes. The `L²` quadrature weight of a node is `√det g / c²·dx·dy`,
//! halved along each axis on the perimeter of the summation rectangle.

use rayon::prelude::*;

use crate::error::{invalid, Result, TatError};
use crate::grid::{IndexRect, Region, ScalarField};
use crate::medium::Medium;

const PAR_MIN_NODES: usize = 8192;

/// Boundary handling for [`apply_p`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    /// Input must vanish on the perimeter of the region; output lives on its interior.
    DirichletZero(Region),
    /// Applied at every node off the outer wall, whatever the input's boundary values.
    FreeInterior,
}

/// Operator coefficients restricted to a rectangular window of the lattice,
/// with window-local row-major indexing `a·my + b`.
#[derive(Debug, Clone)]
pub(crate) struct Stencil {
    pub rect: IndexRect,
    pub mx: usize,
    pub my: usize,
    pref: Vec<f64>,
    wx: Vec<f64>,
    wy: Vec<f64>,
    q: Vec<f64>,
    qv: Vec<f64>,
    vol: Vec<f64>,
    idx2: f64,
    idy2: f64,
    cell: f64,
}

impl Stencil {
    pub fn new(medium: &Medium, rect: IndexRect) -> Self {
        let g = medium.grid();
        let (mx, my) = (rect.nx(), rect.ny());
        let mut pref = Vec::with_capacity(mx * my);
        let mut q = Vec::with_capacity(mx * my);
        let mut qv = Vec::with_capacity(mx * my);
        let mut vol = Vec::with_capacity(mx * my);
        let mut nwx = Vec::with_capacity(mx * my);
        let mut nwy = Vec::with_capacity(mx * my);
        for i in rect.i_lo..=rect.i_hi {
            for j in rect.j_lo..=rect.j_hi {
                let k = g.idx(i, j);
                let (c, g11, g22, qq) = (medium.c.values[k], medium.g11.values[k], medium.g22.values[k], medium.q.values[k]);
                let s = (g11 * g22).sqrt();
                pref.push(c * c / s);
                q.push(qq);
                let v = s / (c * c);
                vol.push(v);
                qv.push(qq * v);
                nwx.push((g22 / g11).sqrt());
                nwy.push((g11 / g22).sqrt());
            }
        }
        let mut wx = Vec::with_capacity((mx - 1) * my);
        for a in 0..mx - 1 {
            for b in 0..my {
                wx.push(0.5 * (nwx[a * my + b] + nwx[(a + 1) * my + b]));
            }
        }
        let mut wy = Vec::with_capacity(mx * (my - 1));
        for a in 0..mx {
            for b in 0..my - 1 {
                wy.push(0.5 * (nwy[a * my + b] + nwy[a * my + b + 1]));
            }
        }
        Stencil {
            rect,
            mx,
            my,
            pref,
            wx,
            wy,
            q,
            qv,
            vol,
            idx2: 1.0 / (g.dx * g.dx),
            idy2: 1.0 / (g.dy * g.dy),
            cell: g.dx * g.dy,
        }
    }

    pub fn len(&self) -> usize {
        self.mx * self.my
    }

    /// Negative flux divergence `−∂_i(w ∂_i u)` at interior window node `(a, b)`.
    #[inline(always)]
    fn neg_div(&self, u: &[f64], a: usize, b: usize) -> f64 {
        let my = self.my;
        let n = a * my + b;
        let un = u[n];
        let ex = a * my + b;
        let wxp = self.wx[ex];
        let wxm = self.wx[ex - my];
        let ey = a * (my - 1) + b;
        let wyp = self.wy[ey];
        let wym = self.wy[ey - 1];
        -((wxp * (u[n + my] - un) - wxm * (un - u[n - my])) * self.idx2
            + (wyp * (u[n + 1] - un) - wym * (un - u[n - 1])) * self.idy2)
    }

    #[inline(always)]
    fn p_at(&self, u: &[f64], a: usize, b: usize) -> f64 {
        let n = a * self.my + b;
        self.pref[n] * self.neg_div(u, a, b) + self.q[n] * u[n]
    }

    /// `out = P u` on interior window nodes; perimeter entries are set to zero.
    pub fn apply(&self, u: &[f64], out: &mut [f64]) {
        let my = self.my;
        let mx = self.mx;
        let row = |a: usize, r: &mut [f64]| {
            if a == 0 || a == mx - 1 {
                r.fill(0.0);
                return;
            }
            r[0] = 0.0;
            r[my - 1] = 0.0;
            for b in 1..my - 1 {
                r[b] = self.p_at(u, a, b);
            }
        };
        if self.len() >= PAR_MIN_NODES {
            out.par_chunks_mut(my).enumerate().for_each(|(a, r)| row(a, r));
        } else {
            out.chunks_mut(my).enumerate().for_each(|(a, r)| row(a, r));
        }
    }

    /// `out = vol · P u`, the symmetric (Euclidean) form used by the elliptic solver.
    pub fn apply_weighted(&self, u: &[f64], out: &mut [f64]) {
        let my = self.my;
        let mx = self.mx;
        let row = |a: usize, r: &mut [f64]| {
            if a == 0 || a == mx - 1 {
                r.fill(0.0);
                return;
            }
            r[0] = 0.0;
            r[my - 1] = 0.0;
            for b in 1..my - 1 {
                let n = a * my + b;
                r[b] = self.neg_div(u, a, b) + self.qv[n] * u[n];
            }
        };
        if self.len() >= PAR_MIN_NODES {
            out.par_chunks_mut(my).enumerate().for_each(|(a, r)| row(a, r));
        } else {
            out.chunks_mut(my).enumerate().for_each(|(a, r)| row(a, r));
        }
    }

    /// Diagonal of [`Stencil::apply_weighted`] at an interior node.
    pub fn weighted_diagonal(&self, a: usize, b: usize) -> f64 {
        let my = self.my;
        let n = a * my + b;
        let ey = a * (my - 1) + b;
        (self.wx[n] + self.wx[n - my]) * self.idx2 + (self.wy[ey] + self.wy[ey - 1]) * self.idy2 + self.qv[n]
    }

    /// One leapfrog step on interior nodes:
    /// `next = 2 cur − prev − dt² P cur`. Perimeter entries of `next` are left
    /// untouched for the caller to impose.
    pub fn leapfrog(&self, prev: &[f64], cur: &[f64], next: &mut [f64], dt2: f64) {
        let my = self.my;
        let mx = self.mx;
        let row = |a: usize, r: &mut [f64]| {
            if a == 0 || a == mx - 1 {
                return;
            }
            let base = a * my;
            for b in 1..my - 1 {
                let n = base + b;
                r[b] = 2.0 * cur[n] - prev[n] - dt2 * self.p_at(cur, a, b);
            }
        };
        if self.len() >= PAR_MIN_NODES {
            next.par_chunks_mut(my).enumerate().for_each(|(a, r)| row(a, r));
        } else {
            next.chunks_mut(my).enumerate().for_each(|(a, r)| row(a, r));
        }
    }

    /// Taylor start `next = cur − dt·vel − (dt²/2) P cur` on interior nodes.
    pub fn taylor_step(&self, cur: &[f64], vel: &[f64], next: &mut [f64], dt: f64) {
        let my = self.my;
        for a in 1..self.mx - 1 {
            for b in 1..my - 1 {
                let n = a * my + b;
                next[n] = cur[n] - dt * vel[n] - 0.5 * dt * dt * self.p_at(cur, a, b);
            }
        }
    }

    #[inline]
    fn trap(&self, a: usize, b: usize) -> f64 {
        let wa = if a == 0 || a == self.mx - 1 { 0.5 } else { 1.0 };
        let wb = if b == 0 || b == self.my - 1 { 0.5 } else { 1.0 };
        wa * wb
    }

    fn row_sums(&self, f: impl Fn(usize) -> f64 + Sync) -> f64 {
        let parts: Vec<f64> = if self.len() >= PAR_MIN_NODES {
            (0..self.mx).into_par_iter().map(&f).collect()
        } else {
            (0..self.mx).map(&f).collect()
        };
        parts.iter().sum()
    }

    /// Weighted `L²` inner product over the window.
    pub fn l2(&self, u: &[f64], v: &[f64]) -> f64 {
        let my = self.my;
        self.row_sums(|a| {
            let mut s = 0.0;
            for b in 0..my {
                let n = a * my + b;
                s += self.trap(a, b) * self.vol[n] * u[n] * v[n];
            }
            s
        }) * self.cell
    }

    /// Dirichlet form `Σ_edges w Δu Δv + Σ_nodes q vol u v` over the window,
    /// with edges along the window perimeter at half weight.
    pub fn dirichlet(&self, u: &[f64], v: &[f64]) -> f64 {
        let my = self.my;
        let mx = self.mx;
        self.row_sums(|a| {
            let mut s = 0.0;
            let xrow_w = if a == 0 || a == mx - 1 { 0.5 } else { 1.0 };
            for b in 0..my {
                let n = a * my + b;
                if a + 1 < mx {
                    let ew = if b == 0 || b == my - 1 { 0.5 } else { 1.0 };
                    s += ew * self.wx[n] * (u[n + my] - u[n]) * (v[n + my] - v[n]) * self.idx2;
                }
                if b + 1 < my {
                    let e = a * (my - 1) + b;
                    s += xrow_w * self.wy[e] * (u[n + 1] - u[n]) * (v[n + 1] - v[n]) * self.idy2;
                }
                s += self.trap(a, b) * self.qv[n] * u[n] * v[n];
            }
            s
        }) * self.cell
    }

    pub fn extract(&self, f: &ScalarField) -> Vec<f64> {
        let r = self.rect;
        let mut out = Vec::with_capacity(self.len());
        for i in r.i_lo..=r.i_hi {
            let base = f.grid.idx(i, r.j_lo);
            out.extend_from_slice(&f.values[base..base + self.my]);
        }
        out
    }

    /// Embeds window values into a zero field on the full grid.
    pub fn embed(&self, grid: &crate::grid::Grid, local: &[f64]) -> ScalarField {
        let mut f = ScalarField::zeros(grid);
        let r = self.rect;
        for (a, i) in (r.i_lo..=r.i_hi).enumerate() {
            let base = grid.idx(i, r.j_lo);
            f.values[base..base + self.my].copy_from_slice(&local[a * self.my..(a + 1) * self.my]);
        }
        f
    }
}

fn check_pair(medium: &Medium, f: &ScalarField, h: &ScalarField) -> Result<()> {
    if f.grid != *medium.grid() || h.grid != *medium.grid() {
        return Err(TatError::Shape("field and medium live on different grids".into()));
    }
    f.check_finite("field")?;
    h.check_finite("field")
}

fn perimeter_max(f: &ScalarField, rect: &IndexRect) -> f64 {
    let mut m: f64 = 0.0;
    for i in rect.i_lo..=rect.i_hi {
        m = m.max(f.at(i, rect.j_lo).abs()).max(f.at(i, rect.j_hi).abs());
    }
    for j in rect.j_lo..=rect.j_hi {
        m = m.max(f.at(rect.i_lo, j).abs()).max(f.at(rect.i_hi, j).abs());
    }
    m
}

/// Relative level below which perimeter values count as zero Dirichlet data.
pub const DIRICHLET_TOL: f64 = 1e-10;

fn require_dirichlet(f: &ScalarField, rect: &IndexRect, what: &str) -> Result<()> {
    let scale = f.max_abs();
    let edge = perimeter_max(f, rect);
    if edge > DIRICHLET_TOL * scale.max(f64::MIN_POSITIVE) && edge > 0.0 {
        return invalid(format!(
            "{what} must vanish on the region boundary (max |value| there {edge:.3e}, field scale {scale:.3e})"
        ));
    }
    Ok(())
}

/// Applies `P`. The result is zero wherever the operator is not evaluated.
pub fn apply_p(medium: &Medium, f: &ScalarField, bc: Boundary) -> Result<ScalarField> {
    if f.grid != *medium.grid() {
        return Err(TatError::Shape("field and medium live on different grids".into()));
    }
    f.check_finite("field")?;
    let g = medium.grid();
    let rect = match bc {
        Boundary::DirichletZero(region) => {
            let r = g.rect(region);
            require_dirichlet(f, &r, "input")?;
            r
        }
        Boundary::FreeInterior => g.full_rect(),
    };
    let st = Stencil::new(medium, rect);
    let local = st.extract(f);
    let mut out = vec![0.0; st.len()];
    st.apply(&local, &mut out);
    Ok(st.embed(g, &out))
}

/// `(f, h)_{L²(c⁻² dVol)}` over a region.
pub fn inner_l2(medium: &Medium, f: &ScalarField, h: &ScalarField, region: Region) -> Result<f64> {
    check_pair(medium, f, h)?;
    let st = Stencil::new(medium, medium.grid().rect(region));
    Ok(st.l2(&st.extract(f), &st.extract(h)))
}

/// Dirichlet inner product `∫ (g^ij ∂_i f ∂_j h + c⁻² q f h) dVol`, for
/// fields vanishing on the region boundary.
pub fn inner_hd(medium: &Medium, f: &ScalarField, h: &ScalarField, region: Region) -> Result<f64> {
    check_pair(medium, f, h)?;
    let rect = medium.grid().rect(region);
    require_dirichlet(f, &rect, "first argument")?;
    require_dirichlet(h, &rect, "second argument")?;
    dirichlet_form(medium, f, h, region)
}

/// The same bilinear form as [`inner_hd`] without the boundary check, for
/// `H¹` fields such as a harmonic extension.
pub fn dirichlet_form(medium: &Medium, f: &ScalarField, h: &ScalarField, region: Region) -> Result<f64> {
    check_pair(medium, f, h)?;
    let st = Stencil::new(medium, medium.grid().rect(region));
    Ok(st.dirichlet(&st.extract(f), &st.extract(h)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use crate::medium::{Bump, Profile};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn lens_medium(n: usize) -> Medium {
        let g = Grid::padded(n, n, 1.0 / (n - 1) as f64, 1.0 / (n - 1) as f64, 3).unwrap();
        let p = Profile::Bumps {
            c: vec![Bump { center: [0.5, 0.5], radius: 0.3, amp: -0.3 }],
            g11: vec![Bump { center: [0.4, 0.6], radius: 0.2, amp: 0.2 }],
            g22: vec![Bump { center: [0.6, 0.4], radius: 0.25, amp: -0.2 }],
            q: vec![Bump { center: [0.5, 0.5], radius: 0.4, amp: 1.0 }],
            q_scale: 3.0,
        };
        Medium::from_profile(&g, p).unwrap()
    }

    fn random_dirichlet(m: &Medium, seed: u64) -> ScalarField {
        let g = *m.grid();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut f = ScalarField::zeros(&g);
        for (i, j) in g.omega.iter() {
            if g.omega.is_interior(i, j) {
                f.set(i, j, rng.gen_range(-1.0..1.0));
            }
        }
        f
    }

    #[test]
    fn constant_is_annihilated_without_potential() {
        let g = Grid::padded(20, 20, 0.05, 0.05, 3).unwrap();
        let m = Medium::identity(&g);
        let f = ScalarField::constant(&g, 3.7);
        let pf = apply_p(&m, &f, Boundary::FreeInterior).unwrap();
        assert!(pf.max_abs() < 1e-10);
    }

    #[test]
    fn dirichlet_input_is_checked() {
        let m = lens_medium(24);
        let f = ScalarField::constant(m.grid(), 1.0);
        assert!(apply_p(&m, &f, Boundary::DirichletZero(Region::Omega)).is_err());
        assert!(inner_hd(&m, &f, &f, Region::Omega).is_err());
    }

    #[test]
    fn self_adjoint_and_sbp_identity_on_lens() {
        let m = lens_medium(32);
        let f = random_dirichlet(&m, 1);
        let h = random_dirichlet(&m, 2);
        let bc = Boundary::DirichletZero(Region::Omega);
        let pf = apply_p(&m, &f, bc).unwrap();
        let ph = apply_p(&m, &h, bc).unwrap();
        let a = inner_l2(&m, &pf, &h, Region::Omega).unwrap();
        let b = inner_l2(&m, &f, &ph, Region::Omega).unwrap();
        let c = inner_hd(&m, &f, &h, Region::Omega).unwrap();
        let scale = a.abs().max(1.0);
        assert!((a - b).abs() <= 1e-12 * scale * 10.0, "{a} vs {b}");
        assert!((a - c).abs() <= 1e-12 * scale * 10.0, "{a} vs {c}");
        assert!(inner_hd(&m, &f, &f, Region::Omega).unwrap() > 0.0);
    }

    #[test]
    fn l2_weight_is_inverse_speed_squared() {
        let g = Grid::padded(21, 21, 0.05, 0.05, 2).unwrap();
        let one = Medium::identity(&g);
        let two = Medium::from_profile(&g, Profile::Constant { c0: 2.0 }).unwrap();
        let f = ScalarField::from_fn(&g, |x, y| (x * 3.0).sin() + y);
        let h = ScalarField::from_fn(&g, |x, y| x * y + 0.3);
        let a = inner_l2(&one, &f, &h, Region::Omega).unwrap();
        let b = inner_l2(&two, &f, &h, Region::Omega).unwrap();
        assert!((b - 0.25 * a).abs() < 1e-13 * a.abs());
        let area = inner_l2(&one, &ScalarField::constant(&g, 1.0), &ScalarField::constant(&g, 1.0), Region::Omega).unwrap();
        assert!((area - 1.0).abs() < 1e-12);
        let neg = h.scaled(-1.0);
        let n2 = inner_l2(&one, &h, &neg, Region::Omega).unwrap();
        let p2 = inner_l2(&one, &h, &h, Region::Omega).unwrap();
        assert!((n2 + p2).abs() < 1e-14);
    }

    #[test]
    fn parallel_and_serial_application_agree_bitwise() {
        let g = Grid::padded(120, 100, 0.01, 0.01, 3).unwrap();
        let m = Medium::identity(&g);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let f = ScalarField::from_fn(&g, |_, _| rng.gen_range(-1.0..1.0));
        let st = Stencil::new(&m, g.full_rect());
        let u = st.extract(&f);
        let mut par = vec![0.0; st.len()];
        st.apply(&u, &mut par);
        let mut ser = vec![0.0; st.len()];
        for a in 1..st.mx - 1 {
            for b in 1..st.my - 1 {
                ser[a * st.my + b] = st.p_at(&u, a, b);
            }
        }
        assert_eq!(par, ser);
    }
}
