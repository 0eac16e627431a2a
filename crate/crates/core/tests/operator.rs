mod common;

use std::f64::consts::PI;

use common::*;
use proptest::prelude::*;
use tat_core::energy::{hd_norm, l2_norm};
use tat_core::grid::{Region, ScalarField};
use tat_core::medium::{Medium, Profile};
use tat_core::operator::{apply_p, inner_hd, inner_l2, Boundary};
use tat_core::phantoms::{make_medium, MediumKind, MediumParams};

const BC: Boundary = Boundary::DirichletZero(Region::Omega);

fn rough_medium(n: usize, seed: u64) -> Medium {
    let g = square(n, 2);
    let p = MediumParams { amp: 0.3, anisotropy: 0.3, q_scale: 2.0, seed, ..MediumParams::default() };
    make_medium(&g, MediumKind::RandomSmooth, &p).unwrap()
}

fn sine(g: &tat_core::Grid, p: usize, r: usize) -> ScalarField {
    let o = g.omega;
    let mut f = ScalarField::zeros(g);
    for (i, j) in o.iter() {
        let a = (i - o.i_lo) as f64 / (o.nx() - 1) as f64;
        let b = (j - o.j_lo) as f64 / (o.ny() - 1) as f64;
        f.set(i, j, (PI * p as f64 * a).sin() * (PI * r as f64 * b).sin());
    }
    tat_core::reconstruct::zero_off_interior(&f)
}

#[test]
fn sine_modes_are_eigenvectors() {
    let g = square(24, 1);
    let m = Medium::identity(&g);
    let n = (g.omega.nx() - 1) as f64;
    for (p, r) in [(1, 1), (2, 5), (7, 3)] {
        let f = sine(&g, p, r);
        let lam = 4.0 / (g.dx * g.dx) * (PI * p as f64 / (2.0 * n)).sin().powi(2)
            + 4.0 / (g.dy * g.dy) * (PI * r as f64 / (2.0 * n)).sin().powi(2);
        let pf = apply_p(&m, &f, BC).unwrap();
        let defect = pf.sub(&f.scaled(lam)).max_abs();
        assert!(defect < 1e-9 * lam, "mode ({p},{r}): defect {defect:e}");
        let ratio = hd_norm(&m, &f).unwrap() / l2_norm(&m, &f).unwrap();
        assert!((ratio - lam.sqrt()).abs() < 1e-10 * lam.sqrt());
    }
}

#[test]
fn unit_square_has_unit_area() {
    let g = square(17, 1);
    let m = Medium::identity(&g);
    let one = ScalarField::constant(&g, 1.0);
    assert!((inner_l2(&m, &one, &one, Region::Omega).unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn doubling_the_speed_quarters_the_inner_product() {
    let g = square(20, 1);
    let fast = Medium::from_profile(&g, Profile::Constant { c0: 2.0 }).unwrap();
    let slow = Medium::identity(&g);
    let (f, h) = (random_interior(&g, 1), random_interior(&g, 2));
    let a = inner_l2(&fast, &f, &h, Region::Omega).unwrap();
    let b = inner_l2(&slow, &f, &h, Region::Omega).unwrap();
    assert!((a - 0.25 * b).abs() < 1e-14 * b.abs().max(1.0));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn p_matches_the_flux_formula(seed in 0u64..1000, n in 12usize..24) {
        let m = rough_medium(n, seed);
        let g = *m.grid();
        let f = random_interior(&g, seed + 7);
        let pf = apply_p(&m, &f, BC).unwrap();
        for (i, j) in g.omega.shrink(1).unwrap().iter() {
            let r = naive_p(&m, &f, i, j);
            prop_assert!((r - pf.at(i, j)).abs() <= 1e-10 * r.abs().max(1.0));
        }
    }

    #[test]
    fn p_is_symmetric_and_positive(seed in 0u64..1000, n in 12usize..24) {
        let m = rough_medium(n, seed);
        let g = *m.grid();
        let (f, h) = (random_interior(&g, seed), random_interior(&g, seed + 1));
        let pf = apply_p(&m, &f, BC).unwrap();
        let ph = apply_p(&m, &h, BC).unwrap();
        let a = inner_l2(&m, &pf, &h, Region::Omega).unwrap();
        let b = inner_l2(&m, &f, &ph, Region::Omega).unwrap();
        prop_assert!((a - b).abs() <= 1e-11 * (a.abs() + b.abs()).max(1.0));
        prop_assert!((a - naive_l2(&m, &pf, &h)).abs() <= 1e-11 * a.abs().max(1.0));
        let e = inner_hd(&m, &f, &f, Region::Omega).unwrap();
        let p = inner_l2(&m, &pf, &f, Region::Omega).unwrap();
        prop_assert!(e > 0.0);
        prop_assert!((e - p).abs() <= 1e-11 * e);
    }
}
