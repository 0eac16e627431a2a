mod common;

use common::*;
use proptest::prelude::*;
use tat_core::grid::ScalarField;
use tat_core::medium::{Medium, Profile};
use tat_core::phantoms::{make_phantom, MediumKind, PhantomKind, PhantomParams};
use tat_core::rays::MeasurementSet;
use tat_core::reconstruct::{
    apply_k, contraction_diagnostics, hd, masked_reconstruct, neumann_reconstruct, pseudo_inverse_a, zero_off_interior,
    NeumannOptions,
};
use tat_core::wave::{backward_dirichlet_solve, cfl_dt, forward_solve, SolveOptions};

fn gaussian(m: &Medium, seed: u64) -> ScalarField {
    let k = m.grid().omega_fraction_rect((0.2, 0.8), (0.2, 0.8)).unwrap();
    make_phantom(m.grid(), PhantomKind::Gaussians, k, seed, PhantomParams::default()).unwrap()
}

fn opts(max_iter: usize, truth: &ScalarField) -> NeumannOptions<'_> {
    NeumannOptions { max_iter, rel_update_tol: 0.0, ground_truth: Some(truth), cg: Default::default() }
}

#[test]
fn doubling_the_speed_halves_the_step() {
    let g = square(40, 2);
    let slow = cfl_dt(&Medium::identity(&g), 0.5).unwrap().dt;
    let fast = cfl_dt(&Medium::from_profile(&g, Profile::Constant { c0: 2.0 }).unwrap(), 0.5).unwrap().dt;
    assert!((fast - 0.5 * slow).abs() < 1e-15);
    let h = g.dx;
    assert!((slow - 0.5 * h / 2f64.sqrt()).abs() < 1e-15);
}

#[test]
fn local_energy_decays_after_the_diagonal_transit() {
    let (m, time) = padded_setup(128, 1.6, MediumKind::Constant, 0.5);
    let f = zero_off_interior(&ScalarField::from_fn(m.grid(), |x, y| {
        (-((x - 0.5).powi(2) + (y - 0.5).powi(2)) / (2.0 * 0.03f64.powi(2))).exp()
    }));
    let sol = forward_solve(&m, &f, &time, SolveOptions { energy_log: true }).unwrap();
    let (first, last) = (sol.energy_omega[0].total, sol.energy_omega.last().unwrap().total);
    assert!(last / first <= 0.05, "E_Ω(T)/E_Ω(0) = {}", last / first);
    assert_eq!(sol.energy_omega.len(), sol.energy_full.len());
    for (a, b) in sol.energy_omega.iter().zip(&sol.energy_full) {
        assert!(a.total <= b.total * (1.0 + 1e-12));
    }
}

fn masked_and_full(t: f64) -> (f64, f64) {
    let (m, time) = padded_setup(64, t, MediumKind::Lens, 0.5);
    let f = gaussian(&m, 2);
    let data = forward_solve(&m, &f, &time, SolveOptions::default()).unwrap().trace;
    let full = neumann_reconstruct(&m, &data, opts(4, &f), false).unwrap();
    let set = MeasurementSet::full(m.grid(), time.t_final()).unwrap();
    let masked = masked_reconstruct(&m, &data, &set, opts(4, &f), false).unwrap();
    (full.report.final_error_hd().unwrap(), masked.report.final_error_hd().unwrap())
}

// χ = 1 on the whole boundary until 0.9·T, which exceeds T(Ω) ≈ 1.565 for
// the lens. The masked iteration settles at the part of f carried by the
// late-time tail that the taper removes, so it stays well below 1% but
// does not track the full-data error; a later taper shrinks the gap.
#[test]
fn full_mask_is_close_to_full_data() {
    let (full_a, masked_a) = masked_and_full(1.9);
    let (full_b, masked_b) = masked_and_full(2.5);
    assert!(full_a < masked_a && full_b < masked_b);
    assert!(masked_a < 1e-2, "masked error {masked_a:e}");
    assert!(masked_b < 0.5 * masked_a, "{masked_b:e} vs {masked_a:e}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn stepping_back_recovers_the_start(seed in 0u64..1000, t in 0.2f64..0.8) {
        let (m, time) = padded_setup(24, t, MediumKind::Lens, 0.5);
        let f = random_interior(m.grid(), seed);
        let fw = forward_solve(&m, &f, &time, SolveOptions::default()).unwrap();
        let bw = backward_dirichlet_solve(&m, &fw.trace, &fw.final_state.u, &fw.final_state.ut, SolveOptions::default()).unwrap();
        prop_assert!(bw.compatible);
        prop_assert!(bw.v0.sub(&f).max_abs() <= 1e-10 * f.max_abs());
    }

    #[test]
    fn k_splits_the_identity(seed in 0u64..1000, t in 0.3f64..1.5) {
        let (m, time) = padded_setup(32, t, MediumKind::Lens, 0.5);
        let f = gaussian(&m, seed);
        let kf = apply_k(&m, &f, &time).unwrap();
        let data = forward_solve(&m, &f, &time, SolveOptions::default()).unwrap().trace;
        let af = pseudo_inverse_a(&m, &data).unwrap();
        prop_assert!(f.sub(&kf).sub(&af).max_abs() <= 1e-12 * f.max_abs());
    }

    #[test]
    fn k_does_not_expand_and_obeys_the_energy_split(seed in 0u64..1000, t in 0.3f64..2.5) {
        let (m, time) = padded_setup(48, t, MediumKind::Lens, 0.5);
        let f = gaussian(&m, seed);
        let d = contraction_diagnostics(&m, &f, &time).unwrap();
        prop_assert!(d.kf_norm <= d.f_norm * 1.02);
        prop_assert!(d.kf_norm <= d.energy_ratio().sqrt() * d.f_norm * 1.02);
        prop_assert!(d.split_energy <= d.et * (1.0 + 1e-6));
        prop_assert!(d.orthogonality <= 1e-8);
        prop_assert!((d.f_norm - hd(&m, &f).unwrap()).abs() <= 1e-12 * d.f_norm);
    }
}
