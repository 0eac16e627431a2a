mod common;

use std::f64::consts::FRAC_PI_2;

use common::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tat_core::grid::ScalarField;
use tat_core::io::{decode_field, encode_field, encode_trace, read_medium, read_trace, write_field, write_medium, write_trace};
use tat_core::phantoms::{make_medium, make_phantom, MediumKind, MediumParams, PhantomKind, PhantomParams};
use tat_core::wave::{BoundaryTrace, TimeAxis};
use tat_core::Grid;

/// Sums of `|∂x f|` and `|∂y f|` by forward differences over the whole grid.
fn gradient_mass(f: &ScalarField) -> (f64, f64) {
    let g = f.grid;
    let (mut gx, mut gy) = (0.0, 0.0);
    for j in 0..g.ny - 1 {
        for i in 0..g.nx - 1 {
            gx += (f.at(i + 1, j) - f.at(i, j)).abs();
            gy += (f.at(i, j + 1) - f.at(i, j)).abs();
        }
    }
    (gx, gy)
}

fn bars(angle: f64) -> ScalarField {
    let g = square(64, 2);
    let k = g.omega_fraction_rect((0.2, 0.8), (0.2, 0.8)).unwrap();
    make_phantom(&g, PhantomKind::Bars, k, 0, PhantomParams { count: 3, angle }).unwrap()
}

#[test]
fn bars_vary_across_their_length() {
    let (gx, gy) = gradient_mass(&bars(0.0));
    assert!(gy > 3.0 * gx, "horizontal bars: {gx} vs {gy}");
    let (gx, gy) = gradient_mass(&bars(FRAC_PI_2));
    assert!(gx > 3.0 * gy, "vertical bars: {gx} vs {gy}");
}

#[test]
fn same_seed_same_bytes() {
    let g = square(40, 2);
    let k = g.omega_fraction_rect((0.2, 0.8), (0.2, 0.8)).unwrap();
    let make = || encode_field(&make_phantom(&g, PhantomKind::Disks, k, 0, PhantomParams::default()).unwrap());
    assert_eq!(make(), make());
    let other = encode_field(&make_phantom(&g, PhantomKind::Disks, k, 1, PhantomParams::default()).unwrap());
    assert_ne!(make(), other);
}

#[test]
fn medium_file_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let g = square(24, 3);
    for kind in [MediumKind::Lens, MediumKind::RandomSmooth] {
        let p = MediumParams { anisotropy: 0.2, q_scale: 1.0, ..MediumParams::default() };
        let m = make_medium(&g, kind, &p).unwrap();
        let path = dir.path().join("m.tatm");
        write_medium(&path, &m).unwrap();
        assert_eq!(read_medium(&path).unwrap(), m);
    }
}

fn grid_and_values() -> impl Strategy<Value = (Grid, Vec<f64>)> {
    (16usize..28, 16usize..28, 0.01f64..0.2, 0.01f64..0.2, 1usize..4).prop_flat_map(|(nx, ny, dx, dy, pad)| {
        let g = Grid::padded(nx, ny, dx, dy, pad).unwrap();
        (Just(g), prop::collection::vec(-1e6f64..1e6, g.len()))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn fields_round_trip_bit_exactly((g, values) in grid_and_values()) {
        let f = ScalarField { grid: g, values };
        let bytes = encode_field(&f);
        prop_assert_eq!(decode_field(&mut &bytes[..]).unwrap(), f.clone());

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.f64f");
        write_field(&path, &f).unwrap();
        prop_assert_eq!(std::fs::read(&path).unwrap(), bytes);
    }

    #[test]
    fn traces_round_trip_bit_exactly((g, _) in grid_and_values(), nt in 1usize..12, dt in 1e-4f64..0.1, seed in any::<u64>()) {
        let mut t = BoundaryTrace::zeros(&g, TimeAxis { nt, dt });
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        t.values.iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.trc1");
        write_trace(&path, &t).unwrap();
        prop_assert_eq!(std::fs::read(&path).unwrap(), encode_trace(&t));
        prop_assert_eq!(read_trace(&path).unwrap(), t);
    }
}
