mod support;

use std::f64::consts::PI;

use proptest::prelude::*;
use qtnn_core::qt::{
    apply_energy_map, bound_state_energies, qt_activate, transmission, transmission_grad,
    BRANCH_WINDOW,
};
use qtnn_core::{Barrier, EnergyMap, SeedStream};
use support::oracle_transmission;

fn barrier(v0: f64, a: f64) -> Barrier {
    Barrier::new(v0, a).unwrap()
}

const GRID_V0: [f64; 4] = [0.5, 1.0, 2.0, 5.0];
const GRID_A: [f64; 3] = [0.5, 1.0, 2.0];

#[test]
fn oracle_reproduces_reference_points() {
    assert!((oracle_transmission(0.5, 1.0, 1.0) - 0.6293).abs() < 1e-4);
    assert!((oracle_transmission(2.0, 1.0, 1.0) - 0.9187).abs() < 1e-4);
    assert!((oracle_transmission(1.0 + PI * PI, 1.0, 1.0) - 1.0).abs() < 1e-10);
}

#[test]
fn closed_form_matches_transfer_matrix() {
    let b = barrier(1.0, 1.0);
    assert!((transmission(0.5, &b).unwrap() - oracle_transmission(0.5, 1.0, 1.0)).abs() < 1e-6);
    assert!((transmission(2.0, &b).unwrap() - oracle_transmission(2.0, 1.0, 1.0)).abs() < 1e-6);
    for &v0 in &GRID_V0 {
        for &a in &GRID_A {
            let b = barrier(v0, a);
            for e in [0.05, 0.3, 0.77, 0.999, 1.001, 1.4, 3.0, 11.0] {
                let e = e * v0;
                let expect = oracle_transmission(e, v0, a);
                let got = transmission(e, &b).unwrap();
                assert!(
                    (got - expect).abs() < 1e-9,
                    "V0={v0} a={a} E={e}: {got} vs {expect}"
                );
            }
        }
    }
}

#[test]
fn activation_at_zero_matches_oracle() {
    let (act, _) = qt_activate(&[0.0], &barrier(1.0, 1.0), &EnergyMap::default()).unwrap();
    let expect = oracle_transmission(2f64.ln(), 1.0, 1.0);
    assert!((act[0] - expect).abs() < 1e-9);
    assert!((act[0] - 0.7147).abs() < 1e-4);
}

#[test]
fn branch_point_and_continuity() {
    for &v0 in &GRID_V0 {
        for &a in &GRID_A {
            let b = barrier(v0, a);
            let exact = 1.0 / (1.0 + a * a * v0 / 4.0);
            assert!((transmission(v0, &b).unwrap() - exact).abs() < 1e-12);
            let (e_lo, e_hi) = (
                v0 * (1.0 - 2.0 * BRANCH_WINDOW),
                v0 * (1.0 + 2.0 * BRANCH_WINDOW),
            );
            let lo = transmission(e_lo, &b).unwrap();
            let hi = transmission(e_hi, &b).unwrap();
            // The two probes straddle the window 4δV₀ apart; beyond the
            // first-order change along the slope there must be no jump.
            let slope = transmission_grad(v0, &b).unwrap();
            assert!(
                (hi - lo - slope * (e_hi - e_lo)).abs() < 1e-8,
                "V0={v0} a={a}"
            );
            for (e, t) in [(e_lo, lo), (e_hi, hi)] {
                assert!(
                    (t - exact - slope * (e - v0)).abs() < 1e-10,
                    "V0={v0} a={a} E={e}"
                );
            }
            if v0 == 1.0 && a == 1.0 {
                assert!((lo - exact).abs() < 1e-6 && (hi - exact).abs() < 1e-6);
            }
            for side in [-1.0, 1.0] {
                let edge = v0 * (1.0 + side * BRANCH_WINDOW);
                let (e_in, e_out) = (edge * (1.0 - side * 1e-9), edge * (1.0 + side * 1e-9));
                let inside = transmission(e_in, &b).unwrap();
                let outside = transmission(e_out, &b).unwrap();
                let jump = inside - outside - slope * (e_in - e_out);
                assert!(
                    jump.abs() < 1e-10,
                    "V0={v0} a={a} side={side} jump={jump:e}"
                );
            }
        }
    }
}

#[test]
fn limits() {
    let b = Barrier::default();
    assert!(transmission(1e-10, &b).unwrap() < 1e-6);
    assert!(transmission(1e6, &b).unwrap() > 1.0 - 1e-4);
}

#[test]
fn resonances_are_exact() {
    for &a in &GRID_A {
        for &v0 in &GRID_V0 {
            let b = barrier(v0, a);
            for n in 1..=5 {
                let e = v0 + (n as f64 * PI / a).powi(2);
                assert!(
                    (transmission(e, &b).unwrap() - 1.0).abs() < 1e-12,
                    "n={n} V0={v0} a={a}"
                );
            }
        }
    }
    let b = Barrier::default();
    assert!(transmission_grad(1.0 + PI * PI, &b).unwrap().abs() < 1e-9);
}

#[test]
fn increasing_below_the_barrier() {
    for &v0 in &GRID_V0 {
        for &a in &GRID_A {
            let b = barrier(v0, a);
            let mut prev = 0.0;
            for i in 1..=10_000 {
                let e = v0 * i as f64 / 10_001.0;
                let t = transmission(e, &b).unwrap();
                assert!(t > prev, "V0={v0} a={a} E={e}");
                prev = t;
            }
        }
    }
}

#[test]
fn opaque_barriers_stay_finite() {
    for ka in [20.0, 100.0, 355.0, 1e3, 1e4] {
        let b = barrier(4.0, ka / 2.0 * 2f64.sqrt());
        for e in [1e-300, 1e-8, 0.5, 2.0, 3.999_999] {
            let t = transmission(e, &b).unwrap();
            let g = transmission_grad(e, &b).unwrap();
            assert!(
                t.is_finite() && g.is_finite() && (0.0..=1.0).contains(&t),
                "κa={ka} E={e}"
            );
        }
    }
}

fn central_difference(e: f64, b: &Barrier) -> f64 {
    let h = 1e-6 * e.max(1.0);
    (transmission(e + h, b).unwrap() - transmission(e - h, b).unwrap()) / (2.0 * h)
}

#[test]
fn derivative_reference_point() {
    let b = Barrier::default();
    let g = transmission_grad(0.5, &b).unwrap();
    assert!((g - 0.542).abs() < 1e-3);
    assert!((g - central_difference(0.5, &b)).abs() / g.abs() < 1e-6);
}

/// Finite-difference sweep away from the branch window. The relative error
/// uses `max(|analytic|, |numeric|, 1e-4 · max|dT/dE| on the sweep)` as its
/// denominator, since above the barrier dT/dE crosses zero between
/// resonances and the quotient is then dominated by rounding in `T`.
#[test]
fn derivative_matches_central_differences() {
    let mut worst: f64 = 0.0;
    for &v0 in &GRID_V0 {
        for &a in &GRID_A {
            let b = barrier(v0, a);
            let energies: Vec<f64> = (1..=4000)
                .map(|i| v0 * 6.0 * i as f64 / 4000.0)
                .filter(|e| (e - v0).abs() > 1e-3 * v0)
                .collect();
            let analytic: Vec<f64> = energies
                .iter()
                .map(|&e| transmission_grad(e, &b).unwrap())
                .collect();
            let scale = analytic.iter().fold(0.0f64, |m, g| m.max(g.abs()));
            for (&e, &g) in energies.iter().zip(&analytic) {
                let n = central_difference(e, &b);
                let rel = (g - n).abs() / g.abs().max(n.abs()).max(1e-4 * scale);
                worst = worst.max(rel);
                assert!(rel < 1e-5, "V0={v0} a={a} E={e}: {g} vs {n}");
            }
        }
    }
    eprintln!("worst relative derivative error {worst:e}");
}

#[test]
fn bound_state_count_over_random_barriers() {
    let mut s = SeedStream::new(2024, 77);
    for _ in 0..100 {
        let v0 = 10f64.powf(s.uniform_range(-2.0, 4.0));
        let a = 10f64.powf(s.uniform_range(-1.0, 1.0));
        let z0 = a / 2.0 * v0.sqrt();
        let levels = bound_state_energies(&barrier(v0, a));
        assert_eq!(
            levels.len(),
            (2.0 * z0 / PI).floor() as usize + 1,
            "V0={v0} a={a}"
        );
        assert!(levels.windows(2).all(|w| w[0] < w[1]));
        assert!(levels.iter().all(|&e| e < 0.0 && e > -v0));
    }
}

#[test]
fn deep_well_approaches_infinite_well() {
    let levels = bound_state_energies(&barrier(1e6, 1.0));
    let ground = levels[0] + 1e6;
    assert!((ground - PI * PI).abs() / (PI * PI) < 0.02, "{ground}");
}

/// Levels solve the matching conditions of the square well: the interior
/// cosine (or sine) solution joins the decaying exterior exponential.
#[test]
fn bound_states_satisfy_matching_conditions() {
    let b = barrier(100.0, 1.0);
    for (n, e) in bound_state_energies(&b).into_iter().enumerate() {
        let k = (e + 100.0).sqrt();
        let kappa = (-e).sqrt();
        let half = 0.5;
        let mismatch = if n % 2 == 0 {
            k * (k * half).tan() - kappa
        } else {
            -k / (k * half).tan() - kappa
        };
        assert!(mismatch.abs() < 1e-8, "level {n}: {mismatch}");
    }
}

proptest! {
    #[test]
    fn transmission_is_a_probability(e in 1e-12f64..1e8, v0 in 1e-3f64..1e4, a in 1e-3f64..1e2) {
        let t = transmission(e, &barrier(v0, a)).unwrap();
        prop_assert!((0.0..=1.0).contains(&t));
        prop_assert!(transmission_grad(e, &barrier(v0, a)).unwrap().is_finite());
    }

    #[test]
    fn activations_bounded_and_lengths_kept(xs in prop::collection::vec(-1e3f64..1e3, 0..64), clamp in any::<bool>()) {
        let map = if clamp { EnergyMap::clamp() } else { EnergyMap::default() };
        let (act, der) = qt_activate(&xs, &Barrier::default(), &map).unwrap();
        prop_assert_eq!(act.len(), xs.len());
        prop_assert_eq!(der.len(), xs.len());
        prop_assert!(act.iter().all(|t| (0.0..=1.0).contains(t)));
        prop_assert!(der.iter().all(|d| d.is_finite()));
    }

    #[test]
    fn smooth_map_is_positive(x in -1e4f64..1e4, s in 1e-2f64..1e2) {
        let m = EnergyMap::smooth(s).unwrap();
        let e = apply_energy_map(x, &m);
        prop_assert!(e > 0.0 && e.is_finite());
        prop_assert!(e >= x);
    }
}
