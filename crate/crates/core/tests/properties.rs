use proptest::prelude::*;

use qdring::emitter::{linspace, lorentzian, trapezoid};
use qdring::ring::{solve_couplings, Coupling, DesignTargets, Polarization::TE, RingParams};
use qdring::stats::{background_corrected_g2, coincidence_histogram, predict_measured_g2};
use qdring::tuning::{align_voltage, TuningCalibration};

fn ring(t1: f64, t2: f64, a: f64, radius_um: f64, group_index: f64) -> RingParams {
    RingParams {
        radius_um,
        group_index,
        n_eff_ref: group_index - 0.08,
        lambda_ref_nm: 880.0,
        couplings: [(TE, Coupling::new(t1, t2, a).unwrap())].into_iter().collect(),
    }
    .anchored()
}

proptest! {
    #[test]
    fn ports_conserve_or_lose_energy(
        t1 in 0.05f64..0.999, t2 in 0.05f64..0.999, a in 0.5f64..=1.0,
        radius in 10.0f64..200.0, lam in 700.0f64..950.0,
    ) {
        let r = ring(t1, t2, a, radius, 1.9);
        let sum = r.through_transmission(lam, TE).unwrap() + r.drop_transmission(lam, TE).unwrap();
        prop_assert!(sum <= 1.0 + 1e-12);
        prop_assert!(r.through_transmission(lam, TE).unwrap() >= 0.0);
        let lossless = ring(t1, t2, 1.0, radius, 1.9);
        let total = lossless.through_transmission(lam, TE).unwrap() + lossless.drop_transmission(lam, TE).unwrap();
        prop_assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn response_is_periodic_in_phase(
        t1 in 0.3f64..0.99, t2 in 0.3f64..0.99, radius in 20.0f64..150.0, lam in 860.0f64..900.0,
    ) {
        let r = ring(t1, t2, 0.98, radius, 1.83);
        // One full round-trip phase later in inverse wavelength.
        let next = 1.0 / (1.0 / lam - 1.0 / (r.group_index * r.round_trip_nm()));
        prop_assert!((r.drop_transmission(lam, TE).unwrap() - r.drop_transmission(next, TE).unwrap()).abs() < 1e-9);
        prop_assert!((r.through_transmission(lam, TE).unwrap() - r.through_transmission(next, TE).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn design_round_trips(
        fsr in 0.3f64..3.0, finesse in 2.0f64..40.0, radius in 20.0f64..100.0,
        a in 0.95f64..=1.0, critical in any::<bool>(),
    ) {
        let targets = DesignTargets {
            fsr_nm: fsr, fwhm_nm: fsr / finesse, wavelength_nm: 880.0, radius_um: radius, loss_a: a, critical,
        };
        let design = solve_couplings(&targets);
        prop_assume!(design.is_ok());
        let r = design.unwrap().to_ring(&targets, 1.0);
        prop_assert!((r.free_spectral_range(880.0) / fsr - 1.0).abs() < 1e-9);
        prop_assert!((r.resonance_fwhm(880.0, TE).unwrap() / targets.fwhm_nm - 1.0).abs() < 1e-9);
        let c = r.coupling(TE).unwrap();
        if critical {
            prop_assert!((c.t1 - c.t2 * c.a).abs() < 1e-12);
        } else {
            prop_assert!((c.t1 - c.t2).abs() < 1e-12);
        }
    }

    #[test]
    fn aligned_line_sits_on_a_resonance(line in 879.0f64..881.5) {
        let cal = TuningCalibration::default();
        let r = ring(0.81, 0.818, 0.99, 70.0, 1.834);
        // The tuning range spans more than one FSR, so a resonance is always reachable.
        let v = align_voltage(&r, &cal, line, TE).unwrap();
        let local = line + cal.emitter_shift(v).unwrap() - cal.ring_shift(v).unwrap();
        prop_assert!((local - r.nearest_resonance(local)).abs() < 2e-3);
    }

    #[test]
    fn mixture_law_inverts(g in 0.0f64..1.0, rho in 0.01f64..=1.0) {
        let m = predict_measured_g2(g, rho).unwrap();
        prop_assert!(m >= g - 1e-12 && m <= 1.0 + 1e-12);
        prop_assert!((background_corrected_g2(m, rho).unwrap() - g).abs() < 1e-9 / (rho * rho));
    }

    #[test]
    fn histogram_conserves_pairs_inside_the_window(
        a in proptest::collection::vec(0.0f64..100.0, 0..200),
        b in proptest::collection::vec(0.0f64..100.0, 0..200),
    ) {
        let h = coincidence_histogram(&a, &b, 100.0, 2.0, 1.0).unwrap();
        // Every pair well inside the window is counted once.
        let inner = a.iter().flat_map(|x| b.iter().map(move |y| y - x)).filter(|d| d.abs() < 1.9).count() as u64;
        let outer = a.iter().flat_map(|x| b.iter().map(move |y| y - x)).filter(|d| d.abs() <= 2.1).count() as u64;
        prop_assert!(h.total_coincidences() >= inner && h.total_coincidences() <= outer);
    }

    #[test]
    fn lorentzian_integrates_to_its_rate(fwhm in 0.001f64..1.0, rate in 1.0f64..1e9) {
        let grid = linspace(880.0 - 2000.0 * fwhm, 880.0 + 2000.0 * fwhm, 400_001);
        let y: Vec<f64> = grid.iter().map(|&l| lorentzian(l, 880.0, fwhm, rate)).collect();
        prop_assert!((trapezoid(&grid, &y) / rate - 1.0).abs() < 1e-3);
    }
}
