//! Cross-module flows: optimized designs driving the modulator, the noise
//! model and the simulator together.

use num_complex::Complex;
use rand::Rng;
use rand_chacha::{rand_core::SeedableRng, ChaCha8Rng};
use sdmimo::analysis;
use sdmimo::designs::{self, SqnrContext};
use sdmimo::modulator::{measure_noise_power, modulate_1d, FilterDesign};
use sdmimo::socp::{self, DesignMode, DesignSpec, FilterOrder};
use sdmimo::C64;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[test]
fn fixed_sector_design_suppresses_measured_noise_in_sector() {
    // Design for a +-30 degree sector at quarter-wavelength spacing, then
    // verify empirically that the modulator's spectral noise power inside
    // the sector sits far below the unshaped 2N/3 level.
    let omega_edge = sdmimo::array::spatial_frequency(30f64.to_radians(), 0.25).unwrap();
    let spec = DesignSpec {
        order: FilterOrder::OneD(12),
        m_levels: 5,
        ctx: SqnrContext::new(1.0, 0.0, 256).unwrap(),
        mode: DesignMode::FixedSector1d {
            omega_lo: -omega_edge,
            omega_hi: omega_edge,
            samples: None,
            r_min: 1.0,
            r_max: 1.0,
        },
    };
    let outcome = socp::design(&spec, 1e-8).unwrap();
    let design = &outcome.design;
    assert!(design.is_overload_safe());

    let n = 256;
    let flat = 2.0 * n as f64 / 3.0;
    for &frac in &[-0.9, -0.4, 0.0, 0.5, 0.8] {
        let est = measure_noise_power(design, frac * omega_edge, n, 60, 42).unwrap();
        assert_eq!(est.overload_events, 0);
        // The worst-in-sector RNSR bound transfers to measured power:
        // E|V|^2 ~ (2N/3) |1+G|^2 with |1+G|^2 = RNSR * A^2.
        let budget = flat * outcome.worst_rnsr * design.amplitude().powi(2);
        assert!(
            est.power < 3.0 * budget + 1e-6 * flat,
            "measured {} vs shaped budget {budget}",
            est.power
        );
        assert!(est.power < 0.2 * flat, "in-sector noise not suppressed");
    }
}

#[test]
fn user_targeted_design_beats_first_order_at_its_users() {
    let omegas = [-0.9, -0.15, 0.4, 1.1];
    let gammas = [0.05; 4];
    let problem = socp::build_user_targeted(&omegas, &gammas, 10, 5).unwrap();
    let solution = socp::solve(&problem, 1e-8).unwrap();
    let design = socp::recover(&problem, &solution).unwrap();
    let first = designs::first_order::<f64>(5).unwrap();
    let ctx = SqnrContext::new(1.0, 0.1, 256).unwrap();
    let alpha = Complex::new(1.0, 0.0);
    let min_of = |d: &FilterDesign<f64>| {
        omegas
            .iter()
            .map(|&w| designs::sqnr(d, &ctx, alpha, w).unwrap().finite().unwrap())
            .fold(f64::INFINITY, f64::min)
    };
    assert!(
        min_of(&design) > min_of(&first),
        "user-targeted design should raise the weakest user's SQNR"
    );
}

#[test]
fn design_file_round_trip_preserves_modulation() {
    let outcome = socp::design(
        &DesignSpec {
            order: FilterOrder::OneD(6),
            m_levels: 4,
            ctx: SqnrContext::new(1.0, 0.0, 64).unwrap(),
            mode: DesignMode::UserTargeted1d(vec![(0.3, 0.0), (-0.7, 0.0)]),
        },
        1e-8,
    )
    .unwrap();
    let json = serde_json::to_string(&outcome.design.to_file()).unwrap();
    let back: sdmimo::modulator::DesignFile = serde_json::from_str(&json).unwrap();
    let restored = FilterDesign::<f64>::from_file(&back).unwrap();

    let mut r = rng(7);
    let a = outcome.design.amplitude();
    let input: Vec<C64> = (0..256)
        .map(|_| C64::new(r.gen_range(-a..=a), r.gen_range(-a..=a)))
        .collect();
    let x = modulate_1d(&input, &outcome.design).unwrap();
    let y = modulate_1d(&input, &restored).unwrap();
    assert_eq!(x, y, "serialized design must modulate identically");
}

#[test]
fn rnsr_sweep_matches_direct_evaluation() {
    let design = designs::band_stop::<f64>(2, 0.3, 9).unwrap();
    let thetas: Vec<f64> = (-8..=8).map(|i| (i as f64 * 10.0).to_radians()).collect();
    let curve = analysis::rnsr_sweep(&design, &thetas, 0.25).unwrap();
    for (&theta, &(t, db)) in thetas.iter().zip(&curve) {
        assert_eq!(theta, t);
        let linear = designs::rnsr(&design, theta, 0.25).unwrap();
        assert!((db - 10.0 * linear.log10()).abs() < 1e-9);
    }
}
