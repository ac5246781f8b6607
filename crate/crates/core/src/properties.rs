//! Property tests for the invariants that hold across modules.

use std::f64::consts::PI;

use num_complex::Complex64;
use proptest::prelude::*;

use crate::channel::{
    apply_dispersion, bandlimit_phase, dispersion_to_gdd, propagate, Cascade, DispersiveElement,
    PhaseProfileSet, StageConfig,
};
use crate::metrics::{
    combine_sinad, compute_sdr, mzm_iq_modulation_loss, quantize_phase, shot_noise_snr, wrap_phase,
    NoiseBudget,
};
use crate::signal::{
    constellation, energy, generate_qam_block, matched_filter_and_sample, shape_rrc,
    ComplexWaveform, PulseShape,
};
use crate::sweep::{aggregate, Averaging};

fn field(len: usize) -> impl Strategy<Value = Vec<Complex64>> {
    prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), len)
        .prop_map(|v| v.into_iter().map(|(a, b)| Complex64::new(a, b)).collect())
}

fn cascade_case() -> impl Strategy<Value = (usize, f64, bool, Vec<Vec<f64>>, Vec<Complex64>)> {
    (1usize..=6, 0.0..2.0f64, any::<bool>()).prop_flat_map(|(n, d, trailing)| {
        (
            Just(n),
            Just(d),
            Just(trailing),
            prop::collection::vec(prop::collection::vec(-PI..PI, 64), n),
            field(64),
        )
    })
}

fn relative_error(a: &[Complex64], b: &[Complex64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum();
    (diff / energy(b).max(f64::MIN_POSITIVE)).sqrt()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cascade_is_unitary((n, d, trailing, phases, input) in cascade_case()) {
        let stages = StageConfig {
            dispersion_norm: d,
            include_trailing_dispersion: trailing,
            ..StageConfig::default()
        };
        let phases = PhaseProfileSet::new(phases).unwrap();
        prop_assert_eq!(phases.stage_count(), n);
        let mut c = Cascade::new(64, 8.0, &stages).unwrap();
        let out = c.output(&input, &phases).unwrap();
        let e_in = energy(&input);
        prop_assert!((energy(&out) - e_in).abs() <= 1e-10 * e_in);
        let back = c.invert(&out, &phases).unwrap();
        prop_assert!(relative_error(&back, &input) < 1e-9);
    }

    #[test]
    fn propagation_is_linear(
        (_, d, trailing, phases, x) in cascade_case(),
        y in field(64),
        a in (-2.0..2.0f64, -2.0..2.0f64),
    ) {
        let stages = StageConfig {
            dispersion_norm: d,
            include_trailing_dispersion: trailing,
            ..StageConfig::default()
        };
        let phases = PhaseProfileSet::new(phases).unwrap();
        let a = Complex64::new(a.0, a.1);
        let wave = |s: Vec<Complex64>| ComplexWaveform::new(s, 8.0).unwrap();
        let mix: Vec<Complex64> = x.iter().zip(&y).map(|(u, v)| a * u + v).collect();
        let lhs = propagate(&wave(mix), &phases, &stages).unwrap();
        let px = propagate(&wave(x), &phases, &stages).unwrap();
        let py = propagate(&wave(y), &phases, &stages).unwrap();
        let rhs: Vec<Complex64> =
            px.samples.iter().zip(&py.samples).map(|(u, v)| a * u + v).collect();
        prop_assert!(relative_error(&lhs.samples, &rhs) < 1e-10);
    }

    #[test]
    fn dispersion_composes_additively(d1 in -3.0..3.0f64, d2 in -3.0..3.0f64, x in field(128)) {
        let w = ComplexWaveform::new(x, 8.0).unwrap();
        let two = apply_dispersion(
            &apply_dispersion(&w, &DispersiveElement { gdd_norm: d1 }).unwrap(),
            &DispersiveElement { gdd_norm: d2 },
        )
        .unwrap();
        let one = apply_dispersion(&w, &DispersiveElement { gdd_norm: d1 + d2 }).unwrap();
        prop_assert!(relative_error(&two.samples, &one.samples) < 1e-10);
    }

    #[test]
    fn bandlimiting_is_idempotent(p in prop::collection::vec(-10.0..10.0f64, 96), b in 0.05..4.0f64) {
        let once = bandlimit_phase(&p, b, 8.0).unwrap();
        let twice = bandlimit_phase(&once, b, 8.0).unwrap();
        for (u, v) in once.iter().zip(&twice) {
            prop_assert!((u - v).abs() < 1e-10);
        }
    }

    #[test]
    fn symbol_period_cancels_in_gdd(d in 0.0..20.0f64, r1 in 1.0..400.0f64, r2 in 1.0..400.0f64) {
        let a = dispersion_to_gdd(d, r1, 1550.0).unwrap();
        let b = dispersion_to_gdd(d, r2, 1550.0).unwrap();
        prop_assert!((a.gdd_norm - b.gdd_norm).abs() <= 1e-12 * a.gdd_norm.abs().max(1.0));
        let period = 1000.0 / r1;
        prop_assert!((a.physical_ps_per_nm - d * period * period).abs()
            <= 1e-12 * a.physical_ps_per_nm.abs().max(1.0));
    }

    #[test]
    fn sdr_ignores_complex_gain(seed in 0u64..1000, g in (0.01..100.0f64, -PI..PI)) {
        let shape = PulseShape::default();
        let block = generate_qam_block(16, 32, seed).unwrap();
        let w = shape_rrc(&block, &shape).unwrap();
        // a fixed distortion so the SDR is finite
        let distorted: Vec<Complex64> = w
            .samples
            .iter()
            .enumerate()
            .map(|(k, v)| v + 0.01 * Complex64::from_polar(1.0, k as f64))
            .collect();
        let base = compute_sdr(&ComplexWaveform::new(distorted.clone(), 8.0).unwrap(), &block, &shape)
            .unwrap()
            .sdr_db;
        let c = Complex64::from_polar(g.0, g.1);
        let scaled: Vec<Complex64> = distorted.iter().map(|v| v * c).collect();
        let s = compute_sdr(&ComplexWaveform::new(scaled, 8.0).unwrap(), &block, &shape)
            .unwrap()
            .sdr_db;
        prop_assert!((s - base).abs() < 1e-9);
    }

    #[test]
    fn qam_blocks_round_trip(order in prop::sample::select(vec![4usize, 16, 64]), seed in any::<u64>()) {
        let shape = PulseShape::default();
        let block = generate_qam_block(order, 24, seed).unwrap();
        let points = constellation(order).unwrap();
        for s in &block.symbols {
            prop_assert!(points.iter().any(|p| (p - s).norm() < 1e-12));
        }
        let rx = matched_filter_and_sample(&shape_rrc(&block, &shape).unwrap(), &shape).unwrap();
        prop_assert!(relative_error(&rx, &block.symbols) < 1e-6);
    }

    #[test]
    fn combined_sinad_is_below_every_component(parts in prop::collection::vec(-20.0..80.0f64, 1..6)) {
        let c = combine_sinad(&parts).unwrap();
        let min = parts.iter().copied().fold(f64::INFINITY, f64::min);
        prop_assert!(c <= min + 1e-12);
    }

    #[test]
    fn shot_noise_has_unit_slope(p in -40.0..20.0f64, dp in -10.0..10.0f64, n in 0usize..8) {
        let at = |power| shot_noise_snr(&NoiseBudget {
            laser_power_dbm: power,
            stage_count: n,
            ..NoiseBudget::default()
        }, 0.0).unwrap();
        prop_assert!((at(p + dp) - at(p) - dp).abs() < 1e-9);
    }

    #[test]
    fn quantiser_error_is_bounded(p in prop::collection::vec(-50.0..50.0f64, 32), bits in 1u32..16) {
        let set = PhaseProfileSet::new(vec![p.clone()]).unwrap();
        let q = quantize_phase(&set, bits).unwrap();
        let step = 2.0 * PI / (1u64 << bits) as f64;
        for (a, b) in p.iter().zip(&q.profiles[0]) {
            prop_assert!(wrap_phase(a - b).abs() <= step / 2.0 + 1e-9);
        }
        let again = quantize_phase(&q, bits).unwrap();
        prop_assert_eq!(again, q);
    }

    #[test]
    fn aggregate_envelope_brackets_mean(v in prop::collection::vec(-50.0..200.0f64, 1..12), lin in any::<bool>()) {
        let mode = if lin { Averaging::Linear } else { Averaging::Db };
        let (mean, lo, hi) = aggregate(&v, mode);
        prop_assert!(lo <= mean && mean <= hi);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn mzm_loss_falls_with_depth(seed in 0u64..100, d in 0.05..0.9f64) {
        let block = generate_qam_block(16, 64, seed).unwrap();
        let shape = PulseShape::default();
        let lo = mzm_iq_modulation_loss(&block, &shape, d).unwrap();
        let hi = mzm_iq_modulation_loss(&block, &shape, (d * 1.1).min(1.0)).unwrap();
        prop_assert!(hi < lo);
    }
}
