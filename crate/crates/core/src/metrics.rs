//! Fidelity and noise metrics.
//!
//! SDR is measured on matched-filtered symbols after a least-squares complex
//! gain fit. The noise side covers DAC phase quantisation, shot noise at the
//! transmitter output, the loss of a conventional IQ Mach-Zehnder
//! transmitter and the combination of independent noise terms.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::{Cascade, PhaseProfileSet, StageConfig};
use crate::signal::{energy, shape_rrc, ComplexWaveform, PulseFilter, PulseShape, SymbolBlock};
use crate::wavefront::Solution;
use crate::{Error, Result};

/// Ceiling reported when the residual error underflows.
pub const SDR_CAP_DB: f64 = 150.0;

/// Ceiling reported for an IQ transmitter that passes no light.
pub const LOSS_CAP_DB: f64 = 150.0;

const PLANCK: f64 = 6.626_070_15e-34;
const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, Clone, PartialEq)]
pub struct SdrReport {
    pub sdr_db: f64,
    /// `a * received_k - reference_k`
    pub per_symbol_error: Vec<Complex64>,
    /// Least-squares gain `a` applied to the received symbols.
    pub complex_gain: Complex64,
}

fn ls_gain(received: &[Complex64], reference: &[Complex64]) -> Complex64 {
    let rr = energy(received);
    if rr == 0.0 {
        return Complex64::new(0.0, 0.0);
    }
    let cross: Complex64 = received
        .iter()
        .zip(reference)
        .map(|(r, s)| r.conj() * s)
        .sum();
    cross / rr
}

fn ratio_to_db(signal: f64, error: f64) -> f64 {
    if error <= signal * 10f64.powf(-SDR_CAP_DB / 10.0) {
        SDR_CAP_DB
    } else {
        (10.0 * (signal / error).log10()).min(SDR_CAP_DB)
    }
}

/// SDR of `received` symbols against `reference` symbols.
pub fn symbol_sdr(received: &[Complex64], reference: &[Complex64]) -> Result<SdrReport> {
    if received.len() != reference.len() {
        return Err(Error::Dimension(format!(
            "{} received symbols for {} reference symbols",
            received.len(),
            reference.len()
        )));
    }
    let signal = energy(reference);
    if signal == 0.0 {
        return Err(Error::UndefinedMetric("reference has zero energy".into()));
    }
    let a = ls_gain(received, reference);
    let per_symbol_error: Vec<Complex64> = received
        .iter()
        .zip(reference)
        .map(|(r, s)| a * r - s)
        .collect();
    Ok(SdrReport {
        sdr_db: ratio_to_db(signal, energy(&per_symbol_error)),
        per_symbol_error,
        complex_gain: a,
    })
}

/// Allocation-free SDR for the solver's inner loop.
pub(crate) fn symbol_sdr_db(received: &[Complex64], reference: &[Complex64], signal: f64) -> f64 {
    let a = ls_gain(received, reference);
    let err: f64 = received
        .iter()
        .zip(reference)
        .map(|(r, s)| (a * r - s).norm_sqr())
        .sum();
    ratio_to_db(signal, err)
}

/// Matched-filters `output`, samples it and compares with the reference
/// block.
pub fn compute_sdr(
    output: &ComplexWaveform,
    reference: &SymbolBlock,
    shape: &PulseShape,
) -> Result<SdrReport> {
    compute_sdr_symbols(output, &reference.symbols, shape)
}

pub fn compute_sdr_symbols(
    output: &ComplexWaveform,
    reference: &[Complex64],
    shape: &PulseShape,
) -> Result<SdrReport> {
    let expected = reference.len() * shape.oversampling;
    if output.len() != expected {
        return Err(Error::Dimension(format!(
            "output has {} samples, one block is {expected}",
            output.len()
        )));
    }
    let rx = crate::signal::matched_filter_and_sample(output, shape)?;
    symbol_sdr(&rx, reference)
}

/// Sample-level SDR with a least-squares gain, for targets that are not
/// symbol blocks.
pub fn field_sdr_db(output: &[Complex64], target: &[Complex64]) -> Result<f64> {
    Ok(symbol_sdr(output, target)?.sdr_db)
}

/// `mean(|x|)^2 / mean(|x|^2)`, the efficiency bound of a single
/// phase-only element for this target.
pub fn dispersive_efficiency_ratio(target: &ComplexWaveform) -> Result<f64> {
    let n = target.len() as f64;
    let mean_abs = target.samples.iter().map(|v| v.norm()).sum::<f64>() / n;
    let mean_pow = target.mean_power();
    if mean_pow == 0.0 {
        return Err(Error::UndefinedMetric("target is identically zero".into()));
    }
    Ok(mean_abs * mean_abs / mean_pow)
}

/// Wraps `phase` into `[-pi, pi)`.
pub fn wrap_phase(phase: f64) -> f64 {
    let w = (phase + PI).rem_euclid(2.0 * PI) - PI;
    // rem_euclid can round up to exactly 2 pi
    if w >= PI {
        w - 2.0 * PI
    } else {
        w
    }
}

/// Mid-rise uniform quantiser with `2^bits` levels over `[-pi, pi)`, applied
/// after wrapping.
pub fn quantize_phase(phases: &PhaseProfileSet, bits: u32) -> Result<PhaseProfileSet> {
    if bits == 0 || bits > 52 {
        return Err(Error::InvalidParameter(format!(
            "DAC resolution must be 1..=52 bits, got {bits}"
        )));
    }
    let levels = (1u64 << bits) as f64;
    let step = 2.0 * PI / levels;
    let quantize = |p: f64| {
        let idx = ((wrap_phase(p) + PI) / step).floor().clamp(0.0, levels - 1.0);
        -PI + (idx + 0.5) * step
    };
    Ok(PhaseProfileSet {
        profiles: phases
            .profiles
            .iter()
            .map(|p| p.iter().map(|&v| quantize(v)).collect())
            .collect(),
    })
}

/// SINAD after driving the cascade with `bits`-bit quantised drives.
///
/// `target` is the waveform the solution was computed for; the launched
/// CW power matches its mean power.
pub fn quantized_sinad(
    solution: &Solution,
    bits: u32,
    target: &ComplexWaveform,
    shape: &PulseShape,
    stages: &StageConfig,
) -> Result<f64> {
    let quantized = quantize_phase(&solution.phases, bits)?;
    sinad_for_phases(&quantized, target, shape, stages)
}

/// Symbol SDR of the cascade output for arbitrary drives.
pub fn sinad_for_phases(
    phases: &PhaseProfileSet,
    target: &ComplexWaveform,
    shape: &PulseShape,
    stages: &StageConfig,
) -> Result<f64> {
    let mut filter = PulseFilter::new(shape, target.len() / shape.oversampling)?;
    let reference = filter.sample(&target.samples)?;
    let mut cascade = Cascade::new(target.len(), target.sample_rate, stages)?;
    let cw = vec![Complex64::new(target.mean_power().sqrt(), 0.0); target.len()];
    let out = cascade.output(&cw, phases)?;
    let rx = filter.sample(&out)?;
    Ok(symbol_sdr(&rx, &reference)?.sdr_db)
}

/// Link-budget inputs for the shot-noise limit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseBudget {
    pub laser_power_dbm: f64,
    pub insertion_loss_db_per_stage: f64,
    pub stage_count: usize,
    pub symbol_rate_gbd: f64,
    pub wavelength_nm: f64,
    pub quantum_efficiency: f64,
}

impl Default for NoiseBudget {
    fn default() -> Self {
        Self {
            laser_power_dbm: 0.0,
            insertion_loss_db_per_stage: 2.0,
            stage_count: 0,
            symbol_rate_gbd: 200.0,
            wavelength_nm: 1550.0,
            quantum_efficiency: 1.0,
        }
    }
}

/// Shot-noise-limited SNR per symbol: detected photons per symbol at the
/// transmitter output, in dB.
pub fn shot_noise_snr(budget: &NoiseBudget, extra_modulation_loss_db: f64) -> Result<f64> {
    if !(budget.symbol_rate_gbd > 0.0) || !(budget.wavelength_nm > 0.0) {
        return Err(Error::InvalidParameter(
            "symbol rate and wavelength must be positive".into(),
        ));
    }
    if !(budget.quantum_efficiency > 0.0 && budget.quantum_efficiency <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "quantum efficiency must lie in (0, 1], got {}",
            budget.quantum_efficiency
        )));
    }
    if !budget.laser_power_dbm.is_finite() || !extra_modulation_loss_db.is_finite() {
        return Err(Error::InvalidParameter("powers must be finite".into()));
    }
    let out_dbm = budget.laser_power_dbm
        - budget.stage_count as f64 * budget.insertion_loss_db_per_stage
        - extra_modulation_loss_db;
    let out_w = 1e-3 * 10f64.powf(out_dbm / 10.0);
    let photon_j = PLANCK * SPEED_OF_LIGHT / (budget.wavelength_nm * 1e-9);
    let photons = budget.quantum_efficiency * out_w / (photon_j * budget.symbol_rate_gbd * 1e9);
    Ok(10.0 * photons.log10())
}

/// Average modulation loss (dB) of a null-biased push-pull IQ Mach-Zehnder
/// transmitter driven by the pulse-shaped block.
///
/// I and Q drives share one scale so the largest instantaneous drive is
/// `modulation_depth * V_pi`. Each arm's field transfer is
/// `sin(pi/2 * v / V_pi)`; the IQ split and recombination leave at most
/// half the light.
pub fn mzm_iq_modulation_loss(
    block: &SymbolBlock,
    shape: &PulseShape,
    modulation_depth: f64,
) -> Result<f64> {
    if !(modulation_depth > 0.0 && modulation_depth <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "modulation depth must lie in (0, 1], got {modulation_depth}"
        )));
    }
    let wave = shape_rrc(block, shape)?;
    let peak = wave
        .samples
        .iter()
        .map(|v| v.re.abs().max(v.im.abs()))
        .fold(0.0, f64::max);
    if peak == 0.0 {
        return Ok(LOSS_CAP_DB);
    }
    let scale = modulation_depth / peak;
    let arm = |d: f64| (PI / 2.0 * scale * d).sin();
    let transmitted = wave
        .samples
        .iter()
        .map(|v| (arm(v.re).powi(2) + arm(v.im).powi(2)) / 4.0)
        .sum::<f64>()
        / wave.len() as f64;
    if transmitted <= 0.0 {
        return Ok(LOSS_CAP_DB);
    }
    Ok((-10.0 * transmitted.log10()).min(LOSS_CAP_DB))
}

/// Combines independent noise/distortion terms given as SNRs in dB.
pub fn combine_sinad(component_snrs_db: &[f64]) -> Result<f64> {
    if component_snrs_db.is_empty() {
        return Err(Error::InvalidParameter("no SINAD components".into()));
    }
    let noise: f64 = component_snrs_db
        .iter()
        .map(|x| 10f64.powf(-x / 10.0))
        .sum();
    Ok(-10.0 * noise.log10())
}
