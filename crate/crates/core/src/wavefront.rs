//! Iterative wavefront-matching solver for the phase drives.
//!
//! Each iteration carries the target backwards through the cascade once,
//! then sweeps the modulators in order. Modulator `n` sees the forward field
//! produced by the already-updated modulators before it and moves its drive
//! a fraction `mu` towards the phase that maps that field onto the backward
//! field, restricted to the modulator bandwidth.
//!
//! In [`TargetMode::SymbolDomain`] the backward wave is launched from the
//! current output with only its matched-filter symbol content replaced by
//! the (gain-aligned) reference. Everything the receiver filter rejects is
//! left free, which is what the fidelity metric measures.

use std::io::Write as _;
use std::path::Path;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{Cascade, PhaseProfileSet, StageConfig};
use crate::metrics::{symbol_sdr_db, SDR_CAP_DB};
use crate::signal::{energy, ComplexWaveform, PulseFilter, PulseShape};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetMode {
    /// Match the full target field sample by sample.
    Field,
    /// Match only the matched-filter symbol content of the target.
    SymbolDomain,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum InitMode {
    Zeros,
    /// Bandlimited uniform noise in `[-amplitude, amplitude]` rad.
    SeededRandom { amplitude: f64, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Initial step size `mu`.
    pub step_size: f64,
    /// Factor applied to `mu` after an update that lowered the SDR.
    pub step_decay: f64,
    pub step_floor: f64,
    pub max_iterations: usize,
    /// Stop once the best SDR gained less than this over `stall_window`
    /// iterations.
    pub stall_tolerance_db: f64,
    pub stall_window: usize,
    pub init: InitMode,
    pub target_mode: TargetMode,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            step_size: 0.25,
            step_decay: 0.5,
            step_floor: 1e-3,
            max_iterations: 2000,
            stall_tolerance_db: 0.01,
            stall_window: 20,
            init: InitMode::Zeros,
            target_mode: TargetMode::SymbolDomain,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidParameter(what.to_string()));
        if !(self.step_size > 0.0 && self.step_size <= 1.0) {
            return bad("step size must lie in (0, 1]");
        }
        if !(self.step_decay > 0.0 && self.step_decay <= 1.0) {
            return bad("step decay must lie in (0, 1]");
        }
        if !(self.step_floor > 0.0 && self.step_floor <= self.step_size) {
            return bad("step floor must lie in (0, step size]");
        }
        if self.stall_window == 0 || !(self.stall_tolerance_db >= 0.0) {
            return bad("stall window must be >= 1 and tolerance >= 0");
        }
        if let InitMode::SeededRandom { amplitude, .. } = self.init {
            if !(amplitude >= 0.0 && amplitude.is_finite()) {
                return bad("initial amplitude must be finite and >= 0");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub phases: PhaseProfileSet,
    /// Best symbol SDR reached, dB.
    pub sdr_db: f64,
    pub iterations_used: usize,
    /// Best-so-far SDR; entry 0 is the initial drive.
    pub sdr_trace: Vec<f64>,
    /// Step size used at each iteration (entry 0 is the initial value).
    pub step_trace: Vec<f64>,
    /// Stopped on the stall rule or the SDR cap rather than the iteration
    /// budget.
    pub converged: bool,
}

/// One wavefront-matching update of a single drive.
///
/// `forward` is the field entering the modulator, `backward` the field it
/// should emit. A zero step returns `phase` untouched.
pub fn phase_update(
    forward: &ComplexWaveform,
    backward: &ComplexWaveform,
    phase: &[f64],
    step_size: f64,
    pm_bandwidth: f64,
) -> Result<Vec<f64>> {
    if forward.len() != backward.len() || forward.len() != phase.len() {
        return Err(Error::Dimension(format!(
            "forward {}, backward {} and phase {} lengths differ",
            forward.len(),
            backward.len(),
            phase.len()
        )));
    }
    if forward.sample_rate != backward.sample_rate {
        return Err(Error::Dimension("forward and backward sample rates differ".into()));
    }
    if !(0.0..=1.0).contains(&step_size) {
        return Err(Error::InvalidParameter(format!(
            "step size must lie in [0, 1], got {step_size}"
        )));
    }
    if step_size == 0.0 {
        return Ok(phase.to_vec());
    }
    let stages = StageConfig {
        pm_bandwidth,
        ..StageConfig::default()
    };
    let mut cascade = Cascade::new(forward.len(), forward.sample_rate, &stages)?;
    let mut out = phase.to_vec();
    update_in_place(&mut cascade, &forward.samples, &backward.samples, &mut out, step_size);
    Ok(out)
}

fn update_in_place(
    cascade: &mut Cascade,
    forward: &[Complex64],
    backward: &[Complex64],
    phase: &mut [f64],
    step_size: f64,
) {
    let mut overlap: Vec<Complex64> = forward
        .iter()
        .zip(backward)
        .zip(phase.iter())
        .map(|((f, b), &p)| f * b.conj() * Complex64::from_polar(1.0, p))
        .collect();
    cascade.lowpass(&mut overlap);
    for (p, o) in phase.iter_mut().zip(&overlap) {
        // atan2(0, 0) is 0: no information, no move
        *p -= step_size * o.arg();
    }
    cascade.lowpass_real(phase);
}

fn initial_phases(
    cascade: &mut Cascade,
    init: InitMode,
    stage_count: usize,
    len: usize,
) -> PhaseProfileSet {
    match init {
        InitMode::Zeros => PhaseProfileSet::zeros(stage_count, len),
        InitMode::SeededRandom { amplitude, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let profiles = (0..stage_count)
                .map(|_| {
                    let mut p: Vec<f64> = (0..len)
                        .map(|_| {
                            if amplitude > 0.0 {
                                rng.gen_range(-amplitude..=amplitude)
                            } else {
                                0.0
                            }
                        })
                        .collect();
                    cascade.lowpass_real(&mut p);
                    p
                })
                .collect();
            PhaseProfileSet { profiles }
        }
    }
}

fn all_finite(x: &[Complex64]) -> bool {
    x.iter().all(|v| v.re.is_finite() && v.im.is_finite())
}

/// Solves for the `stage_count` drives that turn a CW carrier of the
/// target's mean power into `target`.
///
/// `target` must be a block-periodic waveform sampled at
/// `shape.oversampling` samples per symbol. Its matched-filter samples are
/// the reference symbols.
pub fn solve(
    target: &ComplexWaveform,
    shape: &PulseShape,
    stages: &StageConfig,
    stage_count: usize,
    solver: &SolverConfig,
) -> Result<Solution> {
    solve_with_progress(target, shape, stages, stage_count, solver, |_, _| {})
}

/// [`solve`] with a callback receiving `(iteration, best_sdr_db)`.
pub fn solve_with_progress(
    target: &ComplexWaveform,
    shape: &PulseShape,
    stages: &StageConfig,
    stage_count: usize,
    solver: &SolverConfig,
    mut progress: impl FnMut(usize, f64),
) -> Result<Solution> {
    if stage_count == 0 {
        return Err(Error::InvalidParameter("need at least one stage".into()));
    }
    solver.validate()?;
    shape.validate()?;
    if target.sample_rate != shape.oversampling as f64 {
        return Err(Error::Dimension(format!(
            "target sampled at {} per symbol, pulse shape expects {}",
            target.sample_rate, shape.oversampling
        )));
    }
    if !target.len().is_multiple_of(shape.oversampling) {
        return Err(Error::Dimension(format!(
            "target length {} is not a whole number of symbols",
            target.len()
        )));
    }
    let len = target.len();
    let mean_power = target.mean_power();
    if !(mean_power > 0.0) || !all_finite(&target.samples) {
        return Err(Error::InvalidParameter(
            "target must be finite with nonzero power".into(),
        ));
    }

    let mut filter = PulseFilter::new(shape, len / shape.oversampling)?;
    let reference = filter.sample(&target.samples)?;
    let ref_energy = energy(&reference);
    if ref_energy == 0.0 {
        return Err(Error::UndefinedMetric(
            "target has no content in the symbol band".into(),
        ));
    }
    let mut cascade = Cascade::new(len, target.sample_rate, stages)?;
    let cw = vec![Complex64::new(mean_power.sqrt(), 0.0); len];

    let mut phases = initial_phases(&mut cascade, solver.init, stage_count, len);
    let mut output = cascade.output(&cw, &phases)?;
    let mut received = filter.sample(&output)?;
    let mut best = symbol_sdr_db(&received, &reference, ref_energy);
    if !best.is_finite() {
        return Err(Error::NumericDivergence { iteration: 0 });
    }

    let mut mu = solver.step_size;
    let mut sdr_trace = vec![best];
    let mut step_trace = vec![mu];
    let mut converged = best >= SDR_CAP_DB;
    let mut iterations = 0;
    let mut candidate = phases.clone();
    let mut field = vec![Complex64::new(0.0, 0.0); len];

    while !converged && iterations < solver.max_iterations {
        iterations += 1;
        let effective = match solver.target_mode {
            TargetMode::Field => target.samples.clone(),
            TargetMode::SymbolDomain => {
                symbol_domain_target(&mut filter, &output, &received, &reference, ref_energy)?
            }
        };
        let backward = cascade.backward(&effective, &phases)?;

        candidate.clone_from(&phases);
        field.copy_from_slice(&cw);
        for (n, back) in backward.iter().enumerate() {
            update_in_place(&mut cascade, &field, back, &mut candidate.profiles[n], mu);
            cascade.stage(&mut field, &candidate.profiles[n], n, stage_count);
        }
        if !all_finite(&field) {
            return Err(Error::NumericDivergence { iteration: iterations });
        }
        let cand_rx = filter.sample(&field)?;
        let sdr = symbol_sdr_db(&cand_rx, &reference, ref_energy);
        if !sdr.is_finite() {
            return Err(Error::NumericDivergence { iteration: iterations });
        }

        let used = mu;
        if sdr >= best {
            std::mem::swap(&mut phases, &mut candidate);
            output.copy_from_slice(&field);
            received = cand_rx;
            best = sdr;
        } else {
            mu = (mu * solver.step_decay).max(solver.step_floor);
        }
        sdr_trace.push(best);
        step_trace.push(used);
        progress(iterations, best);

        if best >= SDR_CAP_DB {
            converged = true;
        } else if sdr_trace.len() > solver.stall_window {
            let then = sdr_trace[sdr_trace.len() - 1 - solver.stall_window];
            converged = best - then < solver.stall_tolerance_db;
        }
    }

    Ok(Solution {
        phases,
        sdr_db: best,
        iterations_used: iterations,
        sdr_trace,
        step_trace,
        converged,
    })
}

// y + P(a s - r): the current output with its symbol content swapped for the
// reference, scaled to the output's symbol-domain energy and phase.
fn symbol_domain_target(
    filter: &mut PulseFilter,
    output: &[Complex64],
    received: &[Complex64],
    reference: &[Complex64],
    ref_energy: f64,
) -> Result<Vec<Complex64>> {
    let cross: Complex64 = reference
        .iter()
        .zip(received)
        .map(|(s, r)| s.conj() * r)
        .sum();
    let magnitude = (energy(received) / ref_energy).sqrt();
    let rotation = if cross.norm() > 0.0 {
        cross / cross.norm()
    } else {
        Complex64::new(1.0, 0.0)
    };
    let gain = rotation * magnitude;
    let correction: Vec<Complex64> = reference
        .iter()
        .zip(received)
        .map(|(s, r)| gain * s - r)
        .collect();
    let delta = filter.synthesize(&correction)?;
    Ok(output.iter().zip(&delta).map(|(y, d)| y + d).collect())
}

/// Writes the convergence trace as `iteration,sdr_db,step_size`.
pub fn write_trace_csv(solution: &Solution, path: &Path) -> Result<()> {
    let mut text = String::from("iteration,sdr_db,step_size\n");
    for (i, (s, m)) in solution.sdr_trace.iter().zip(&solution.step_trace).enumerate() {
        text.push_str(&format!("{i},{s:.8e},{m:.8e}\n"));
    }
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}
