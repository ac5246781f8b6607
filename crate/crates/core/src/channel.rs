//! Optical elements of the cascade and propagation through it.
//!
//! One stage is a phase modulator followed by a dispersive element. The
//! last stage's dispersive element is optional
//! ([`StageConfig::include_trailing_dispersion`]). Every element is
//! all-pass, so every plane of the cascade carries the same energy.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::signal::ComplexWaveform;
use crate::spectral::{frequency_grid, lowpass_mask, Spectral};
use crate::{Error, Result};

/// Speed of light in nm/ps.
const C_NM_PER_PS: f64 = 299_792.458;

/// Per-stage optical parameters shared by every stage of a cascade.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageConfig {
    /// Dispersion per stage normalised to the squared symbol period,
    /// ps^-1 nm^-1.
    pub dispersion_norm: f64,
    /// Single-sided phase-drive bandwidth in units of the symbol rate.
    pub pm_bandwidth: f64,
    pub include_trailing_dispersion: bool,
    pub wavelength_nm: f64,
}

impl Default for StageConfig {
    fn default() -> Self {
        Self {
            dispersion_norm: 0.3,
            pm_bandwidth: 0.55,
            include_trailing_dispersion: false,
            wavelength_nm: 1550.0,
        }
    }
}

impl StageConfig {
    pub fn validate(&self, sample_rate: f64) -> Result<()> {
        if !(self.dispersion_norm >= 0.0 && self.dispersion_norm.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "dispersion must be finite and >= 0, got {}",
                self.dispersion_norm
            )));
        }
        check_bandwidth(self.pm_bandwidth, sample_rate)?;
        if !(self.wavelength_nm > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "wavelength must be > 0, got {}",
                self.wavelength_nm
            )));
        }
        Ok(())
    }

    /// Normalised group-delay dispersion of each element (units of T_s^2).
    pub fn gdd(&self) -> f64 {
        gdd_from_normalised(self.dispersion_norm, self.wavelength_nm)
    }

    pub fn element(&self) -> DispersiveElement {
        DispersiveElement {
            gdd_norm: self.gdd(),
        }
    }
}

fn check_bandwidth(pm_bandwidth: f64, sample_rate: f64) -> Result<()> {
    if !(pm_bandwidth > 0.0 && pm_bandwidth <= sample_rate / 2.0 + 1e-12) {
        return Err(Error::InvalidParameter(format!(
            "phase-modulator bandwidth {pm_bandwidth} must lie in (0, {}]",
            sample_rate / 2.0
        )));
    }
    Ok(())
}

/// Physical and normalised forms of one dispersion setting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DispersionConversion {
    /// Accumulated dispersion D in ps/nm.
    pub physical_ps_per_nm: f64,
    /// Group-delay dispersion in T_s^2; negative for D > 0.
    pub gdd_norm: f64,
}

// D_norm * T_s^2 * lambda^2 / (2 pi c) / T_s^2: the symbol period cancels.
fn gdd_from_normalised(dispersion_norm: f64, wavelength_nm: f64) -> f64 {
    -dispersion_norm * wavelength_nm * wavelength_nm / (2.0 * PI * C_NM_PER_PS)
}

/// Converts a normalised dispersion (ps^-1 nm^-1) at the given symbol rate
/// (GBd) and wavelength (nm) into physical dispersion and normalised GDD.
pub fn dispersion_to_gdd(
    dispersion_norm: f64,
    symbol_rate_gbd: f64,
    wavelength_nm: f64,
) -> Result<DispersionConversion> {
    if !(symbol_rate_gbd > 0.0) || !(wavelength_nm > 0.0) {
        return Err(Error::InvalidParameter(
            "symbol rate and wavelength must be positive".into(),
        ));
    }
    let period_ps = 1000.0 / symbol_rate_gbd;
    let physical = dispersion_norm * period_ps * period_ps;
    let gdd_ps2 = -physical * wavelength_nm * wavelength_nm / (2.0 * PI * C_NM_PER_PS);
    Ok(DispersionConversion {
        physical_ps_per_nm: physical,
        gdd_norm: gdd_ps2 / (period_ps * period_ps),
    })
}

/// All-pass element with quadratic spectral phase.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DispersiveElement {
    pub gdd_norm: f64,
}

impl DispersiveElement {
    /// `H(w) = exp(i gdd/2 w^2)` on the DFT grid, `w` in rad per T_s.
    pub fn transfer(&self, len: usize, sample_rate: f64) -> Vec<Complex64> {
        frequency_grid(len, sample_rate)
            .into_iter()
            .map(|f| {
                let w = 2.0 * PI * f;
                Complex64::from_polar(1.0, 0.5 * self.gdd_norm * w * w)
            })
            .collect()
    }
}

/// The `N` real phase drives, one per modulator, in radians.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseProfileSet {
    pub profiles: Vec<Vec<f64>>,
}

impl PhaseProfileSet {
    pub fn zeros(stage_count: usize, len: usize) -> Self {
        Self {
            profiles: vec![vec![0.0; len]; stage_count],
        }
    }

    pub fn new(profiles: Vec<Vec<f64>>) -> Result<Self> {
        let set = Self { profiles };
        set.validate()?;
        Ok(set)
    }

    pub fn stage_count(&self) -> usize {
        self.profiles.len()
    }

    /// Samples per profile.
    pub fn len(&self) -> usize {
        self.profiles.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn validate(&self) -> Result<()> {
        if self.profiles.is_empty() {
            return Err(Error::InvalidParameter("need at least one stage".into()));
        }
        let len = self.len();
        if len == 0 {
            return Err(Error::InvalidParameter("phase profiles are empty".into()));
        }
        if let Some((n, p)) = self.profiles.iter().enumerate().find(|(_, p)| p.len() != len) {
            return Err(Error::Dimension(format!(
                "profile {} has {} samples, expected {len}",
                n + 1,
                p.len()
            )));
        }
        Ok(())
    }
}

/// Reusable propagation engine for one grid size and stage configuration.
pub struct Cascade {
    len: usize,
    sample_rate: f64,
    trailing: bool,
    dispersion: Vec<Complex64>,
    inverse_dispersion: Vec<Complex64>,
    passband: Vec<bool>,
    fft: Spectral,
}

impl Cascade {
    pub fn new(len: usize, sample_rate: f64, stages: &StageConfig) -> Result<Self> {
        if len < 2 {
            return Err(Error::InvalidParameter(
                "propagation grid needs at least 2 samples".into(),
            ));
        }
        stages.validate(sample_rate)?;
        let dispersion = stages.element().transfer(len, sample_rate);
        let inverse_dispersion = dispersion.iter().map(|h| h.conj()).collect();
        Ok(Self {
            len,
            sample_rate,
            trailing: stages.include_trailing_dispersion,
            dispersion,
            inverse_dispersion,
            passband: lowpass_mask(len, sample_rate, stages.pm_bandwidth),
            fft: Spectral::new(len),
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    /// Whether stage `n` (0-based) of `stage_count` ends in a dispersive
    /// element.
    pub fn has_dispersion(&self, n: usize, stage_count: usize) -> bool {
        n + 1 < stage_count || self.trailing
    }

    pub fn disperse(&mut self, field: &mut [Complex64]) {
        self.fft.filter(field, &self.dispersion);
    }

    pub fn undisperse(&mut self, field: &mut [Complex64]) {
        self.fft.filter(field, &self.inverse_dispersion);
    }

    /// Brick-wall lowpass at the phase-modulator bandwidth.
    pub fn lowpass(&mut self, field: &mut [Complex64]) {
        self.fft.mask(field, &self.passband);
    }

    /// Brick-wall lowpass of a real drive; the result stays real.
    pub fn lowpass_real(&mut self, drive: &mut [f64]) {
        let mut buf: Vec<Complex64> = drive.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.lowpass(&mut buf);
        for (d, b) in drive.iter_mut().zip(&buf) {
            *d = b.re;
        }
    }

    /// Passes `field` through modulator `n` (and its dispersive element,
    /// if present).
    pub fn stage(&mut self, field: &mut [Complex64], phase: &[f64], n: usize, stage_count: usize) {
        modulate(field, phase, 1.0);
        if self.has_dispersion(n, stage_count) {
            self.disperse(field);
        }
    }

    /// Forward fields: the field entering each modulator, then the output.
    pub fn forward(
        &mut self,
        input: &[Complex64],
        phases: &PhaseProfileSet,
    ) -> Result<Vec<Vec<Complex64>>> {
        self.check(input.len(), phases)?;
        let n_stages = phases.stage_count();
        let mut out = Vec::with_capacity(n_stages + 1);
        let mut field = input.to_vec();
        for (n, phase) in phases.profiles.iter().enumerate() {
            out.push(field.clone());
            self.stage(&mut field, phase, n, n_stages);
        }
        out.push(field);
        Ok(out)
    }

    /// Output field only.
    pub fn output(&mut self, input: &[Complex64], phases: &PhaseProfileSet) -> Result<Vec<Complex64>> {
        self.check(input.len(), phases)?;
        let n_stages = phases.stage_count();
        let mut field = input.to_vec();
        for (n, phase) in phases.profiles.iter().enumerate() {
            self.stage(&mut field, phase, n, n_stages);
        }
        Ok(field)
    }

    /// Backward fields `B_n`, indexed by stage: the target carried back
    /// through every element after modulator `n`, i.e. the field that
    /// modulator `n` should emit.
    pub fn backward(
        &mut self,
        target: &[Complex64],
        phases: &PhaseProfileSet,
    ) -> Result<Vec<Vec<Complex64>>> {
        self.check(target.len(), phases)?;
        let n_stages = phases.stage_count();
        let mut out = vec![Vec::new(); n_stages];
        let mut field = target.to_vec();
        for n in (0..n_stages).rev() {
            if self.has_dispersion(n, n_stages) {
                self.undisperse(&mut field);
            }
            out[n] = field.clone();
            modulate(&mut field, &phases.profiles[n], -1.0);
        }
        Ok(out)
    }

    /// Inverts the whole cascade: the input that produces `output`.
    pub fn invert(&mut self, output: &[Complex64], phases: &PhaseProfileSet) -> Result<Vec<Complex64>> {
        let back = self.backward(output, phases)?;
        let mut field = back[0].clone();
        modulate(&mut field, &phases.profiles[0], -1.0);
        Ok(field)
    }

    fn check(&self, len: usize, phases: &PhaseProfileSet) -> Result<()> {
        phases.validate()?;
        if len != self.len || phases.len() != self.len {
            return Err(Error::Dimension(format!(
                "field has {len} samples and phases {}, cascade expects {}",
                phases.len(),
                self.len
            )));
        }
        Ok(())
    }
}

// field_k *= exp(i * sign * phase_k)
fn modulate(field: &mut [Complex64], phase: &[f64], sign: f64) {
    for (v, &p) in field.iter_mut().zip(phase) {
        *v *= Complex64::from_polar(1.0, sign * p);
    }
}

/// `out_k = wave_k * exp(i profile_k)`
pub fn apply_phase_modulator(wave: &ComplexWaveform, profile: &[f64]) -> Result<ComplexWaveform> {
    if profile.len() != wave.len() {
        return Err(Error::Dimension(format!(
            "profile has {} samples, waveform {}",
            profile.len(),
            wave.len()
        )));
    }
    let mut samples = wave.samples.clone();
    modulate(&mut samples, profile, 1.0);
    ComplexWaveform::new(samples, wave.sample_rate)
}

/// Ideal lowpass of a real phase drive: all bins with `|f| > pm_bandwidth`
/// are zeroed.
pub fn bandlimit_phase(profile: &[f64], pm_bandwidth: f64, sample_rate: f64) -> Result<Vec<f64>> {
    check_bandwidth(pm_bandwidth, sample_rate)?;
    if profile.is_empty() {
        return Ok(Vec::new());
    }
    let keep = lowpass_mask(profile.len(), sample_rate, pm_bandwidth);
    let mut buf: Vec<Complex64> = profile.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    Spectral::new(profile.len()).mask(&mut buf, &keep);
    Ok(buf.into_iter().map(|v| v.re).collect())
}

pub fn apply_dispersion(wave: &ComplexWaveform, element: &DispersiveElement) -> Result<ComplexWaveform> {
    if wave.len() < 2 {
        return Err(Error::InvalidParameter(
            "dispersion needs at least 2 samples".into(),
        ));
    }
    let h = element.transfer(wave.len(), wave.sample_rate);
    let mut samples = wave.samples.clone();
    Spectral::new(wave.len()).filter(&mut samples, &h);
    ComplexWaveform::new(samples, wave.sample_rate)
}

/// Launches a constant field of `cw_amplitude` and returns the field
/// entering each modulator (`F_1..F_N`) followed by the output.
pub fn propagate_forward(
    cw_amplitude: f64,
    phases: &PhaseProfileSet,
    stages: &StageConfig,
    sample_rate: f64,
) -> Result<Vec<ComplexWaveform>> {
    phases.validate()?;
    let mut cascade = Cascade::new(phases.len(), sample_rate, stages)?;
    let input = vec![Complex64::new(cw_amplitude, 0.0); phases.len()];
    cascade
        .forward(&input, phases)?
        .into_iter()
        .map(|f| ComplexWaveform::new(f, sample_rate))
        .collect()
}

/// Back-propagates `target` and returns `B_1..B_N` (ascending stage
/// order). For phases that realise the target exactly,
/// `B_n = F_n exp(i phi_n)`.
pub fn propagate_backward(
    target: &ComplexWaveform,
    phases: &PhaseProfileSet,
    stages: &StageConfig,
) -> Result<Vec<ComplexWaveform>> {
    let mut cascade = Cascade::new(target.len(), target.sample_rate, stages)?;
    cascade
        .backward(&target.samples, phases)?
        .into_iter()
        .map(|b| ComplexWaveform::new(b, target.sample_rate))
        .collect()
}

/// Sends an arbitrary input field through the cascade.
pub fn propagate(
    input: &ComplexWaveform,
    phases: &PhaseProfileSet,
    stages: &StageConfig,
) -> Result<ComplexWaveform> {
    let mut cascade = Cascade::new(input.len(), input.sample_rate, stages)?;
    ComplexWaveform::new(cascade.output(&input.samples, phases)?, input.sample_rate)
}
