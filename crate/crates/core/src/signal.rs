//! Target waveform generation: square QAM symbol blocks, root-raised-cosine
//! pulse shaping and matched filtering.
//!
//! All filtering is block-cyclic. A block of `L` symbols at `os` samples per
//! symbol is treated as one period of an infinitely repeating waveform, so
//! the discrete Fourier transform is exact for every filter used here.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::spectral::{frequency_grid, Spectral};
use crate::{Error, Result};

/// Uniformly sampled complex baseband field envelope.
///
/// `sample_rate` is in units of the symbol rate, so `8.0` means eight
/// samples per symbol.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexWaveform {
    pub samples: Vec<Complex64>,
    pub sample_rate: f64,
}

impl ComplexWaveform {
    pub fn new(samples: Vec<Complex64>, sample_rate: f64) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidParameter("waveform has no samples".into()));
        }
        if !(sample_rate > 0.0 && sample_rate.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "sample rate must be positive, got {sample_rate}"
            )));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    /// Constant field of the given amplitude.
    pub fn constant(amplitude: Complex64, len: usize, sample_rate: f64) -> Result<Self> {
        Self::new(vec![amplitude; len], sample_rate)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// `sum |x_k|^2`
    pub fn energy(&self) -> f64 {
        energy(&self.samples)
    }

    pub fn mean_power(&self) -> f64 {
        self.energy() / self.len() as f64
    }

    /// Sample instants in symbol periods.
    pub fn times(&self) -> Vec<f64> {
        (0..self.len())
            .map(|k| k as f64 / self.sample_rate)
            .collect()
    }
}

pub(crate) fn energy(x: &[Complex64]) -> f64 {
    x.iter().map(|v| v.norm_sqr()).sum()
}

/// A block of constellation symbols.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolBlock {
    pub symbols: Vec<Complex64>,
    pub constellation_order: usize,
    pub seed: u64,
}

impl SymbolBlock {
    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }
}

fn side_length(order: usize) -> Result<usize> {
    if order < 4 {
        return Err(Error::UnsupportedConstellation(order));
    }
    let side = (order as f64).sqrt().round() as usize;
    if side * side != order {
        return Err(Error::UnsupportedConstellation(order));
    }
    Ok(side)
}

/// Per-axis amplitude levels of square `order`-QAM, scaled so the full
/// constellation has unit average power.
pub fn qam_levels(order: usize) -> Result<Vec<f64>> {
    let side = side_length(order)?;
    let scale = (3.0 / (2.0 * (order as f64 - 1.0))).sqrt();
    Ok((0..side)
        .map(|i| (2.0 * i as f64 - (side as f64 - 1.0)) * scale)
        .collect())
}

/// All points of the unit-average-power square constellation, indexed by
/// label.
pub fn constellation(order: usize) -> Result<Vec<Complex64>> {
    let side = side_length(order)?;
    let levels = qam_levels(order)?;
    Ok((0..order)
        .map(|label| {
            let (i, q) = label_to_levels(label, side);
            Complex64::new(levels[i], levels[q])
        })
        .collect())
}

fn gray_decode(mut g: usize) -> usize {
    let mut b = g;
    while g > 0 {
        g >>= 1;
        b ^= g;
    }
    b
}

// Gray labelling per axis when the side is a power of two; natural
// ordering otherwise (there is no reflected Gray code for other sizes).
fn label_to_levels(label: usize, side: usize) -> (usize, usize) {
    let (hi, lo) = (label / side, label % side);
    if side.is_power_of_two() {
        (gray_decode(hi), gray_decode(lo))
    } else {
        (hi, lo)
    }
}

/// Draws `block_length` uniformly distributed symbols from Gray-mapped
/// square `order`-QAM.
pub fn generate_qam_block(order: usize, block_length: usize, seed: u64) -> Result<SymbolBlock> {
    let points = constellation(order)?;
    if block_length == 0 {
        return Err(Error::InvalidParameter("block length must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let symbols = (0..block_length)
        .map(|_| points[rng.gen_range(0..order)])
        .collect();
    Ok(SymbolBlock {
        symbols,
        constellation_order: order,
        seed,
    })
}

/// Root-raised-cosine pulse.
///
/// `span_symbols = None` selects the block-periodic pulse: the closed-form
/// impulse response summed over all periods of the block, evaluated
/// exactly on the DFT grid. It is strictly bandlimited and Nyquist. A
/// finite span truncates the closed-form taps instead, which leaves
/// residual inter-symbol interference for small roll-off.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseShape {
    pub roll_off: f64,
    pub span_symbols: Option<usize>,
    pub oversampling: usize,
}

impl Default for PulseShape {
    fn default() -> Self {
        Self {
            roll_off: 0.1,
            span_symbols: None,
            oversampling: 8,
        }
    }
}

impl PulseShape {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.roll_off) {
            return Err(Error::InvalidParameter(format!(
                "roll-off must lie in [0, 1], got {}",
                self.roll_off
            )));
        }
        if self.oversampling < 2 {
            return Err(Error::InvalidParameter(format!(
                "oversampling must be >= 2, got {}",
                self.oversampling
            )));
        }
        if let Some(span) = self.span_symbols {
            if span < 8 {
                return Err(Error::InvalidParameter(format!(
                    "filter span must be >= 8 symbols, got {span}"
                )));
            }
        }
        Ok(())
    }

    /// Truncated closed-form taps (unit energy), centred on the middle tap.
    /// Only meaningful for a finite span.
    pub fn taps(&self) -> Result<Vec<f64>> {
        self.validate()?;
        let span = self.span_symbols.ok_or_else(|| {
            Error::InvalidParameter("periodic pulse has no finite tap set".into())
        })?;
        let n = span * self.oversampling;
        let centre = n / 2;
        let mut taps: Vec<f64> = (0..=n)
            .map(|k| {
                let t = (k as f64 - centre as f64) / self.oversampling as f64;
                rrc_impulse(t, self.roll_off)
            })
            .collect();
        let norm = taps.iter().map(|v| v * v).sum::<f64>().sqrt();
        taps.iter_mut().for_each(|v| *v /= norm);
        Ok(taps)
    }

    /// DFT of the unit-energy pulse for a block of `num_symbols` symbols,
    /// with the pulse centred on sample zero.
    pub fn frequency_response(&self, num_symbols: usize) -> Result<Vec<Complex64>> {
        self.validate()?;
        let len = num_symbols * self.oversampling;
        match self.span_symbols {
            None => {
                let freqs = frequency_grid(len, self.oversampling as f64);
                let raw: Vec<f64> = freqs
                    .iter()
                    .map(|&f| root_raised_cosine_spectrum(f, self.roll_off))
                    .collect();
                // unit energy: sum |h_t|^2 = sum |H_k|^2 / len = 1
                let scale = (len as f64 / raw.iter().map(|v| v * v).sum::<f64>()).sqrt();
                Ok(raw
                    .into_iter()
                    .map(|v| Complex64::new(v * scale, 0.0))
                    .collect())
            }
            Some(span) => {
                let taps = self.taps()?;
                if taps.len() > len {
                    return Err(Error::Dimension(format!(
                        "filter span {span} symbols exceeds block of {num_symbols} symbols"
                    )));
                }
                let centre = (taps.len() - 1) / 2;
                let mut buf = vec![Complex64::new(0.0, 0.0); len];
                for (k, &t) in taps.iter().enumerate() {
                    let idx = (k as isize - centre as isize).rem_euclid(len as isize) as usize;
                    buf[idx] += t;
                }
                Spectral::new(len).forward(&mut buf);
                Ok(buf)
            }
        }
    }
}

/// Closed-form root-raised-cosine impulse response for a unit symbol
/// period, `t` in symbol periods.
pub fn rrc_impulse(t: f64, beta: f64) -> f64 {
    if t.abs() < 1e-12 {
        return 1.0 - beta + 4.0 * beta / PI;
    }
    if beta > 0.0 && ((4.0 * beta * t).abs() - 1.0).abs() < 1e-10 {
        let a = PI / (4.0 * beta);
        return beta / 2f64.sqrt() * ((1.0 + 2.0 / PI) * a.sin() + (1.0 - 2.0 / PI) * a.cos());
    }
    let num = (PI * t * (1.0 - beta)).sin() + 4.0 * beta * t * (PI * t * (1.0 + beta)).cos();
    let den = PI * t * (1.0 - (4.0 * beta * t).powi(2));
    num / den
}

/// Square root of the raised-cosine spectrum (peak 1), `f` in units of the
/// symbol rate.
pub fn root_raised_cosine_spectrum(f: f64, beta: f64) -> f64 {
    let f = f.abs();
    let lo = (1.0 - beta) / 2.0;
    let hi = (1.0 + beta) / 2.0;
    if f < lo {
        1.0
    } else if f > hi {
        0.0
    } else if beta == 0.0 {
        0.5f64.sqrt()
    } else {
        (PI / (2.0 * beta) * (f - lo)).cos()
    }
}

/// Cached pulse-shaping and matched-filter machinery for one block size.
///
/// Synthesis and sampling exploit the fact that symbol-spaced impulses have
/// a spectrum that repeats every `num_symbols` bins, so only one long and one
/// short transform are needed per call.
pub struct PulseFilter {
    num_symbols: usize,
    oversampling: usize,
    response: Vec<Complex64>,
    long: Spectral,
    short: Spectral,
}

impl PulseFilter {
    pub fn new(shape: &PulseShape, num_symbols: usize) -> Result<Self> {
        if num_symbols == 0 {
            return Err(Error::InvalidParameter("block length must be >= 1".into()));
        }
        let response = shape.frequency_response(num_symbols)?;
        Ok(Self {
            num_symbols,
            oversampling: shape.oversampling,
            response,
            long: Spectral::new(num_symbols * shape.oversampling),
            short: Spectral::new(num_symbols),
        })
    }

    pub fn num_symbols(&self) -> usize {
        self.num_symbols
    }

    pub fn num_samples(&self) -> usize {
        self.num_symbols * self.oversampling
    }

    /// Circular convolution of symbol impulses with the pulse.
    pub fn synthesize(&mut self, symbols: &[Complex64]) -> Result<Vec<Complex64>> {
        if symbols.len() != self.num_symbols {
            return Err(Error::Dimension(format!(
                "expected {} symbols, got {}",
                self.num_symbols,
                symbols.len()
            )));
        }
        let mut s = symbols.to_vec();
        self.short.forward(&mut s);
        let l = self.num_symbols;
        let mut y: Vec<Complex64> = self
            .response
            .iter()
            .enumerate()
            .map(|(k, h)| s[k % l] * h)
            .collect();
        self.long.inverse(&mut y);
        Ok(y)
    }

    /// Circular correlation with the pulse, sampled at the symbol instants.
    pub fn sample(&mut self, samples: &[Complex64]) -> Result<Vec<Complex64>> {
        if samples.len() != self.num_samples() {
            return Err(Error::Dimension(format!(
                "expected {} samples, got {}",
                self.num_samples(),
                samples.len()
            )));
        }
        let mut y = samples.to_vec();
        self.long.forward(&mut y);
        let l = self.num_symbols;
        let mut folded = vec![Complex64::new(0.0, 0.0); l];
        for (k, (v, h)) in y.iter().zip(&self.response).enumerate() {
            folded[k % l] += v * h.conj();
        }
        self.short.inverse(&mut folded);
        let scale = 1.0 / self.oversampling as f64;
        folded.iter_mut().for_each(|v| *v *= scale);
        Ok(folded)
    }
}

/// Pulse-shapes a symbol block onto a waveform at `shape.oversampling`
/// samples per symbol.
pub fn shape_rrc(block: &SymbolBlock, shape: &PulseShape) -> Result<ComplexWaveform> {
    let mut filter = PulseFilter::new(shape, block.len())?;
    let samples = filter.synthesize(&block.symbols)?;
    ComplexWaveform::new(samples, shape.oversampling as f64)
}

/// Matched-filters a waveform with the same unit-energy pulse and samples
/// it once per symbol.
pub fn matched_filter_and_sample(
    wave: &ComplexWaveform,
    shape: &PulseShape,
) -> Result<Vec<Complex64>> {
    shape.validate()?;
    if (wave.sample_rate - shape.oversampling as f64).abs() > 1e-12 {
        return Err(Error::Dimension(format!(
            "waveform sample rate {} does not match oversampling {}",
            wave.sample_rate, shape.oversampling
        )));
    }
    if !wave.len().is_multiple_of(shape.oversampling) {
        return Err(Error::Dimension(format!(
            "waveform length {} is not a whole number of symbols",
            wave.len()
        )));
    }
    let mut filter = PulseFilter::new(shape, wave.len() / shape.oversampling)?;
    filter.sample(&wave.samples)
}
