//! Multi-seed parameter sweeps with min/mean/max aggregation and CSV
//! output.
//!
//! Work is split into independent jobs (one solve each) that run on a rayon
//! pool and are collected by index, so the worker count never changes the
//! numbers.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::StageConfig;
use crate::metrics::{combine_sinad, compute_sdr, quantized_sinad, shot_noise_snr, NoiseBudget};
use crate::signal::{generate_qam_block, shape_rrc, PulseShape};
use crate::wavefront::{solve, SolverConfig};
use crate::{Error, Result};

/// Everything that defines one transform instance apart from the stage
/// count and the data seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    pub block_length: usize,
    pub oversampling: usize,
    pub constellation_order: usize,
    pub roll_off: f64,
    /// `None` selects the block-periodic pulse.
    pub rrc_span_symbols: Option<usize>,
    pub symbol_rate_gbd: f64,
    pub stages: StageConfig,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            block_length: 512,
            oversampling: 8,
            constellation_order: 16,
            roll_off: 0.1,
            rrc_span_symbols: None,
            symbol_rate_gbd: 200.0,
            stages: StageConfig::default(),
        }
    }
}

impl SystemConfig {
    pub fn pulse_shape(&self) -> PulseShape {
        PulseShape {
            roll_off: self.roll_off,
            span_symbols: self.rrc_span_symbols,
            oversampling: self.oversampling,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.block_length == 0 {
            return Err(Error::InvalidParameter("block length must be >= 1".into()));
        }
        if !(self.symbol_rate_gbd > 0.0) {
            return Err(Error::InvalidParameter("symbol rate must be > 0".into()));
        }
        self.pulse_shape().validate()?;
        self.stages.validate(self.oversampling as f64)?;
        crate::signal::constellation(self.constellation_order)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    /// Dispersion per stage, ps^-1 nm^-1.
    Dispersion,
    /// Phase-modulator bandwidth, units of f_s.
    PmBandwidth,
    /// DAC resolution, bits.
    DacBits,
    /// On-chip laser power, dBm.
    LaserPower,
}

impl SweepAxis {
    /// First CSV header cell.
    pub fn column_name(self) -> &'static str {
        match self {
            SweepAxis::Dispersion => "disp",
            SweepAxis::PmBandwidth => "bw",
            SweepAxis::DacBits => "bits",
            SweepAxis::LaserPower => "laser_dbm",
        }
    }

    /// Axes whose metric is evaluated on one solve per (N, seed).
    fn shares_solution(self) -> bool {
        matches!(self, SweepAxis::DacBits | SweepAxis::LaserPower)
    }

    /// Desk-scale default grid.
    pub fn default_grid(self) -> Vec<f64> {
        match self {
            SweepAxis::Dispersion => (0..=10).map(|k| k as f64 * 0.05).collect(),
            SweepAxis::PmBandwidth => {
                // 12 points from 0.05 to 1.5, rounded so the CSV stays tidy
                (0..12)
                    .map(|k| ((0.05 + 1.45 * k as f64 / 11.0) * 1e6).round() / 1e6)
                    .collect()
            }
            SweepAxis::DacBits => (1..=12).map(f64::from).collect(),
            SweepAxis::LaserPower => (0..=10).map(|k| -30.0 + 5.0 * k as f64).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Averaging {
    /// Arithmetic mean of the dB values.
    Db,
    /// Mean of the linear ratios, reported in dB.
    Linear,
}

/// Noise inputs for the laser-power axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSettings {
    pub insertion_loss_db_per_stage: f64,
    /// Average loss charged to the IQ Mach-Zehnder baseline.
    pub iq_modulation_loss_db: f64,
    pub quantum_efficiency: f64,
    /// Also charge DAC quantisation at this resolution.
    pub dac_bits: Option<u32>,
}

impl Default for NoiseSettings {
    fn default() -> Self {
        Self {
            insertion_loss_db_per_stage: 2.0,
            iq_modulation_loss_db: 21.0,
            quantum_efficiency: 1.0,
            dac_bits: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub grid: Vec<f64>,
    pub stage_counts: Vec<usize>,
    pub seeds: Vec<u64>,
    pub base: SystemConfig,
    pub solver: SolverConfig,
    pub noise: NoiseSettings,
    pub averaging: Averaging,
    /// `None` uses the available parallelism.
    pub workers: Option<usize>,
}

impl SweepSpec {
    pub fn new(axis: SweepAxis) -> Self {
        Self {
            axis,
            grid: axis.default_grid(),
            stage_counts: (1..=6).collect(),
            seeds: (0..10).collect(),
            base: SystemConfig::default(),
            solver: SolverConfig::default(),
            noise: NoiseSettings::default(),
            averaging: Averaging::Db,
            workers: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() || self.grid.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("grid must be non-empty and finite".into()));
        }
        if self.grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter("grid must be strictly increasing".into()));
        }
        if self.seeds.is_empty() || self.stage_counts.is_empty() {
            return Err(Error::InvalidParameter(
                "seeds and stage counts must be non-empty".into(),
            ));
        }
        if self.stage_counts.contains(&0) {
            return Err(Error::InvalidParameter("stage counts must be >= 1".into()));
        }
        if self.workers == Some(0) {
            return Err(Error::InvalidParameter("worker count must be >= 1".into()));
        }
        self.base.validate()?;
        self.solver.validate()?;
        for &x in &self.grid {
            self.system_at(x)?.validate()?;
            if self.axis == SweepAxis::DacBits {
                bits_of(x)?;
            }
        }
        if let Some(b) = self.noise.dac_bits {
            crate::metrics::quantize_phase(
                &crate::channel::PhaseProfileSet::zeros(1, 1),
                b,
            )?;
        }
        Ok(())
    }

    /// The system configuration in effect at grid value `x`.
    fn system_at(&self, x: f64) -> Result<SystemConfig> {
        let mut sys = self.base;
        match self.axis {
            SweepAxis::Dispersion => sys.stages.dispersion_norm = x,
            SweepAxis::PmBandwidth => sys.stages.pm_bandwidth = x,
            SweepAxis::DacBits | SweepAxis::LaserPower => {}
        }
        Ok(sys)
    }

    fn budget(&self, laser_power_dbm: f64, stage_count: usize) -> NoiseBudget {
        NoiseBudget {
            laser_power_dbm,
            insertion_loss_db_per_stage: self.noise.insertion_loss_db_per_stage,
            stage_count,
            symbol_rate_gbd: self.base.symbol_rate_gbd,
            wavelength_nm: self.base.stages.wavelength_nm,
            quantum_efficiency: self.noise.quantum_efficiency,
        }
    }
}

fn bits_of(x: f64) -> Result<u32> {
    if x.fract() != 0.0 || !(1.0..=52.0).contains(&x) {
        return Err(Error::InvalidParameter(format!(
            "DAC resolution must be a whole number of bits in 1..=52, got {x}"
        )));
    }
    Ok(x as u32)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub x: f64,
    pub stage_count: usize,
    pub mean_db: f64,
    pub min_db: f64,
    pub max_db: f64,
    /// Per-seed values in seed order; NaN where the job failed.
    pub per_seed_db: Vec<f64>,
    pub failed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepResult {
    pub spec: SweepSpec,
    /// Grid-major, stage-count-minor.
    pub rows: Vec<SweepRow>,
    /// IQ transmitter SINAD per grid point (laser-power axis only).
    pub baseline_db: Option<Vec<f64>>,
    pub failures: Vec<String>,
    pub wall_time_s: f64,
}

impl SweepResult {
    pub fn has_failures(&self) -> bool {
        !self.failures.is_empty()
    }

    pub fn row(&self, x_index: usize, stage_index: usize) -> &SweepRow {
        &self.rows[x_index * self.spec.stage_counts.len() + stage_index]
    }
}

struct Job {
    /// `None` when the job covers the whole grid.
    x_index: Option<usize>,
    stage_count: usize,
    seed: u64,
}

/// Runs every (grid point, stage count, seed) combination of the sweep.
pub fn run_sweep(spec: &SweepSpec) -> Result<SweepResult> {
    spec.validate()?;
    let started = Instant::now();

    let mut jobs = Vec::new();
    let x_slots: Vec<Option<usize>> = if spec.axis.shares_solution() {
        vec![None]
    } else {
        (0..spec.grid.len()).map(Some).collect()
    };
    for &x_index in &x_slots {
        for &stage_count in &spec.stage_counts {
            for &seed in &spec.seeds {
                jobs.push(Job {
                    x_index,
                    stage_count,
                    seed,
                });
            }
        }
    }

    let run = || -> Vec<std::result::Result<Vec<f64>, String>> {
        jobs.par_iter()
            .map(|job| run_job(spec, job).map_err(|e| e.to_string()))
            .collect()
    };
    let outcomes = match spec.workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::InvalidParameter(format!("worker pool: {e}")))?
            .install(run),
        None => run(),
    };

    // values[x][n][seed]
    let n_x = spec.grid.len();
    let n_n = spec.stage_counts.len();
    let n_s = spec.seeds.len();
    let mut values = vec![vec![vec![f64::NAN; n_s]; n_n]; n_x];
    let mut failures = Vec::new();
    for (job_index, (job, outcome)) in jobs.iter().zip(outcomes).enumerate() {
        let ni = (job_index / n_s) % n_n;
        let si = job_index % n_s;
        match outcome {
            Ok(v) => match job.x_index {
                Some(xi) => values[xi][ni][si] = v[0],
                None => (0..n_x).for_each(|xi| values[xi][ni][si] = v[xi]),
            },
            Err(msg) => {
                let at = job
                    .x_index
                    .map_or_else(|| "all".to_string(), |xi| spec.grid[xi].to_string());
                failures.push(format!(
                    "{}={at} N={} seed={}: {msg}",
                    spec.axis.column_name(),
                    job.stage_count,
                    job.seed
                ));
            }
        }
    }

    let mut rows = Vec::with_capacity(n_x * n_n);
    for (xi, &x) in spec.grid.iter().enumerate() {
        for (ni, &stage_count) in spec.stage_counts.iter().enumerate() {
            let per_seed = values[xi][ni].clone();
            let (mean_db, min_db, max_db) = aggregate(&per_seed, spec.averaging);
            rows.push(SweepRow {
                x,
                stage_count,
                mean_db,
                min_db,
                max_db,
                failed: per_seed.iter().any(|v| v.is_nan()),
                per_seed_db: per_seed,
            });
        }
    }

    let baseline_db = if spec.axis == SweepAxis::LaserPower {
        Some(
            spec.grid
                .iter()
                .map(|&p| shot_noise_snr(&spec.budget(p, 0), spec.noise.iq_modulation_loss_db))
                .collect::<Result<Vec<f64>>>()?,
        )
    } else {
        None
    };

    Ok(SweepResult {
        spec: spec.clone(),
        rows,
        baseline_db,
        failures,
        wall_time_s: started.elapsed().as_secs_f64(),
    })
}

/// Mean, min and max over the finite entries; NaN if there are none.
pub fn aggregate(values: &[f64], averaging: Averaging) -> (f64, f64, f64) {
    let ok: Vec<f64> = values.iter().copied().filter(|v| !v.is_nan()).collect();
    if ok.is_empty() {
        return (f64::NAN, f64::NAN, f64::NAN);
    }
    let min = ok.iter().copied().fold(f64::INFINITY, f64::min);
    let max = ok.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let n = ok.len() as f64;
    let mean = match averaging {
        Averaging::Db => ok.iter().sum::<f64>() / n,
        Averaging::Linear => {
            10.0 * (ok.iter().map(|v| 10f64.powf(v / 10.0)).sum::<f64>() / n).log10()
        }
    };
    // rounding in the mean must not escape the envelope
    (mean.clamp(min, max), min, max)
}

// One solve; returns one value, or one per grid point for shared-solution
// axes.
fn run_job(spec: &SweepSpec, job: &Job) -> Result<Vec<f64>> {
    let sys = match job.x_index {
        Some(xi) => spec.system_at(spec.grid[xi])?,
        None => spec.base,
    };
    let shape = sys.pulse_shape();
    let block = generate_qam_block(sys.constellation_order, sys.block_length, job.seed)?;
    let target = shape_rrc(&block, &shape)?;
    let solution = solve(&target, &shape, &sys.stages, job.stage_count, &spec.solver)?;

    match spec.axis {
        SweepAxis::Dispersion | SweepAxis::PmBandwidth => Ok(vec![solution.sdr_db]),
        SweepAxis::DacBits => spec
            .grid
            .iter()
            .map(|&b| quantized_sinad(&solution, bits_of(b)?, &target, &shape, &sys.stages))
            .collect(),
        SweepAxis::LaserPower => {
            let mut distortion = vec![solution.sdr_db];
            if let Some(bits) = spec.noise.dac_bits {
                distortion.push(quantized_sinad(&solution, bits, &target, &shape, &sys.stages)?);
            }
            spec.grid
                .iter()
                .map(|&p| {
                    let mut parts = distortion.clone();
                    parts.push(shot_noise_snr(&spec.budget(p, job.stage_count), 0.0)?);
                    combine_sinad(&parts)
                })
                .collect()
        }
    }
}

/// Direct single-point evaluation, equivalent to a one-seed, one-point
/// sweep.
pub fn evaluate_point(spec: &SweepSpec, x: f64, stage_count: usize, seed: u64) -> Result<f64> {
    let single = SweepSpec {
        grid: vec![x],
        stage_counts: vec![stage_count],
        seeds: vec![seed],
        ..spec.clone()
    };
    single.validate()?;
    let job = Job {
        x_index: if single.axis.shares_solution() { None } else { Some(0) },
        stage_count,
        seed,
    };
    Ok(run_job(&single, &job)?[0])
}

/// Symbol SDR of a solve at the base configuration, for callers that do not
/// need a whole sweep.
pub fn solve_sdr(sys: &SystemConfig, solver: &SolverConfig, stage_count: usize, seed: u64) -> Result<f64> {
    let shape = sys.pulse_shape();
    let block = generate_qam_block(sys.constellation_order, sys.block_length, seed)?;
    let target = shape_rrc(&block, &shape)?;
    let solution = solve(&target, &shape, &sys.stages, stage_count, solver)?;
    let planes = crate::channel::propagate_forward(
        target.mean_power().sqrt(),
        &solution.phases,
        &sys.stages,
        target.sample_rate,
    )?;
    let out = planes.last().expect("at least one plane");
    Ok(compute_sdr(out, &block, &shape)?.sdr_db)
}

fn companion(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map_or_else(String::new, |s| s.to_string_lossy().into_owned());
    let name = match path.extension() {
        Some(ext) => format!("{stem}{suffix}.{}", ext.to_string_lossy()),
        None => format!("{stem}{suffix}"),
    };
    path.with_file_name(name)
}

fn format_table(result: &SweepResult, pick: impl Fn(&SweepRow) -> f64) -> String {
    let spec = &result.spec;
    let mut header = vec![spec.axis.column_name().to_string()];
    header.extend(spec.stage_counts.iter().map(|n| n.to_string()));
    if result.baseline_db.is_some() {
        header.push("IQ".into());
    }
    let mut text = header.join(",");
    text.push('\n');
    for (xi, &x) in spec.grid.iter().enumerate() {
        let mut cells = vec![format!("{x}")];
        for ni in 0..spec.stage_counts.len() {
            cells.push(format!("{:.8e}", pick(result.row(xi, ni))));
        }
        if let Some(iq) = &result.baseline_db {
            cells.push(format!("{:.8e}", iq[xi]));
        }
        text.push_str(&cells.join(","));
        text.push('\n');
    }
    text
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes the mean table to `path` and, when there is more than one seed,
/// the max and min tables next to it with `_upper` and `_lower` suffixes.
/// Returns every file written.
pub fn write_csv(result: &SweepResult, path: &Path) -> Result<Vec<PathBuf>> {
    write_text(path, &format_table(result, |r| r.mean_db))?;
    let mut written = vec![path.to_path_buf()];
    if result.spec.seeds.len() > 1 {
        let upper = companion(path, "_upper");
        let lower = companion(path, "_lower");
        write_text(&upper, &format_table(result, |r| r.max_db))?;
        write_text(&lower, &format_table(result, |r| r.min_db))?;
        written.extend([upper, lower]);
    }
    Ok(written)
}

/// JSON sidecar with the full spec, solver caps, timing and failures.
pub fn write_metadata(result: &SweepResult, outputs: &[PathBuf], path: &Path) -> Result<()> {
    let timestamp = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map_or(0, |d| d.as_secs());
    let doc = serde_json::json!({
        "package": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "generated_unix_s": timestamp,
        "wall_time_s": result.wall_time_s,
        "max_iterations": result.spec.solver.max_iterations,
        "sdr_cap_db": crate::metrics::SDR_CAP_DB,
        "spec": result.spec,
        "failures": result.failures,
        "outputs": outputs.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
    });
    let text = serde_json::to_string_pretty(&doc)
        .map_err(|e| Error::InvalidParameter(format!("metadata serialisation: {e}")))?;
    write_text(path, &text)
}
