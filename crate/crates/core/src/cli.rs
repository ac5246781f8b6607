//! Command implementations behind the `stut` binary.
//!
//! Each command starts from a figure preset, applies the config file, then
//! the command-line overrides. Commands return the process exit code:
//! 0 on success, 1 when a solve diverged.

use std::path::{Path, PathBuf};
use std::time::Instant;

use num_complex::Complex64;
use serde_json::json;

use crate::channel::{propagate_forward, StageConfig};
use crate::config::{RunConfig, SolveTarget};
use crate::metrics::{dispersive_efficiency_ratio, mzm_iq_modulation_loss, symbol_sdr, SDR_CAP_DB};
use crate::signal::{generate_qam_block, shape_rrc, ComplexWaveform, PulseFilter};
use crate::spectral::{frequency_grid, Spectral};
use crate::sweep::{run_sweep, write_csv, write_metadata, SweepAxis, SweepSpec, SystemConfig};
use crate::wavefront::{solve, write_trace_csv, SolverConfig};
use crate::{Error, Result};

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seeds: Option<Vec<u64>>,
    pub workers: Option<usize>,
    pub max_iterations: Option<usize>,
    pub stage_counts: Option<Vec<usize>>,
}

/// Parses `"0,3,5"`, `"0-9"` or a mix such as `"0-2,7"`.
pub fn parse_seed_list(text: &str) -> Result<Vec<u64>> {
    let bad = |item: &str| Error::Config {
        key: "seed-list".into(),
        reason: format!("cannot parse `{item}`"),
    };
    let mut seeds = Vec::new();
    for item in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        match item.split_once('-') {
            Some((a, b)) => {
                let a: u64 = a.trim().parse().map_err(|_| bad(item))?;
                let b: u64 = b.trim().parse().map_err(|_| bad(item))?;
                if b < a {
                    return Err(bad(item));
                }
                seeds.extend(a..=b);
            }
            None => seeds.push(item.parse().map_err(|_| bad(item))?),
        }
    }
    if seeds.is_empty() {
        return Err(Error::Config {
            key: "seed-list".into(),
            reason: "no seeds given".into(),
        });
    }
    Ok(seeds)
}

/// Fixed parameters of each figure-reproducing sweep.
pub fn sweep_preset(axis: SweepAxis) -> SweepSpec {
    let mut spec = SweepSpec::new(axis);
    spec.base.stages.pm_bandwidth = 0.55;
    match axis {
        SweepAxis::Dispersion => {}
        // the published setting for this figure; override with
        // stage.dispersion_psnm_norm
        SweepAxis::PmBandwidth => spec.base.stages.dispersion_norm = 10.0,
        SweepAxis::DacBits => spec.base.stages.dispersion_norm = 0.3,
        SweepAxis::LaserPower => {
            spec.base.symbol_rate_gbd = 200.0;
            spec.base.stages.dispersion_norm = 0.3;
            spec.noise.insertion_loss_db_per_stage = 2.0;
            spec.noise.iq_modulation_loss_db = 21.0;
        }
    }
    spec
}

fn output_stem(axis: SweepAxis) -> &'static str {
    match axis {
        SweepAxis::Dispersion => "sdr_vs_dispersion",
        SweepAxis::PmBandwidth => "sdr_vs_bandwidth",
        SweepAxis::DacBits => "sinad_vs_dac_bits",
        SweepAxis::LaserPower => "sinad_vs_laser_power",
    }
}

fn apply_overrides(spec: &mut SweepSpec, overrides: &Overrides) {
    if let Some(s) = &overrides.seeds {
        spec.seeds = s.clone();
    }
    if overrides.workers.is_some() {
        spec.workers = overrides.workers;
    }
    if let Some(m) = overrides.max_iterations {
        spec.solver.max_iterations = m;
    }
    if let Some(n) = &overrides.stage_counts {
        spec.stage_counts = n.clone();
    }
}

/// Builds the fully resolved spec for a sweep command.
pub fn resolve_sweep(axis: SweepAxis, config: &RunConfig, overrides: &Overrides) -> Result<SweepSpec> {
    let mut spec = sweep_preset(axis);
    config.apply_sweep(&mut spec)?;
    apply_overrides(&mut spec, overrides);
    spec.validate()?;
    Ok(spec)
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::InvalidParameter(format!("JSON serialisation: {e}")))?;
    write_text(path, &text)
}

pub fn cmd_sweep(
    axis: SweepAxis,
    config: &RunConfig,
    overrides: &Overrides,
    out_dir: &Path,
) -> Result<i32> {
    let spec = resolve_sweep(axis, config, overrides)?;
    create_dir(out_dir)?;
    eprintln!(
        "{}: {} grid points x {} stage counts x {} seeds",
        output_stem(axis),
        spec.grid.len(),
        spec.stage_counts.len(),
        spec.seeds.len()
    );
    let result = run_sweep(&spec)?;
    let csv = out_dir.join(format!("{}.csv", output_stem(axis)));
    let written = write_csv(&result, &csv)?;
    let meta = out_dir.join(format!("{}.json", output_stem(axis)));
    write_metadata(&result, &written, &meta)?;

    if axis == SweepAxis::LaserPower {
        // the modelled IQ loss is recorded next to the fixed value used
        let depth = config.iq_modulation_depth().unwrap_or(0.3);
        let block = generate_qam_block(spec.base.constellation_order, spec.base.block_length, 0)?;
        let modelled = mzm_iq_modulation_loss(&block, &spec.base.pulse_shape(), depth)?;
        let mut doc: serde_json::Value = serde_json::from_str(
            &std::fs::read_to_string(&meta).map_err(|e| Error::io(&meta, e))?,
        )
        .map_err(|e| Error::InvalidParameter(format!("metadata: {e}")))?;
        doc["iq_modulation_depth_vpi"] = json!(depth);
        doc["iq_modulation_loss_modelled_db"] = json!(modelled);
        write_json(&meta, &doc)?;
    }

    for f in &result.failures {
        eprintln!("failed: {f}");
    }
    eprintln!(
        "wrote {} ({:.1} s, {} failures)",
        csv.display(),
        result.wall_time_s,
        result.failures.len()
    );
    Ok(if result.has_failures() { 1 } else { 0 })
}

pub fn cmd_sweep_dispersion(config: &RunConfig, overrides: &Overrides, out_dir: &Path) -> Result<i32> {
    cmd_sweep(SweepAxis::Dispersion, config, overrides, out_dir)
}

pub fn cmd_sweep_bandwidth(config: &RunConfig, overrides: &Overrides, out_dir: &Path) -> Result<i32> {
    cmd_sweep(SweepAxis::PmBandwidth, config, overrides, out_dir)
}

pub fn cmd_sweep_dac(config: &RunConfig, overrides: &Overrides, out_dir: &Path) -> Result<i32> {
    cmd_sweep(SweepAxis::DacBits, config, overrides, out_dir)
}

pub fn cmd_sweep_laser(config: &RunConfig, overrides: &Overrides, out_dir: &Path) -> Result<i32> {
    cmd_sweep(SweepAxis::LaserPower, config, overrides, out_dir)
}

/// Fully resolved single-solve settings.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveSettings {
    pub system: SystemConfig,
    pub solver: SolverConfig,
    pub stage_count: usize,
    pub seed: u64,
    pub target: SolveTarget,
}

pub fn resolve_solve(config: &RunConfig, overrides: &Overrides) -> Result<SolveSettings> {
    let mut system = SystemConfig::default();
    system.stages = StageConfig {
        dispersion_norm: 0.3,
        pm_bandwidth: 0.55,
        ..system.stages
    };
    let mut solver = SolverConfig::default();
    config.apply_system(&mut system)?;
    config.apply_solver(&mut solver)?;
    let section = config.solve.clone().unwrap_or_default();
    let mut settings = SolveSettings {
        system,
        solver,
        stage_count: section.stage_count.unwrap_or(4),
        seed: section.seed.unwrap_or(0),
        target: section.target.unwrap_or(SolveTarget::Qam),
    };
    if let Some(seeds) = &overrides.seeds {
        if seeds.len() != 1 {
            return Err(Error::Config {
                key: "seed-list".into(),
                reason: "solve takes exactly one seed".into(),
            });
        }
        settings.seed = seeds[0];
    }
    if let Some(m) = overrides.max_iterations {
        settings.solver.max_iterations = m;
    }
    if let Some(n) = &overrides.stage_counts {
        if n.len() != 1 {
            return Err(Error::Config {
                key: "stages".into(),
                reason: "solve takes exactly one stage count".into(),
            });
        }
        settings.stage_count = n[0];
    }
    if settings.stage_count == 0 {
        return Err(Error::Config {
            key: "stage_count".into(),
            reason: "must be >= 1".into(),
        });
    }
    settings.system.validate()?;
    settings.solver.validate()?;
    Ok(settings)
}

/// One-sided power spectrum of a real drive with its mean removed,
/// smoothed over `2 * half_width + 1` bins and normalised to 0 dB at the
/// peak. Returns `(frequency, dB)` for `0 <= f <= max_frequency`.
pub fn drive_psd(
    drive: &[f64],
    sample_rate: f64,
    max_frequency: f64,
    half_width: usize,
) -> Vec<(f64, f64)> {
    let len = drive.len();
    if len == 0 {
        return Vec::new();
    }
    let mean = drive.iter().sum::<f64>() / len as f64;
    let mut buf: Vec<Complex64> = drive.iter().map(|&v| Complex64::new(v - mean, 0.0)).collect();
    Spectral::new(len).forward(&mut buf);
    let power: Vec<f64> = buf.iter().map(|v| v.norm_sqr()).collect();
    let smoothed: Vec<f64> = (0..len)
        .map(|k| {
            let w = half_width as isize;
            (-w..=w)
                .map(|d| power[(k as isize + d).rem_euclid(len as isize) as usize])
                .sum::<f64>()
                / (2 * half_width + 1) as f64
        })
        .collect();
    let freqs = frequency_grid(len, sample_rate);
    let picked: Vec<(f64, f64)> = freqs
        .iter()
        .zip(&smoothed)
        .filter(|(f, _)| **f >= 0.0 && **f <= max_frequency + 1e-12)
        .map(|(f, p)| (*f, *p))
        .collect();
    let peak = picked.iter().map(|(_, p)| *p).fold(0.0, f64::max);
    picked
        .into_iter()
        .map(|(f, p)| {
            let db = if peak > 0.0 && p > 0.0 {
                (10.0 * (p / peak).log10()).max(-300.0)
            } else {
                -300.0
            };
            (f, db)
        })
        .collect()
}

/// Level of the drive spectrum at the band edge, dB relative to its peak.
fn band_edge_level(psd: &[(f64, f64)]) -> f64 {
    psd.last().map_or(f64::NAN, |(_, db)| *db)
}

pub fn cmd_solve(config: &RunConfig, overrides: &Overrides, out_dir: &Path) -> Result<i32> {
    let settings = resolve_solve(config, overrides)?;
    run_solve(&settings, out_dir)
}

/// Solves once and writes phases, drive spectra, constellation, trace and
/// summary files into `out_dir`.
pub fn run_solve(settings: &SolveSettings, out_dir: &Path) -> Result<i32> {
    create_dir(out_dir)?;
    let started = Instant::now();
    let sys = &settings.system;
    let shape = sys.pulse_shape();
    let block = generate_qam_block(sys.constellation_order, sys.block_length, settings.seed)?;
    let target = match settings.target {
        SolveTarget::Qam => shape_rrc(&block, &shape)?,
        SolveTarget::Cw => ComplexWaveform::constant(
            Complex64::new(1.0, 0.0),
            sys.block_length * sys.oversampling,
            sys.oversampling as f64,
        )?,
    };

    let solution = match solve(&target, &shape, &sys.stages, settings.stage_count, &settings.solver) {
        Ok(s) => s,
        Err(e @ Error::NumericDivergence { .. }) => {
            eprintln!("solve failed: {e}");
            write_json(
                &out_dir.join("summary.json"),
                &json!({ "error": e.to_string() }),
            )?;
            return Ok(1);
        }
        Err(e) => return Err(e),
    };

    let planes = propagate_forward(
        target.mean_power().sqrt(),
        &solution.phases,
        &sys.stages,
        target.sample_rate,
    )?;
    let output = planes.last().expect("cascade has an output plane");
    let mut filter = PulseFilter::new(&shape, sys.block_length)?;
    let reference = filter.sample(&target.samples)?;
    let received = filter.sample(&output.samples)?;
    let report = symbol_sdr(&received, &reference)?;

    let n = settings.stage_count;
    let mut phases = String::from("time_ts");
    (1..=n).for_each(|k| phases.push_str(&format!(",phi_{k}")));
    phases.push('\n');
    for (j, t) in target.times().iter().enumerate() {
        phases.push_str(&format!("{t:.8e}"));
        for p in &solution.phases.profiles {
            phases.push_str(&format!(",{:.8e}", p[j]));
        }
        phases.push('\n');
    }
    write_text(&out_dir.join("phases.csv"), &phases)?;

    let smoothing = (sys.block_length / 128).max(1);
    let spectra: Vec<Vec<(f64, f64)>> = solution
        .phases
        .profiles
        .iter()
        .map(|p| drive_psd(p, target.sample_rate, sys.stages.pm_bandwidth, smoothing))
        .collect();
    let mut psd = String::from("freq_fs");
    (1..=n).for_each(|k| psd.push_str(&format!(",psd_db_{k}")));
    psd.push('\n');
    for (i, (f, _)) in spectra[0].iter().enumerate() {
        psd.push_str(&format!("{f:.8e}"));
        for s in &spectra {
            psd.push_str(&format!(",{:.8e}", s[i].1));
        }
        psd.push('\n');
    }
    write_text(&out_dir.join("drive_psd.csv"), &psd)?;

    let mut constellation = String::from("i,q\n");
    for r in &received {
        let z = report.complex_gain * r;
        constellation.push_str(&format!("{:.8e},{:.8e}\n", z.re, z.im));
    }
    write_text(&out_dir.join("constellation.csv"), &constellation)?;
    write_trace_csv(&solution, &out_dir.join("trace.csv"))?;

    let edge: Vec<f64> = spectra.iter().map(|s| band_edge_level(s)).collect();
    write_json(
        &out_dir.join("summary.json"),
        &json!({
            "sdr_db": report.sdr_db,
            "solver_sdr_db": solution.sdr_db,
            "iterations": solution.iterations_used,
            "converged": solution.converged,
            "dispersive_efficiency_ratio": dispersive_efficiency_ratio(&target)?,
            "stage_count": n,
            "seed": settings.seed,
            "drive_psd_band_edge_db": edge,
            "wall_time_s": started.elapsed().as_secs_f64(),
        }),
    )?;
    let timestamp = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map_or(0, |d| d.as_secs());
    write_json(
        &out_dir.join("metadata.json"),
        &json!({
            "package": env!("CARGO_PKG_NAME"),
            "version": env!("CARGO_PKG_VERSION"),
            "generated_unix_s": timestamp,
            "system": sys,
            "solver": settings.solver,
            "stage_count": n,
            "seed": settings.seed,
            "target": format!("{:?}", settings.target).to_lowercase(),
            "max_iterations": settings.solver.max_iterations,
            "sdr_cap_db": SDR_CAP_DB,
        }),
    )?;
    eprintln!(
        "N={n} seed={}: SDR {:.2} dB after {} iterations -> {}",
        settings.seed,
        report.sdr_db,
        solution.iterations_used,
        out_dir.display()
    );
    Ok(0)
}

/// Default output directory for a command.
pub fn default_out_dir(command: &str) -> PathBuf {
    PathBuf::from("out").join(command)
}
