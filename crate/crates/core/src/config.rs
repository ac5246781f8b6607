//! Strict TOML run configuration.
//!
//! Every key is optional and overrides the preset it is applied to. Unknown
//! keys are rejected. Physical quantities carry their unit in the key name.
//!
//! ```toml
//! [system]
//! block_length_symbols = 512
//! oversampling_samples_per_symbol = 8
//! constellation_order = 16
//! rrc_roll_off = 0.1
//! rrc_span_symbols = 0          # 0 = block-periodic pulse
//! symbol_rate_gbd = 200.0
//! wavelength_nm = 1550.0
//!
//! [stage]
//! dispersion_psnm_norm = 0.3    # or dispersion_ps_per_nm = 7.5
//! pm_bandwidth_fs = 0.55
//! include_trailing_dispersion = false
//!
//! [solver]
//! step_size = 0.25
//! step_decay = 0.5
//! step_floor = 0.001
//! max_iterations = 2000
//! stall_tolerance_db = 0.01
//! stall_window_iterations = 20
//! target_mode = "symbol_domain" # or "field"
//! init = "zeros"                # or "random"
//! init_amplitude_rad = 0.5
//! init_seed = 0
//!
//! [sweep]
//! grid = [0.0, 0.1, 0.2]        # unit of the swept axis
//! stage_counts = [1, 2, 3, 4]
//! seeds = [0, 1, 2]
//! averaging = "db"              # or "linear"
//! workers = 4
//!
//! [noise]
//! insertion_loss_db_per_stage = 2.0
//! iq_modulation_loss_db = 21.0
//! iq_modulation_depth_vpi = 0.3
//! quantum_efficiency = 1.0
//! dac_bits = 8                  # also charge quantisation on the laser axis
//!
//! [solve]
//! stage_count = 4
//! seed = 0
//! target = "qam"                # or "cw"
//! ```

use std::path::Path;

use serde::Deserialize;

use crate::sweep::{Averaging, SweepSpec, SystemConfig};
use crate::wavefront::{InitMode, SolverConfig, TargetMode};
use crate::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub system: Option<SystemSection>,
    pub stage: Option<StageSection>,
    pub solver: Option<SolverSection>,
    pub sweep: Option<SweepSection>,
    pub noise: Option<NoiseSection>,
    pub solve: Option<SolveSection>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub block_length_symbols: Option<usize>,
    pub oversampling_samples_per_symbol: Option<usize>,
    pub constellation_order: Option<usize>,
    pub rrc_roll_off: Option<f64>,
    pub rrc_span_symbols: Option<usize>,
    pub symbol_rate_gbd: Option<f64>,
    pub wavelength_nm: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageSection {
    pub dispersion_psnm_norm: Option<f64>,
    pub dispersion_ps_per_nm: Option<f64>,
    pub pm_bandwidth_fs: Option<f64>,
    pub include_trailing_dispersion: Option<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitKind {
    Zeros,
    Random,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub step_size: Option<f64>,
    pub step_decay: Option<f64>,
    pub step_floor: Option<f64>,
    pub max_iterations: Option<usize>,
    pub stall_tolerance_db: Option<f64>,
    pub stall_window_iterations: Option<usize>,
    pub target_mode: Option<TargetMode>,
    pub init: Option<InitKind>,
    pub init_amplitude_rad: Option<f64>,
    pub init_seed: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub grid: Option<Vec<f64>>,
    pub stage_counts: Option<Vec<usize>>,
    pub seeds: Option<Vec<u64>>,
    pub averaging: Option<Averaging>,
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    pub insertion_loss_db_per_stage: Option<f64>,
    pub iq_modulation_loss_db: Option<f64>,
    pub iq_modulation_depth_vpi: Option<f64>,
    pub quantum_efficiency: Option<f64>,
    pub dac_bits: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveTarget {
    /// RRC-shaped random QAM block.
    Qam,
    /// Constant carrier; reachable with zero drive.
    Cw,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveSection {
    pub stage_count: Option<usize>,
    pub seed: Option<u64>,
    pub target: Option<SolveTarget>,
}

fn set<T: Copy>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

// toml reports unknown fields as "unknown field `name`, expected ..."
fn key_from_message(message: &str) -> String {
    message
        .split('`')
        .nth(1)
        .map_or_else(|| "<document>".to_string(), str::to_string)
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config {
            key: key_from_message(e.message()),
            reason: e.message().trim().to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn apply_system(&self, sys: &mut SystemConfig) -> Result<()> {
        if let Some(s) = &self.system {
            set(&mut sys.block_length, s.block_length_symbols);
            set(&mut sys.oversampling, s.oversampling_samples_per_symbol);
            set(&mut sys.constellation_order, s.constellation_order);
            set(&mut sys.roll_off, s.rrc_roll_off);
            if let Some(span) = s.rrc_span_symbols {
                sys.rrc_span_symbols = (span > 0).then_some(span);
            }
            set(&mut sys.symbol_rate_gbd, s.symbol_rate_gbd);
            set(&mut sys.stages.wavelength_nm, s.wavelength_nm);
        }
        if let Some(st) = &self.stage {
            match (st.dispersion_psnm_norm, st.dispersion_ps_per_nm) {
                (Some(_), Some(_)) => {
                    return Err(Error::Config {
                        key: "dispersion_ps_per_nm".into(),
                        reason: "give either dispersion_psnm_norm or dispersion_ps_per_nm, not both"
                            .into(),
                    })
                }
                (Some(d), None) => sys.stages.dispersion_norm = d,
                // D_norm = D / T_s^2 with T_s in ps
                (None, Some(d)) => {
                    let period_ps = 1000.0 / sys.symbol_rate_gbd;
                    sys.stages.dispersion_norm = d / (period_ps * period_ps);
                }
                (None, None) => {}
            }
            set(&mut sys.stages.pm_bandwidth, st.pm_bandwidth_fs);
            set(
                &mut sys.stages.include_trailing_dispersion,
                st.include_trailing_dispersion,
            );
        }
        Ok(())
    }

    pub fn apply_solver(&self, solver: &mut SolverConfig) -> Result<()> {
        let Some(s) = &self.solver else {
            return Ok(());
        };
        set(&mut solver.step_size, s.step_size);
        set(&mut solver.step_decay, s.step_decay);
        set(&mut solver.step_floor, s.step_floor);
        set(&mut solver.max_iterations, s.max_iterations);
        set(&mut solver.stall_tolerance_db, s.stall_tolerance_db);
        set(&mut solver.stall_window, s.stall_window_iterations);
        set(&mut solver.target_mode, s.target_mode);
        let random = match s.init {
            Some(InitKind::Random) => true,
            Some(InitKind::Zeros) => false,
            None => matches!(solver.init, InitMode::SeededRandom { .. }),
        };
        if random {
            let (mut amplitude, mut seed) = match solver.init {
                InitMode::SeededRandom { amplitude, seed } => (amplitude, seed),
                InitMode::Zeros => (0.5, 0),
            };
            set(&mut amplitude, s.init_amplitude_rad);
            set(&mut seed, s.init_seed);
            solver.init = InitMode::SeededRandom { amplitude, seed };
        } else {
            if s.init_amplitude_rad.is_some() || s.init_seed.is_some() {
                return Err(Error::Config {
                    key: "init".into(),
                    reason: "init_amplitude_rad and init_seed need init = \"random\"".into(),
                });
            }
            solver.init = InitMode::Zeros;
        }
        Ok(())
    }

    /// Applies every section that bears on a sweep.
    pub fn apply_sweep(&self, spec: &mut SweepSpec) -> Result<()> {
        self.apply_system(&mut spec.base)?;
        self.apply_solver(&mut spec.solver)?;
        if let Some(s) = &self.sweep {
            if let Some(g) = &s.grid {
                spec.grid = g.clone();
            }
            if let Some(n) = &s.stage_counts {
                spec.stage_counts = n.clone();
            }
            if let Some(seeds) = &s.seeds {
                spec.seeds = seeds.clone();
            }
            set(&mut spec.averaging, s.averaging);
            if s.workers.is_some() {
                spec.workers = s.workers;
            }
        }
        if let Some(n) = &self.noise {
            set(&mut spec.noise.insertion_loss_db_per_stage, n.insertion_loss_db_per_stage);
            set(&mut spec.noise.iq_modulation_loss_db, n.iq_modulation_loss_db);
            set(&mut spec.noise.quantum_efficiency, n.quantum_efficiency);
            if n.dac_bits.is_some() {
                spec.noise.dac_bits = n.dac_bits;
            }
        }
        Ok(())
    }

    pub fn iq_modulation_depth(&self) -> Option<f64> {
        self.noise.as_ref().and_then(|n| n.iq_modulation_depth_vpi)
    }
}
