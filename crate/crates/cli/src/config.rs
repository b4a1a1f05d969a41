//! Run configuration: a flat `key = value` file (TOML syntax), overridden by flags.
//!
//! Every key is optional; missing keys take the baseline defaults.
//!
//! | key | meaning | default |
//! |-----|---------|---------|
//! | `sigma`, `kappa` | price volatility, intensity decay | 1.2, 8 |
//! | `a0`, `a1` | baseline intensities per venue | 100, 100 |
//! | `c0`, `c1` | fees per venue | 1e-5, 1e-5 |
//! | `gamma0`, `gamma1` | maker risk aversions | 0.01, 0.01 |
//! | `eta0`, `eta1` | exchange risk aversions | 0.1, 0.1 |
//! | `beta` | follower fill share | 0.6 |
//! | `q_bar` | inventory cap | 5 |
//! | `delta_inf` | quote bound | 10 |
//! | `horizon` | horizon in days | 1 |
//! | `s0` | initial mid price | 100 |
//! | `regime` | `none`, `one` or `both` | `one` |
//! | `dt`, `sim_dt` | solver and simulation steps | 1e-4, 1e-4 |
//! | `paths`, `seed` | Monte Carlo paths and seed | 10000, 7 |
//! | `q0`, `q1` | initial inventories of the simulation | 0, 0 |
//! | `gamma_sweep` | risk-aversion grid of the sweep figures | 0.002 ... 0.1 |
//! | `out` | output directory | `out` |

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Deserialize;
use sharedbook::figures::GAMMA_SWEEP;
use sharedbook::{InventoryPair, ModelParams, Regime};

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub sigma: Option<f64>,
    pub kappa: Option<f64>,
    pub a0: Option<f64>,
    pub a1: Option<f64>,
    pub c0: Option<f64>,
    pub c1: Option<f64>,
    pub gamma0: Option<f64>,
    pub gamma1: Option<f64>,
    pub eta0: Option<f64>,
    pub eta1: Option<f64>,
    pub beta: Option<f64>,
    pub q_bar: Option<i32>,
    pub delta_inf: Option<f64>,
    pub horizon: Option<f64>,
    pub s0: Option<f64>,
    pub regime: Option<String>,
    pub dt: Option<f64>,
    pub sim_dt: Option<f64>,
    pub paths: Option<usize>,
    pub seed: Option<u64>,
    pub q0: Option<i32>,
    pub q1: Option<i32>,
    pub gamma_sweep: Option<Vec<f64>>,
    pub out: Option<PathBuf>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}

/// Fully resolved settings.
#[derive(Debug, Clone)]
pub struct Settings {
    pub params: ModelParams,
    pub regime: Regime,
    pub dt: f64,
    pub sim_dt: f64,
    pub paths: usize,
    pub seed: u64,
    pub q0: InventoryPair,
    pub gamma_sweep: Vec<f64>,
    pub out: PathBuf,
}

impl Settings {
    pub fn resolve(file: ConfigFile) -> Result<Self> {
        let mut p = ModelParams::baseline();
        let set = |slot: &mut f64, v: Option<f64>| {
            if let Some(v) = v {
                *slot = v;
            }
        };
        set(&mut p.sigma, file.sigma);
        set(&mut p.kappa, file.kappa);
        set(&mut p.a[0], file.a0);
        set(&mut p.a[1], file.a1);
        set(&mut p.c[0], file.c0);
        set(&mut p.c[1], file.c1);
        set(&mut p.gamma[0], file.gamma0);
        set(&mut p.gamma[1], file.gamma1);
        set(&mut p.eta[0], file.eta0);
        set(&mut p.eta[1], file.eta1);
        set(&mut p.beta, file.beta);
        set(&mut p.delta_inf, file.delta_inf);
        set(&mut p.horizon, file.horizon);
        set(&mut p.s0, file.s0);
        if let Some(q) = file.q_bar {
            p.q_bar = q;
        }
        p.validate()?;
        let regime = match file.regime {
            Some(r) => r.parse()?,
            None => Regime::One,
        };
        let q0 = InventoryPair::new(file.q0.unwrap_or(0), file.q1.unwrap_or(0));
        anyhow::ensure!(
            q0.in_bounds(p.q_bar),
            "initial inventory ({}, {}) is outside the cap {}",
            q0.get(0),
            q0.get(1),
            p.q_bar
        );
        Ok(Self {
            params: p,
            regime,
            dt: file.dt.unwrap_or(1e-4),
            sim_dt: file.sim_dt.unwrap_or(1e-4),
            paths: file.paths.unwrap_or(10_000),
            seed: file.seed.unwrap_or(7),
            q0,
            gamma_sweep: file.gamma_sweep.unwrap_or_else(|| GAMMA_SWEEP.to_vec()),
            out: file.out.unwrap_or_else(|| PathBuf::from("out")),
        })
    }
}
