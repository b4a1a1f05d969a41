//! Monte Carlo simulation of the controlled market.
//!
//! Time is advanced on a uniform mesh. Each of the eight fill channels fires
//! at most once per step, with probability `lambda * sim_dt`; the mid price
//! takes a Gaussian increment. Rates and quotes are read from the solved
//! slice at the end of each step, which is the slice the explicit scheme
//! used for that interval.

mod estimate;

pub use estimate::{
    certainty_equivalent, exchange_utility, martingale_check, mm_utility, CeEstimate, MartingaleReport, McEstimate,
};

use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use rand_xoshiro::Xoshiro256PlusPlus;
use rayon::prelude::*;

use crate::equilibrium::{delta_fixed_point, hamiltonian};
use crate::error::{Error, Result};
use crate::model::{clamp_quote, intensity, InventoryPair, ModelParams, QuoteMatrix, RateVector, Side};
use crate::pde::SolveResult;

/// Largest admissible `sim_dt * (sum of active intensities)`.
pub const MAX_STEP_MASS: f64 = 0.1;

const BLOCK: usize = 200;

/// Scales one maker's quotes away from the equilibrium (blocked sides stay at the bound).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuotePerturbation {
    pub maker: usize,
    pub factor: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub sim_dt: f64,
    pub paths: usize,
    pub seed: u64,
    pub q0: InventoryPair,
    /// Times at which running P&L, contract values and fees are recorded.
    pub checkpoints: Vec<f64>,
    /// Keep the full per-step trajectory in each record.
    pub trace: bool,
    pub perturbation: Option<QuotePerturbation>,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            sim_dt: 1e-4,
            paths: 10_000,
            seed: 7,
            q0: InventoryPair::default(),
            checkpoints: Vec::new(),
            trace: false,
            perturbation: None,
        }
    }
}

/// Running quantities at one recorded time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Checkpoint {
    pub t: f64,
    pub q: InventoryPair,
    pub pl: [f64; 2],
    pub y: [f64; 2],
    pub fees: [f64; 2],
}

/// One mesh point of a traced path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TracePoint {
    pub t: f64,
    pub price: f64,
    pub q: InventoryPair,
    pub pl: [f64; 2],
    pub y: [f64; 2],
}

/// One simulated trajectory.
///
/// Cash starts at `-q0 * S0`, so P&L `cash + Q S` starts at zero. `y[m]` is
/// the representation process of exchange `m`'s rates started from zero;
/// it is the actual contract payment only when exchange `m` contracts.
#[derive(Debug, Clone, PartialEq)]
pub struct PathRecord {
    pub seed: u64,
    pub index: usize,
    /// Fill counts `counts[side][maker][venue]`.
    pub counts: [[[u32; 2]; 2]; 2],
    pub price: f64,
    pub q: InventoryPair,
    pub cash: [f64; 2],
    pub pl: [f64; 2],
    pub y: [f64; 2],
    /// Fee income of each exchange: `c^m` per fill routed through venue `m`, either maker.
    pub fees: [f64; 2],
    pub checkpoints: Vec<Checkpoint>,
    pub trace: Option<Vec<TracePoint>>,
}

impl PathRecord {
    fn start(seed: u64, index: usize, p: &ModelParams, q0: InventoryPair, trace: bool) -> Self {
        let cash = [-(q0.0[0] as f64) * p.s0, -(q0.0[1] as f64) * p.s0];
        Self {
            seed,
            index,
            counts: [[[0; 2]; 2]; 2],
            price: p.s0,
            q: q0,
            cash,
            pl: [0.0; 2],
            y: [0.0; 2],
            fees: [0.0; 2],
            checkpoints: Vec::new(),
            trace: trace.then(Vec::new),
        }
    }

    fn checkpoint(&self, t: f64) -> Checkpoint {
        Checkpoint {
            t,
            q: self.q,
            pl: self.pl,
            y: self.y,
            fees: self.fees,
        }
    }

    fn trace_point(&self, t: f64) -> TracePoint {
        TracePoint {
            t,
            price: self.price,
            q: self.q,
            pl: self.pl,
            y: self.y,
        }
    }

    /// Fills of maker `i` on venue `j`, both sides.
    pub fn fills(&self, maker: usize, venue: usize) -> u32 {
        self.counts[0][maker][venue] + self.counts[1][maker][venue]
    }
}

/// Controls in force at one state over one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepEntry {
    pub quotes: QuoteMatrix,
    /// Gated intensities `lambda[side][maker][venue]`.
    pub lambda: [[[f64; 2]; 2]; 2],
    pub rates: [RateVector; 2],
    /// `H^m` at the equilibrium quotes (drift of the representation processes).
    pub ham: [f64; 2],
}

impl StepEntry {
    fn new(p: &ModelParams, quotes: QuoteMatrix, rates: [RateVector; 2], ham: [f64; 2], q: InventoryPair) -> Self {
        let mut lambda = [[[0.0; 2]; 2]; 2];
        for side in Side::ALL {
            for i in 0..2 {
                if !q.blocked(side, i, p.q_bar) {
                    for j in 0..2 {
                        lambda[side.index()][i][j] = intensity(p, j, quotes.get(side, i));
                    }
                }
            }
        }
        Self {
            quotes,
            lambda,
            rates,
            ham,
        }
    }

    fn mass(&self) -> f64 {
        self.lambda.iter().flatten().flatten().sum()
    }
}

/// Equilibrium controls at `(slice n, q)` of a solved regime, optionally perturbed.
pub fn step_entry(res: &SolveResult, n: usize, q: InventoryPair, perturbation: Option<QuotePerturbation>) -> Result<StepEntry> {
    let p = &res.params;
    let rates = res.rates(n, q)?;
    let eq = delta_fixed_point(p, &rates, q);
    let ham = [0, 1].map(|m| hamiltonian(p, m, &eq, &rates[m], q));
    let mut quotes = eq;
    if let Some(pert) = perturbation {
        for side in Side::ALL {
            if !q.blocked(side, pert.maker, p.q_bar) {
                quotes.set(side, pert.maker, clamp_quote(p, eq.get(side, pert.maker) * pert.factor));
            }
        }
    }
    Ok(StepEntry::new(p, quotes, rates, ham, q))
}

fn validate(p: &ModelParams, cfg: &SimConfig) -> Result<usize> {
    if cfg.paths == 0 {
        return Err(Error::InvalidParam {
            name: "paths",
            reason: "at least one path is required".into(),
        });
    }
    if !(cfg.sim_dt > 0.0) || cfg.sim_dt > p.horizon {
        return Err(Error::InvalidParam {
            name: "sim_dt",
            reason: format!("must lie in (0, T], got {}", cfg.sim_dt),
        });
    }
    if !cfg.q0.in_bounds(p.q_bar) {
        return Err(Error::InvalidParam {
            name: "q0",
            reason: format!("{:?} outside [-{1}, {1}]", cfg.q0.0, p.q_bar),
        });
    }
    Ok((p.horizon / cfg.sim_dt).round().max(1.0) as usize)
}

fn path_rng(seed: u64, index: usize) -> Xoshiro256PlusPlus {
    Xoshiro256PlusPlus::seed_from_u64(seed ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

struct Walker<'a> {
    p: &'a ModelParams,
    h: f64,
}

impl Walker<'_> {
    fn advance(&self, rec: &mut PathRecord, rng: &mut Xoshiro256PlusPlus, e: &StepEntry) -> Result<()> {
        let p = self.p;
        let q_start = rec.q;
        let s = rec.price;
        for side in Side::ALL {
            let best = e.quotes.best(side);
            for i in 0..2 {
                for j in 0..2 {
                    let u: f64 = rng.gen();
                    if u >= e.lambda[side.index()][i][j] * self.h || rec.q.blocked(side, i, p.q_bar) {
                        continue;
                    }
                    let d = e.quotes.get(side, i);
                    let capture = d - p.beta * (d - best);
                    if capture < best - 1e-12 {
                        return Err(Error::Estimate(format!("spread capture {capture} below best quote {best}")));
                    }
                    match side {
                        Side::Bid => rec.cash[i] -= s - capture,
                        Side::Ask => rec.cash[i] += s + capture,
                    }
                    rec.q = rec.q.after_fill(side, i);
                    if !rec.q.in_bounds(p.q_bar) {
                        return Err(Error::InventoryBreach {
                            maker: i,
                            q: rec.q.get(i),
                            q_bar: p.q_bar,
                        });
                    }
                    rec.counts[side.index()][i][j] += 1;
                    rec.fees[j] += p.c[j];
                    for m in 0..2 {
                        rec.y[m] += e.rates[m].get(side, i, j);
                    }
                }
            }
        }
        let ds = p.sigma * self.h.sqrt() * rng.sample::<f64, _>(StandardNormal);
        for m in 0..2 {
            let zs = e.rates[m].z_s;
            let x = zs + q_start.get(m) as f64;
            rec.y[m] += zs * ds + (p.gamma[m] * p.sigma * p.sigma / 2.0 * x * x - e.ham[m]) * self.h;
        }
        rec.price += ds;
        for i in 0..2 {
            rec.pl[i] = rec.cash[i] + rec.q.get(i) as f64 * rec.price;
        }
        Ok(())
    }
}

/// Source of the controls in force at `(step, q)`, prepared block by block.
trait Controls: Sync {
    fn prepare(&mut self, steps: std::ops::Range<usize>) -> Result<()>;
    fn entry(&self, step: usize, q: InventoryPair) -> StepEntry;
}

fn check_mass(mass: f64, h: f64) -> Result<()> {
    if mass * h > MAX_STEP_MASS {
        return Err(Error::InvalidParam {
            name: "sim_dt",
            reason: format!("sim_dt * total intensity = {:.3} exceeds {MAX_STEP_MASS}", mass * h),
        });
    }
    Ok(())
}

struct Solved<'a> {
    res: &'a SolveResult,
    perturbation: Option<QuotePerturbation>,
    h: f64,
    first: usize,
    table: Vec<Vec<StepEntry>>,
}

impl Controls for Solved<'_> {
    fn prepare(&mut self, steps: std::ops::Range<usize>) -> Result<()> {
        let (res, h, pert) = (self.res, self.h, self.perturbation);
        self.first = steps.start;
        self.table = steps
            .into_par_iter()
            .map(|n| {
                let slice = res.slice_index((n + 1) as f64 * h);
                res.lattice
                    .states()
                    .map(|q| step_entry(res, slice, q, pert))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<_>>()?;
        let worst = self.table.iter().flatten().map(StepEntry::mass).fold(0.0, f64::max);
        check_mass(worst, h)
    }

    fn entry(&self, step: usize, q: InventoryPair) -> StepEntry {
        self.table[step - self.first][self.res.lattice.index(q)]
    }
}

struct Fixed<'a> {
    p: &'a ModelParams,
    quotes: QuoteMatrix,
}

impl Controls for Fixed<'_> {
    fn prepare(&mut self, _: std::ops::Range<usize>) -> Result<()> {
        Ok(())
    }

    fn entry(&self, _: usize, q: InventoryPair) -> StepEntry {
        let mut quotes = self.quotes;
        for side in Side::ALL {
            for i in 0..2 {
                if q.blocked(side, i, self.p.q_bar) {
                    quotes.set(side, i, self.p.delta_inf);
                }
            }
        }
        StepEntry::new(self.p, quotes, [RateVector::ZERO; 2], [0.0; 2], q)
    }
}

fn run(p: &ModelParams, cfg: &SimConfig, steps: usize, controls: &mut dyn Controls) -> Result<Vec<PathRecord>> {
    let h = p.horizon / steps as f64;
    let walker = Walker { p, h };
    let mut marks: Vec<usize> = cfg
        .checkpoints
        .iter()
        .map(|t| ((t / h).round().max(0.0) as usize).min(steps))
        .collect();
    marks.sort_unstable();
    let mut states: Vec<(PathRecord, Xoshiro256PlusPlus)> = (0..cfg.paths)
        .map(|i| {
            let mut rec = PathRecord::start(cfg.seed, i, p, cfg.q0, cfg.trace);
            for _ in marks.iter().filter(|&&m| m == 0) {
                rec.checkpoints.push(rec.checkpoint(0.0));
            }
            let origin = rec.trace_point(0.0);
            if let Some(tr) = rec.trace.as_mut() {
                tr.push(origin);
            }
            (rec, path_rng(cfg.seed, i))
        })
        .collect();
    let mut start = 0;
    while start < steps {
        let end = (start + BLOCK).min(steps);
        controls.prepare(start..end)?;
        let controls: &dyn Controls = controls;
        states.par_iter_mut().try_for_each(|(rec, rng)| -> Result<()> {
            for n in start..end {
                walker.advance(rec, rng, &controls.entry(n, rec.q))?;
                let t = (n + 1) as f64 * h;
                for _ in marks.iter().filter(|&&m| m == n + 1) {
                    let cp = rec.checkpoint(t);
                    rec.checkpoints.push(cp);
                }
                let tp = rec.trace_point(t);
                if let Some(tr) = rec.trace.as_mut() {
                    tr.push(tp);
                }
            }
            Ok(())
        })?;
        start = end;
    }
    Ok(states.into_iter().map(|(rec, _)| rec).collect())
}

/// Simulates `cfg.paths` independent paths under a solved regime.
///
/// Path `i` draws from its own generator seeded by `(seed, i)`, so results do
/// not depend on how paths are scheduled across threads.
pub fn simulate(res: &SolveResult, cfg: &SimConfig) -> Result<Vec<PathRecord>> {
    let p = &res.params;
    let steps = validate(p, cfg)?;
    let mut controls = Solved {
        res,
        perturbation: cfg.perturbation,
        h: p.horizon / steps as f64,
        first: 0,
        table: Vec::new(),
    };
    run(p, cfg, steps, &mut controls)
}

/// One traced path.
pub fn simulate_path(res: &SolveResult, seed: u64, sim_dt: f64, q0: InventoryPair) -> Result<PathRecord> {
    let cfg = SimConfig {
        sim_dt,
        paths: 1,
        seed,
        q0,
        trace: true,
        ..SimConfig::default()
    };
    Ok(simulate(res, &cfg)?.remove(0))
}

/// Paths with constant quotes and no contracts; fills are then Poisson up to the inventory cap.
pub fn simulate_fixed_quotes(p: &ModelParams, quotes: QuoteMatrix, cfg: &SimConfig) -> Result<Vec<PathRecord>> {
    p.validate()?;
    let steps = validate(p, cfg)?;
    let mut controls = Fixed { p, quotes };
    check_mass(controls.entry(0, InventoryPair::default()).mass(), p.horizon / steps as f64)?;
    run(p, cfg, steps, &mut controls)
}
