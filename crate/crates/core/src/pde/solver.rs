use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::equilibrium::{delta_fixed_point, hamiltonian};
use crate::error::{Error, Result};
use crate::model::{intensity, InventoryPair, ModelParams, QuoteMatrix, RateVector, Side};
use crate::pde::contracts::{
    g_price, g_side, own_candidates, zeta_check_cross, zeta_check_own, zeta_hat, zeta_price, SideRates,
};
use crate::pde::grid::{Lattice, ValueGrid};

/// Which exchanges offer an optimal incentive contract.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Regime {
    /// Neither exchange contracts; both makers act on their reservation problem.
    None,
    /// Exchange 0 contracts, exchange 1 stays passive.
    One,
    /// Both exchanges contract.
    Both,
}

impl Regime {
    pub const ALL: [Regime; 3] = [Regime::None, Regime::One, Regime::Both];

    pub fn name(self) -> &'static str {
        match self {
            Regime::None => "none",
            Regime::One => "one",
            Regime::Both => "both",
        }
    }

    /// Whether exchange `m` pays its maker under this regime.
    pub fn contracts(self, m: usize) -> bool {
        match self {
            Regime::None => false,
            Regime::One => m == 0,
            Regime::Both => true,
        }
    }

    /// Column names of the two unknowns in CSV output.
    pub fn value_labels(self) -> [&'static str; 2] {
        match self {
            Regime::None => ["w0", "w1"],
            Regime::One => ["vhat0", "vhat1"],
            Regime::Both => ["v0", "v1"],
        }
    }

    /// Terminal values of the two unknowns.
    fn terminal(self) -> [f64; 2] {
        match self {
            Regime::None => [0.0, 0.0],
            Regime::One => [-1.0, 0.0],
            Regime::Both => [-1.0, -1.0],
        }
    }

    /// Whether unknown `m` is an exchange utility (strictly negative) rather than a certainty equivalent.
    fn is_exchange_grid(self, m: usize) -> bool {
        self.contracts(m)
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" | "0" => Ok(Regime::None),
            "one" | "1" => Ok(Regime::One),
            "both" | "2" => Ok(Regime::Both),
            other => Err(Error::InvalidParam {
                name: "regime",
                reason: format!("unknown regime `{other}` (expected none, one or both)"),
            }),
        }
    }
}

/// Time-stepping settings.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveConfig {
    pub dt: f64,
    /// Times at which grids are exported; all slices are kept regardless.
    pub snapshots: Vec<f64>,
    /// How many times `dt` may be halved after an unstable or non-finite step.
    pub max_halvings: u32,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            dt: 1e-4,
            snapshots: vec![0.0],
            max_halvings: 4,
        }
    }
}

impl SolveConfig {
    pub fn with_dt(dt: f64) -> Self {
        Self {
            dt,
            ..Self::default()
        }
    }
}

/// Solution of one regime: both unknowns at every time slice `t_n = n dt`.
#[derive(Debug, Clone)]
pub struct SolveResult {
    pub regime: Regime,
    pub params: ModelParams,
    pub dt: f64,
    pub lattice: Lattice,
    pub snapshots: Vec<f64>,
    /// Number of times the requested `dt` was halved.
    pub halvings: u32,
    slices: Vec<[ValueGrid; 2]>,
}

impl SolveResult {
    pub fn steps(&self) -> usize {
        self.slices.len() - 1
    }

    /// Index of the slice nearest to `t`.
    pub fn slice_index(&self, t: f64) -> usize {
        let n = (t / self.dt).round();
        (n.max(0.0) as usize).min(self.steps())
    }

    pub fn slice(&self, n: usize) -> &[ValueGrid; 2] {
        &self.slices[n]
    }

    pub fn grids_at(&self, t: f64) -> &[ValueGrid; 2] {
        &self.slices[self.slice_index(t)]
    }

    /// Unknown `m` at time `t` (nearest slice) and state `q`.
    pub fn value(&self, m: usize, t: f64, q: InventoryPair) -> f64 {
        self.grids_at(t)[m].at(q)
    }

    /// Both exchanges' payment-rate vectors at slice `n` and state `q`.
    pub fn rates(&self, n: usize, q: InventoryPair) -> Result<[RateVector; 2]> {
        regime_rates(&self.params, self.regime, &self.slices[n], q)
    }

    /// Equilibrium quotes at every state, from the slice nearest `t`.
    pub fn quote_surface(&self, t: f64) -> Result<Vec<(InventoryPair, QuoteMatrix)>> {
        let n = self.slice_index(t);
        self.lattice
            .states()
            .map(|q| Ok((q, delta_fixed_point(&self.params, &self.rates(n, q)?, q))))
            .collect()
    }

    /// `-exp(-gamma_i w_i(0, q0))`; only meaningful for the no-contract regime.
    pub fn reservation_utility(&self, maker: usize, q0: InventoryPair) -> f64 {
        reservation_utility(&self.params, maker, &self.slices[0][maker], q0)
    }
}

/// Reservation utility of `maker` from its certainty-equivalent grid at time 0.
pub fn reservation_utility(p: &ModelParams, maker: usize, w0: &ValueGrid, q0: InventoryPair) -> f64 {
    -(-p.gamma[maker] * w0.at(q0)).exp()
}

/// Payment rates of both exchanges at state `q` for one time slice.
///
/// For a non-contracting exchange the returned vector holds the null-contract
/// representation: its maker's value-function jumps, with no price exposure.
pub fn regime_rates(p: &ModelParams, regime: Regime, grids: &[ValueGrid; 2], q: InventoryPair) -> Result<[RateVector; 2]> {
    let mut rates = [RateVector::ZERO; 2];
    for m in 0..2 {
        if !regime.contracts(m) {
            for side in Side::ALL {
                for i in 0..2 {
                    rates[m].set_both(side, i, zeta_hat(&grids[m], q, side, i));
                }
            }
        }
    }
    // Leader candidates of every contracting exchange, used in the case test.
    let mut leader = [[0.0; 2]; 2];
    for m in (0..2).filter(|&m| regime.contracts(m)) {
        for side in Side::ALL {
            if let Some(i) = grids[m].lattice.neighbour(q, side, m) {
                leader[m][side.index()] =
                    own_candidates(p, m, grids[m].at(q), grids[m].values[i], grids[m].t, q)?.leader;
            }
        }
    }
    for m in (0..2).filter(|&m| regime.contracts(m)) {
        let o = 1 - m;
        for side in Side::ALL {
            let competitor = if regime.contracts(o) {
                leader[o][side.index()]
            } else {
                rates[o].get(side, o, 0)
            };
            let own = zeta_check_own(p, m, side, &grids[m], q, competitor)?;
            rates[m].set_both(side, m, own);
            for j in 0..2 {
                rates[m].set(side, o, j, zeta_check_cross(p, m, side, j, &grids[m], q)?);
            }
        }
        rates[m].z_s = zeta_price(p, m, q.get(m));
    }
    Ok(rates)
}

/// Sum of all active fill intensities at the quotes.
pub fn total_intensity(p: &ModelParams, quotes: &QuoteMatrix, q: InventoryPair) -> f64 {
    let mut total = 0.0;
    for side in Side::ALL {
        for i in 0..2 {
            if !q.blocked(side, i, p.q_bar) {
                let d = quotes.get(side, i);
                total += intensity(p, 0, d) + intensity(p, 1, d);
            }
        }
    }
    total
}

fn exchange_source(p: &ModelParams, m: usize, rates: &[RateVector; 2], grid: &ValueGrid, q: InventoryPair) -> f64 {
    let o = 1 - m;
    let y = grid.at(q);
    let mut src = y * g_price(p, m, rates[m].z_s, q.get(m));
    for side in Side::ALL {
        let r = SideRates {
            own: rates[m].get(side, m, 0),
            cross: rates[m].pair(side, o),
            competitor_own: rates[o].get(side, o, 0),
        };
        src += g_side(p, m, side, r, q, y, grid.after_fill(q, side, m), grid.after_fill(q, side, o));
    }
    src
}

fn maker_source(p: &ModelParams, m: usize, quotes: &QuoteMatrix, rates: &[RateVector; 2], q: InventoryPair) -> f64 {
    let qm = q.get(m) as f64;
    hamiltonian(p, m, quotes, &rates[m], q) - p.gamma[m] * p.sigma * p.sigma / 2.0 * qm * qm
}

/// One backward step: returns the slice at `t - dt` and the stability ratio.
fn step(p: &ModelParams, regime: Regime, cur: &[ValueGrid; 2], dt: f64) -> Result<([ValueGrid; 2], f64)> {
    let lattice = cur[0].lattice;
    let t_new = cur[0].t - dt;
    let out: Vec<([f64; 2], f64)> = (0..lattice.len())
        .into_par_iter()
        .map(|idx| {
            let q = lattice.state(idx);
            let rates = regime_rates(p, regime, cur, q)?;
            let quotes = delta_fixed_point(p, &rates, q);
            let mut next = [0.0; 2];
            for m in 0..2 {
                let y = cur[m].values[idx];
                next[m] = if regime.is_exchange_grid(m) {
                    y + dt * exchange_source(p, m, &rates, &cur[m], q)
                } else {
                    y + dt * maker_source(p, m, &quotes, &rates, q)
                };
                let name = regime.value_labels()[m];
                if !next[m].is_finite() {
                    return Err(Error::BlowUp {
                        grid: name,
                        t: t_new,
                        q0: q.0[0],
                        q1: q.0[1],
                    });
                }
                if regime.is_exchange_grid(m) && !(next[m] < 0.0) {
                    return Err(Error::SignBreach {
                        grid: name,
                        value: next[m],
                        t: t_new,
                        q0: q.0[0],
                        q1: q.0[1],
                    });
                }
            }
            Ok((next, dt * total_intensity(p, &quotes, q)))
        })
        .collect::<Result<_>>()?;
    let ratio = out.iter().map(|o| o.1).fold(0.0, f64::max);
    if ratio >= 0.5 {
        return Err(Error::Unstable { dt, ratio });
    }
    let grid = |m: usize| ValueGrid {
        t: t_new,
        lattice,
        values: out.iter().map(|o| o.0[m]).collect(),
    };
    Ok(([grid(0), grid(1)], ratio))
}

fn solve_fixed(p: &ModelParams, regime: Regime, dt: f64) -> Result<(f64, Vec<[ValueGrid; 2]>)> {
    let steps = (p.horizon / dt).ceil().max(1.0) as usize;
    let dt = p.horizon / steps as f64;
    let lattice = Lattice::new(p.q_bar);
    let term = regime.terminal();
    let mut slices = Vec::with_capacity(steps + 1);
    slices.push([
        ValueGrid::constant(p.horizon, lattice, term[0]),
        ValueGrid::constant(p.horizon, lattice, term[1]),
    ]);
    for _ in 0..steps {
        let (next, _) = step(p, regime, slices.last().expect("non-empty"), dt)?;
        slices.push(next);
    }
    slices.reverse();
    // Pin exact slice times against accumulated rounding.
    for (n, s) in slices.iter_mut().enumerate() {
        s[0].t = n as f64 * dt;
        s[1].t = n as f64 * dt;
    }
    Ok((dt, slices))
}

/// Solves a regime by explicit backward Euler, halving `dt` on instability or blow-up.
pub fn solve(p: &ModelParams, regime: Regime, cfg: &SolveConfig) -> Result<SolveResult> {
    p.validate()?;
    if !(cfg.dt > 0.0) || !cfg.dt.is_finite() {
        return Err(Error::InvalidParam {
            name: "dt",
            reason: format!("must be positive and finite, got {}", cfg.dt),
        });
    }
    let mut dt = cfg.dt;
    let mut halvings = 0;
    loop {
        match solve_fixed(p, regime, dt) {
            Ok((dt, slices)) => {
                let mut snapshots: Vec<f64> = cfg.snapshots.iter().map(|t| t.clamp(0.0, p.horizon)).collect();
                snapshots.sort_by(f64::total_cmp);
                snapshots.dedup();
                return Ok(SolveResult {
                    regime,
                    params: *p,
                    dt,
                    lattice: Lattice::new(p.q_bar),
                    snapshots,
                    halvings,
                    slices,
                });
            }
            Err(Error::Unstable { .. } | Error::BlowUp { .. }) if halvings < cfg.max_halvings => {
                dt /= 2.0;
                halvings += 1;
            }
            Err(e) => return Err(e),
        }
    }
}

pub fn solve_no_incentive(p: &ModelParams, cfg: &SolveConfig) -> Result<SolveResult> {
    solve(p, Regime::None, cfg)
}

pub fn solve_one_incentive(p: &ModelParams, cfg: &SolveConfig) -> Result<SolveResult> {
    solve(p, Regime::One, cfg)
}

pub fn solve_two_incentive(p: &ModelParams, cfg: &SolveConfig) -> Result<SolveResult> {
    solve(p, Regime::Both, cfg)
}

/// Utility of exchange `m` from fees alone, `E[-exp(-eta_m fees)]`, when the
/// makers follow the regime's equilibrium quotes and exchange `m` pays nothing.
/// Returned at time 0.
pub fn passive_exchange_value(res: &SolveResult, m: usize) -> Result<ValueGrid> {
    let p = &res.params;
    let lattice = res.lattice;
    let e = p.eta[m];
    let fee_factor = [0, 1].map(|j| if j == m { (-e * p.c[m]).exp() } else { 1.0 });
    let mut u = ValueGrid::constant(p.horizon, lattice, -1.0);
    for n in (1..=res.steps()).rev() {
        let grids = res.slice(n);
        let values: Vec<f64> = (0..lattice.len())
            .into_par_iter()
            .map(|idx| {
                let q = lattice.state(idx);
                let quotes = delta_fixed_point(p, &regime_rates(p, res.regime, grids, q)?, q);
                let y = u.values[idx];
                let mut src = 0.0;
                for side in Side::ALL {
                    for i in 0..2 {
                        if q.blocked(side, i, p.q_bar) {
                            continue;
                        }
                        let d = quotes.get(side, i);
                        let y_next = u.after_fill(q, side, i);
                        for (j, f) in fee_factor.iter().enumerate() {
                            src += intensity(p, j, d) * (y_next * f - y);
                        }
                    }
                }
                Ok(y + res.dt * src)
            })
            .collect::<Result<_>>()?;
        u = ValueGrid {
            t: (n - 1) as f64 * res.dt,
            lattice,
            values,
        };
    }
    Ok(u)
}

/// Time-0 utility grid of exchange `m` under the regime, with the initial
/// contract value factored out: the contract solution for a contracting
/// exchange, the fee-only value for a passive one.
pub fn exchange_value(res: &SolveResult, m: usize) -> Result<ValueGrid> {
    if res.regime.contracts(m) {
        Ok(res.slice(0)[m].clone())
    } else {
        passive_exchange_value(res, m)
    }
}

/// Writes the snapshot slices with values, payment rates and quotes.
///
/// Columns: `t,q0,q1,<value0>,<value1>`, then `z{l}_{b|a}_{i}_{j}` for
/// exchange `l`, side, maker and venue, then `z{l}_s`, then `d_{b|a}_{i}`.
pub fn write_csv<W: std::io::Write>(res: &SolveResult, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let labels = res.regime.value_labels();
    let mut header: Vec<String> = vec!["t".into(), "q0".into(), "q1".into(), labels[0].into(), labels[1].into()];
    for l in 0..2 {
        for side in Side::ALL {
            for i in 0..2 {
                for j in 0..2 {
                    header.push(format!("z{l}_{}_{i}_{j}", side_tag(side)));
                }
            }
        }
        header.push(format!("z{l}_s"));
    }
    for side in Side::ALL {
        for i in 0..2 {
            header.push(format!("d_{}_{i}", side_tag(side)));
        }
    }
    w.write_record(&header)?;
    for &t in &res.snapshots {
        let n = res.slice_index(t);
        let grids = res.slice(n);
        for q in res.lattice.states() {
            let rates = res.rates(n, q)?;
            let quotes = delta_fixed_point(&res.params, &rates, q);
            let mut row = vec![
                fmt_num(grids[0].t),
                q.0[0].to_string(),
                q.0[1].to_string(),
                fmt_num(grids[0].at(q)),
                fmt_num(grids[1].at(q)),
            ];
            for r in &rates {
                for side in Side::ALL {
                    for i in 0..2 {
                        for j in 0..2 {
                            row.push(fmt_num(r.get(side, i, j)));
                        }
                    }
                }
                row.push(fmt_num(r.z_s));
            }
            for side in Side::ALL {
                for i in 0..2 {
                    row.push(fmt_num(quotes.get(side, i)));
                }
            }
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn side_tag(side: Side) -> &'static str {
    match side {
        Side::Bid => "b",
        Side::Ask => "a",
    }
}

fn fmt_num(x: f64) -> String {
    format!("{x:.12e}")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ModelParams {
        let mut p = ModelParams::baseline();
        p.q_bar = 2;
        p.horizon = 0.05;
        p
    }

    #[test]
    fn terminal_slices() {
        let p = small();
        for (regime, term) in [(Regime::None, [0.0, 0.0]), (Regime::One, [-1.0, 0.0]), (Regime::Both, [-1.0, -1.0])] {
            let r = solve(&p, regime, &SolveConfig::with_dt(1e-3)).unwrap();
            let last = r.slice(r.steps());
            assert_eq!(r.steps(), 50);
            assert!(last[0].values.iter().all(|&v| v == term[0]));
            assert!(last[1].values.iter().all(|&v| v == term[1]));
        }
    }

    #[test]
    fn hand_euler_step_no_incentive() {
        // With zero grids the rates vanish, so one step adds dt * (H(0) - gamma sigma^2 q^2 / 2).
        let p = small();
        let dt = 1e-3;
        let lattice = Lattice::new(p.q_bar);
        let zero = [ValueGrid::constant(0.05, lattice, 0.0), ValueGrid::constant(0.05, lattice, 0.0)];
        let (next, _) = step(&p, Regime::None, &zero, dt).unwrap();
        let f = (p.sigma * 0.01 / p.kappa).ln_1p() / 0.01;
        let lam = intensity(&p, 0, f) + intensity(&p, 1, f);
        let unit = -(-0.01 * f * (1.0 - p.beta * 0.0)).exp_m1() / 0.01;
        for q in lattice.states() {
            for m in 0..2 {
                let active = Side::ALL.iter().filter(|&&s| !q.blocked(s, m, p.q_bar)).count() as f64;
                let qm = q.get(m) as f64;
                let expected = dt * (active * lam * unit - 0.01 * 1.44 / 2.0 * qm * qm);
                assert!((next[m].at(q) - expected).abs() < 1e-15, "{q:?} {m}");
            }
        }
        // rates after one step are dt-scaled source differences
        let q = InventoryPair::new(0, 0);
        let z = zeta_hat(&next[0], q, Side::Bid, 0);
        let expected = -dt * 0.01 * 1.44 / 2.0;
        assert!((z - expected).abs() < 1e-15);
    }

    #[test]
    fn instability_is_detected_and_halved() {
        let p = small();
        let err = solve_fixed(&p, Regime::None, 0.01).unwrap_err();
        assert!(matches!(err, Error::Unstable { .. }));
        let r = solve(&p, Regime::None, &SolveConfig::with_dt(0.01)).unwrap();
        assert!(r.halvings >= 1);
        assert!(r.dt <= 0.005 + 1e-15);
        let mut cfg = SolveConfig::with_dt(0.01);
        cfg.max_halvings = 0;
        assert!(solve(&p, Regime::None, &cfg).is_err());
    }

    #[test]
    fn invalid_params_rejected() {
        let mut p = small();
        p.beta = 1.0;
        assert!(solve(&p, Regime::None, &SolveConfig::default()).is_err());
        let p = small();
        assert!(solve(&p, Regime::None, &SolveConfig::with_dt(-1.0)).is_err());
    }

    #[test]
    fn regime_parse() {
        assert_eq!("Both".parse::<Regime>().unwrap(), Regime::Both);
        assert!("two".parse::<Regime>().is_err());
    }

    #[test]
    fn quote_surface_at_horizon_is_fundamental() {
        let p = small();
        let r = solve(&p, Regime::None, &SolveConfig::with_dt(1e-3)).unwrap();
        let f = (p.sigma * 0.01 / p.kappa).ln_1p() / 0.01;
        for (q, quotes) in r.quote_surface(p.horizon).unwrap() {
            for side in Side::ALL {
                for i in 0..2 {
                    let d = quotes.get(side, i);
                    if q.blocked(side, i, p.q_bar) {
                        assert_eq!(d, p.delta_inf);
                    } else {
                        assert!((d - f).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn csv_has_fixed_header() {
        let p = small();
        let mut cfg = SolveConfig::with_dt(1e-3);
        cfg.snapshots = vec![0.0, 0.05];
        let r = solve(&p, Regime::One, &cfg).unwrap();
        let mut buf = Vec::new();
        write_csv(&r, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        let header = lines.next().unwrap();
        assert!(header.starts_with("t,q0,q1,vhat0,vhat1,z0_b_0_0,"));
        assert!(header.ends_with("z1_s,d_b_0,d_b_1,d_a_0,d_a_1"));
        assert_eq!(header.split(',').count(), 5 + 18 + 4);
        assert_eq!(lines.count(), 2 * 25);
    }
}
