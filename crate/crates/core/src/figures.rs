//! Data behind the value, quote and sweep figures.
//!
//! Every figure is a set of labelled `(x, y)` series plus the parameters that
//! produced it. Reported exchange values include the reservation transfer:
//! a contracting exchange's solution is scaled by `exp(eta * w(0, q))`, where
//! `w` is its maker's no-contract certainty equivalent, and a passive
//! exchange is valued on fee income alone.

use rayon::prelude::*;

use crate::equilibrium::delta_fixed_point;
use crate::error::{Error, Result};
use crate::model::{InventoryPair, ModelParams, QuoteMatrix, Side};
use crate::pde::{passive_exchange_value, solve, Regime, SolveConfig, SolveResult, ValueGrid};

/// All three regimes solved for one parameter set.
#[derive(Debug, Clone)]
pub struct RegimeSet {
    pub none: SolveResult,
    pub one: SolveResult,
    pub both: SolveResult,
}

impl RegimeSet {
    pub fn solve(p: &ModelParams, cfg: &SolveConfig) -> Result<Self> {
        Ok(Self {
            none: solve(p, Regime::None, cfg)?,
            one: solve(p, Regime::One, cfg)?,
            both: solve(p, Regime::Both, cfg)?,
        })
    }

    pub fn get(&self, regime: Regime) -> &SolveResult {
        match regime {
            Regime::None => &self.none,
            Regime::One => &self.one,
            Regime::Both => &self.both,
        }
    }

    pub fn params(&self) -> &ModelParams {
        &self.none.params
    }

    /// Time-0 utility of exchange `m` under `regime`, reservation transfer included.
    pub fn exchange_value(&self, regime: Regime, m: usize) -> Result<ValueGrid> {
        let res = self.get(regime);
        if !res.regime.contracts(m) {
            return passive_exchange_value(res, m);
        }
        let eta = res.params.eta[m];
        let w = &self.none.slice(0)[m];
        let mut v = res.slice(0)[m].clone();
        for (x, r) in v.values.iter_mut().zip(&w.values) {
            *x *= (eta * r).exp();
        }
        Ok(v)
    }

    /// Equilibrium quotes at time 0 and state `q`.
    pub fn quotes(&self, regime: Regime, q: InventoryPair) -> Result<QuoteMatrix> {
        let res = self.get(regime);
        Ok(delta_fixed_point(&res.params, &res.rates(0, q)?, q))
    }
}

/// Utility levels or their certainty equivalents `-ln(-u)/eta`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ValueScale {
    #[default]
    Utility,
    CertaintyEquivalent,
}

impl ValueScale {
    fn apply(self, u: f64, eta: f64) -> f64 {
        match self {
            ValueScale::Utility => u,
            ValueScale::CertaintyEquivalent => -(-u).ln() / eta,
        }
    }

    fn label(self) -> &'static str {
        match self {
            ValueScale::Utility => "utility",
            ValueScale::CertaintyEquivalent => "certainty equivalent ($)",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub regime: Regime,
    /// `exchange0`, `maker1`, `sum`, ...
    pub agent: String,
    pub points: Vec<(f64, f64)>,
}

impl Series {
    pub fn name(&self) -> String {
        format!("{}/{}", self.regime, self.agent)
    }

    pub fn y_at(&self, x: f64) -> Option<f64> {
        self.points.iter().find(|pt| (pt.0 - x).abs() < 1e-12).map(|pt| pt.1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Figure {
    pub id: String,
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub params: ModelParams,
    pub series: Vec<Series>,
    /// Sweep points that failed to solve, with the reason.
    pub failures: Vec<String>,
}

impl Figure {
    pub fn series(&self, regime: Regime, agent: &str) -> Option<&Series> {
        self.series.iter().find(|s| s.regime == regime && s.agent == agent)
    }

    /// Long-format CSV: one row per point, base parameters repeated on every row.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "figure", "series", "regime", "agent", "x_name", "x", "y", "sigma", "kappa", "a0", "a1", "c0", "c1",
            "gamma0", "gamma1", "eta0", "eta1", "beta", "q_bar", "delta_inf", "horizon",
        ])?;
        let p = &self.params;
        let fixed: Vec<String> = [
            p.sigma, p.kappa, p.a[0], p.a[1], p.c[0], p.c[1], p.gamma[0], p.gamma[1], p.eta[0], p.eta[1], p.beta,
        ]
        .iter()
        .map(|v| v.to_string())
        .chain([p.q_bar.to_string(), p.delta_inf.to_string(), p.horizon.to_string()])
        .collect();
        for s in &self.series {
            for &(x, y) in &s.points {
                let mut row = vec![
                    self.id.clone(),
                    s.name(),
                    s.regime.to_string(),
                    s.agent.clone(),
                    self.x_label.clone(),
                    x.to_string(),
                    format!("{y:.12e}"),
                ];
                row.extend(fixed.iter().cloned());
                w.write_record(&row)?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

fn figure(id: &str, title: &str, x_label: &str, y_label: &str, params: ModelParams) -> Figure {
    Figure {
        id: id.into(),
        title: title.into(),
        x_label: x_label.into(),
        y_label: y_label.into(),
        params,
        series: Vec::new(),
        failures: Vec::new(),
    }
}

/// Exchange values against inventory: own inventory of exchange 0 (a), of
/// exchange 1 (b), and the sum of both values against `q0` (c).
pub fn value_profiles(set: &RegimeSet, scale: ValueScale) -> Result<[Figure; 3]> {
    let p = *set.params();
    let qb = p.q_bar;
    let ylab = scale.label();
    let mut a = figure("fig2a", "Exchange 0 value against q0 (q1 = 0)", "q0", ylab, p);
    let mut b = figure("fig2b", "Exchange 1 value against q1 (q0 = 0)", "q1", ylab, p);
    let mut c = figure("fig2c", "Sum of exchange values against q0 (q1 = 0)", "q0", ylab, p);
    for regime in Regime::ALL {
        let v = [set.exchange_value(regime, 0)?, set.exchange_value(regime, 1)?];
        let along = |m: usize| -> Vec<(f64, f64)> {
            (-qb..=qb)
                .map(|x| {
                    let q = if m == 0 { InventoryPair::new(x, 0) } else { InventoryPair::new(0, x) };
                    (x as f64, scale.apply(v[m].at(q), p.eta[m]))
                })
                .collect()
        };
        a.series.push(Series {
            regime,
            agent: "exchange0".into(),
            points: along(0),
        });
        b.series.push(Series {
            regime,
            agent: "exchange1".into(),
            points: along(1),
        });
        let sum = (-qb..=qb)
            .map(|x| {
                let q = InventoryPair::new(x, 0);
                (
                    x as f64,
                    scale.apply(v[0].at(q), p.eta[0]) + scale.apply(v[1].at(q), p.eta[1]),
                )
            })
            .collect();
        c.series.push(Series {
            regime,
            agent: "sum".into(),
            points: sum,
        });
    }
    Ok([a, b, c])
}

/// Equilibrium bid quotes against one maker's inventory, the other held at zero.
pub fn quote_profiles(set: &RegimeSet) -> Result<[Figure; 2]> {
    let p = *set.params();
    let qb = p.q_bar;
    let mut out = [
        figure("fig4a", "Bid quotes against q0 (q1 = 0)", "q0", "bid quote ($)", p),
        figure("fig4b", "Bid quotes against q1 (q0 = 0)", "q1", "bid quote ($)", p),
    ];
    for (axis, fig) in out.iter_mut().enumerate() {
        for regime in Regime::ALL {
            let mut pts = [Vec::new(), Vec::new()];
            for x in -qb..=qb {
                let q = if axis == 0 { InventoryPair::new(x, 0) } else { InventoryPair::new(0, x) };
                let quotes = set.quotes(regime, q)?;
                for (i, pt) in pts.iter_mut().enumerate() {
                    pt.push((x as f64, quotes.get(Side::Bid, i)));
                }
            }
            for (i, points) in pts.into_iter().enumerate() {
                fig.series.push(Series {
                    regime,
                    agent: format!("maker{i}"),
                    points,
                });
            }
        }
    }
    Ok(out)
}

/// What a sweep keeps from one solved parameter point: time-0 exchange values
/// and quote surfaces for each regime (the full solutions are dropped).
#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub params: ModelParams,
    /// `values[regime][exchange]`, reservation transfer included.
    pub values: [[ValueGrid; 2]; 3],
    /// `quotes[regime][lattice index]` at time 0.
    pub quotes: [Vec<QuoteMatrix>; 3],
}

impl SweepPoint {
    pub fn from_set(set: &RegimeSet) -> Result<Self> {
        let value_pair = |r: Regime| -> Result<[ValueGrid; 2]> { Ok([set.exchange_value(r, 0)?, set.exchange_value(r, 1)?]) };
        let surface = |r: Regime| -> Result<Vec<QuoteMatrix>> {
            Ok(set.get(r).quote_surface(0.0)?.into_iter().map(|(_, m)| m).collect())
        };
        Ok(Self {
            params: *set.params(),
            values: [value_pair(Regime::None)?, value_pair(Regime::One)?, value_pair(Regime::Both)?],
            quotes: [surface(Regime::None)?, surface(Regime::One)?, surface(Regime::Both)?],
        })
    }

    fn regime_index(regime: Regime) -> usize {
        Regime::ALL.iter().position(|&r| r == regime).expect("listed")
    }

    pub fn value(&self, regime: Regime, m: usize, q: InventoryPair) -> f64 {
        self.values[Self::regime_index(regime)][m].at(q)
    }

    pub fn quotes(&self, regime: Regime, q: InventoryPair) -> QuoteMatrix {
        let lattice = self.values[0][0].lattice;
        self.quotes[Self::regime_index(regime)][lattice.index(q)]
    }
}

/// Solves every regime at each sweep value; `apply` writes the value into the parameters.
pub fn sweep(
    base: &ModelParams,
    values: &[f64],
    cfg: &SolveConfig,
    apply: impl Fn(&mut ModelParams, f64) + Sync,
) -> Vec<(f64, Result<SweepPoint>)> {
    values
        .par_iter()
        .map(|&x| {
            let mut p = *base;
            apply(&mut p, x);
            let point = p
                .validate()
                .and_then(|_| RegimeSet::solve(&p, cfg))
                .and_then(|set| SweepPoint::from_set(&set));
            (x, point)
        })
        .collect()
}

/// Sweep over a common maker risk aversion `gamma0 = gamma1`.
pub fn sweep_common_gamma(base: &ModelParams, gammas: &[f64], cfg: &SolveConfig) -> Vec<(f64, Result<SweepPoint>)> {
    sweep(base, gammas, cfg, |p, g| p.gamma = [g, g])
}

/// Sweep over maker 0's risk aversion only.
pub fn sweep_gamma0(base: &ModelParams, gammas: &[f64], cfg: &SolveConfig) -> Vec<(f64, Result<SweepPoint>)> {
    sweep(base, gammas, cfg, |p, g| p.gamma[0] = g)
}

fn describe(x: f64, e: &Error) -> String {
    format!("sweep point {x}: {e}")
}

/// Exchange values at `q` against the swept parameter.
pub fn sweep_values(
    base: &ModelParams,
    points: &[(f64, Result<SweepPoint>)],
    q: InventoryPair,
    x_label: &str,
    scale: ValueScale,
) -> Figure {
    let mut fig = figure("fig2d", "Exchange values against common maker risk aversion", x_label, scale.label(), *base);
    for regime in Regime::ALL {
        for m in 0..2 {
            fig.series.push(Series {
                regime,
                agent: format!("exchange{m}"),
                points: Vec::new(),
            });
        }
    }
    for (x, set) in points {
        let set = match set {
            Ok(s) => s,
            Err(e) => {
                fig.failures.push(describe(*x, e));
                continue;
            }
        };
        for (k, regime) in Regime::ALL.iter().enumerate() {
            for m in 0..2 {
                let y = scale.apply(set.value(*regime, m, q), set.params.eta[m]);
                fig.series[2 * k + m].points.push((*x, y));
            }
        }
    }
    fig
}

/// Bid quotes at `q` (time 0) against the swept parameter.
pub fn sweep_quotes(
    id: &str,
    title: &str,
    base: &ModelParams,
    points: &[(f64, Result<SweepPoint>)],
    q: InventoryPair,
    x_label: &str,
) -> Figure {
    let mut fig = figure(id, title, x_label, "bid quote ($)", *base);
    for regime in Regime::ALL {
        for i in 0..2 {
            fig.series.push(Series {
                regime,
                agent: format!("maker{i}"),
                points: Vec::new(),
            });
        }
    }
    for (x, set) in points {
        let set = match set {
            Ok(s) => s,
            Err(e) => {
                fig.failures.push(describe(*x, e));
                continue;
            }
        };
        for (k, regime) in Regime::ALL.iter().enumerate() {
            let quotes = set.quotes(*regime, q);
            for i in 0..2 {
                fig.series[2 * k + i].points.push((*x, quotes.get(Side::Bid, i)));
            }
        }
    }
    fig
}

/// Default risk-aversion grid for the sweeps.
pub const GAMMA_SWEEP: [f64; 6] = [0.002, 0.005, 0.01, 0.02, 0.05, 0.1];

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
    fn profiles_have_every_regime() {
        let p = small();
        let set = RegimeSet::solve(&p, &SolveConfig::with_dt(1e-3)).unwrap();
        let [a, b, c] = value_profiles(&set, ValueScale::Utility).unwrap();
        for fig in [&a, &b, &c] {
            assert_eq!(fig.series.len(), 3);
            assert!(fig.series.iter().all(|s| s.points.len() == 5));
        }
        let sum = c.series(Regime::One, "sum").unwrap().y_at(0.0).unwrap();
        let parts = a.series(Regime::One, "exchange0").unwrap().y_at(0.0).unwrap()
            + b.series(Regime::One, "exchange1").unwrap().y_at(0.0).unwrap();
        assert!((sum - parts).abs() < 1e-15);
        let [q0, q1] = quote_profiles(&set).unwrap();
        assert_eq!(q0.series.len(), 6);
        // maker 0 at its long cap posts the bound on the bid
        assert_eq!(q0.series(Regime::None, "maker0").unwrap().y_at(2.0), Some(p.delta_inf));
        assert_eq!(q1.series(Regime::Both, "maker1").unwrap().y_at(2.0), Some(p.delta_inf));
    }

    #[test]
    fn no_contract_exchange_is_fee_only() {
        let p = small();
        let set = RegimeSet::solve(&p, &SolveConfig::with_dt(1e-3)).unwrap();
        let v = set.exchange_value(Regime::None, 0).unwrap();
        // fee income is positive, so the utility sits just above -1
        assert!(v.values.iter().all(|&x| x > -1.0 && x < -0.99));
        let ce = ValueScale::CertaintyEquivalent.apply(v.at(InventoryPair::default()), p.eta[0]);
        assert!(ce > 0.0);
    }

    #[test]
    fn sweep_reports_failures_and_continues() {
        let p = small();
        let pts = sweep_common_gamma(&p, &[0.01, -1.0], &SolveConfig::with_dt(1e-3));
        let fig = sweep_values(&p, &pts, InventoryPair::default(), "gamma", ValueScale::Utility);
        assert_eq!(fig.failures.len(), 1);
        assert!(fig.series.iter().all(|s| s.points.len() == 1));
        let mut buf = Vec::new();
        fig.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + 6);
        assert!(text.starts_with("figure,series,regime,agent,x_name,x,y,sigma"));
    }
}
