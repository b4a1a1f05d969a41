use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::pde::Regime;
use crate::sim::PathRecord;

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub std_err: f64,
    pub paths: usize,
    pub seed: u64,
}

impl McEstimate {
    pub fn from_samples(samples: &[f64], seed: u64) -> Result<Self> {
        let n = samples.len();
        if n == 0 {
            return Err(Error::Estimate("no paths to average".into()));
        }
        let mean = samples.iter().sum::<f64>() / n as f64;
        let var = if n > 1 {
            samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        Ok(Self {
            mean,
            std_err: (var / n as f64).sqrt(),
            paths: n,
            seed,
        })
    }

    /// Distance to `target` in standard errors.
    pub fn z_score(&self, target: f64) -> f64 {
        let d = self.mean - target;
        if self.std_err > 0.0 {
            d.abs() / self.std_err
        } else if d == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    }
}

fn seed_of(paths: &[PathRecord]) -> u64 {
    paths.first().map_or(0, |r| r.seed)
}

/// `E[-exp(-gamma_i (PL_T + xi))]`, with `xi` the representation value `Y_T` when
/// `with_contract` is set and zero otherwise.
pub fn mm_utility(p: &ModelParams, paths: &[PathRecord], maker: usize, with_contract: bool) -> Result<McEstimate> {
    let g = p.gamma[maker];
    let samples: Vec<f64> = paths
        .iter()
        .map(|r| {
            let xi = if with_contract { r.y[maker] } else { 0.0 };
            -(-g * (r.pl[maker] + xi)).exp()
        })
        .collect();
    McEstimate::from_samples(&samples, seed_of(paths))
}

/// `E[-exp(-eta_m (fees - xi))]`, where `xi` is the contract payment if exchange `m`
/// contracts under `regime` (initial value zero) and zero otherwise.
pub fn exchange_utility(p: &ModelParams, regime: Regime, paths: &[PathRecord], m: usize) -> Result<McEstimate> {
    let e = p.eta[m];
    let samples: Vec<f64> = paths
        .iter()
        .map(|r| {
            let xi = if regime.contracts(m) { r.y[m] } else { 0.0 };
            -(-e * (r.fees[m] - xi)).exp()
        })
        .collect();
    McEstimate::from_samples(&samples, seed_of(paths))
}

/// Certainty equivalent `-ln(-u)/a` with a 95% delta-method interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CeEstimate {
    pub value: f64,
    pub std_err: f64,
    pub lower: f64,
    pub upper: f64,
}

pub fn certainty_equivalent(est: &McEstimate, a: f64) -> Result<CeEstimate> {
    if !(est.mean < 0.0) {
        return Err(Error::Estimate(format!(
            "certainty equivalent needs a negative utility, got {}",
            est.mean
        )));
    }
    if !(a > 0.0) {
        return Err(Error::InvalidParam {
            name: "risk aversion",
            reason: format!("must be positive, got {a}"),
        });
    }
    let value = -(-est.mean).ln() / a;
    let std_err = est.std_err / (a * est.mean.abs());
    Ok(CeEstimate {
        value,
        std_err,
        lower: value - 1.96 * std_err,
        upper: value + 1.96 * std_err,
    })
}

/// Mean of `-exp(-gamma (PL_t + Y_t))` at each recorded checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct MartingaleReport {
    pub points: Vec<(f64, McEstimate)>,
}

impl MartingaleReport {
    /// Largest deviation from the first checkpoint, in combined standard errors.
    pub fn max_deviation(&self) -> f64 {
        let Some((_, base)) = self.points.first() else {
            return 0.0;
        };
        self.points
            .iter()
            .map(|(_, e)| {
                let se = (e.std_err.powi(2) + base.std_err.powi(2)).sqrt();
                let d = (e.mean - base.mean).abs();
                if se > 0.0 {
                    d / se
                } else if d == 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            })
            .fold(0.0, f64::max)
    }

    /// Whether the means never increase from one checkpoint to the next.
    pub fn is_non_increasing(&self) -> bool {
        self.points.windows(2).all(|w| w[1].1.mean <= w[0].1.mean)
    }
}

/// Builds the utility-process means of `maker` at the checkpoints recorded on every path.
pub fn martingale_check(p: &ModelParams, paths: &[PathRecord], maker: usize) -> Result<MartingaleReport> {
    let first = paths.first().ok_or_else(|| Error::Estimate("no paths to average".into()))?;
    let g = p.gamma[maker];
    let points = (0..first.checkpoints.len())
        .map(|c| {
            let samples: Vec<f64> = paths
                .iter()
                .map(|r| {
                    let cp = &r.checkpoints[c];
                    -(-g * (cp.pl[maker] + cp.y[maker])).exp()
                })
                .collect();
            Ok((first.checkpoints[c].t, McEstimate::from_samples(&samples, first.seed)?))
        })
        .collect::<Result<_>>()?;
    Ok(MartingaleReport { points })
}
