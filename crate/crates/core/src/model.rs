//! Model constants, index conventions and the order-arrival intensity.
//!
//! Indices follow one convention everywhere: `side` is bid (0) or ask (1),
//! `maker` and `venue` are 0 or 1, and a payment rate is addressed as
//! `z_n[side][maker][venue]`.

use crate::error::{Error, Result};

/// Market, preference and connection constants shared read-only by every module.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    /// Price volatility, $ per sqrt(day).
    pub sigma: f64,
    /// Intensity decay, per $ per sqrt(day).
    pub kappa: f64,
    /// Base intensity of each venue, per day.
    pub a: [f64; 2],
    /// Per-venue intensity shift, also the exchange fee per order, $.
    pub c: [f64; 2],
    /// Market-maker absolute risk aversions.
    pub gamma: [f64; 2],
    /// Exchange absolute risk aversions.
    pub eta: [f64; 2],
    /// Connection efficiency / order-splitting penalty, in [0, 1).
    pub beta: f64,
    /// Inventory cap (shares).
    pub q_bar: i32,
    /// Quote bound, $.
    pub delta_inf: f64,
    /// Horizon, days.
    pub horizon: f64,
    /// Initial price, $.
    pub s0: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self::baseline()
    }
}

impl ModelParams {
    /// Reference parameter set: one trading day, symmetric venues and makers.
    pub fn baseline() -> Self {
        Self {
            sigma: 1.2,
            kappa: 8.0,
            a: [100.0, 100.0],
            c: [1e-5, 1e-5],
            gamma: [0.01, 0.01],
            eta: [0.1, 0.1],
            beta: 0.6,
            q_bar: 5,
            delta_inf: 10.0,
            horizon: 1.0,
            s0: 100.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        fn positive(name: &'static str, x: f64) -> Result<()> {
            if x.is_finite() && x > 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidParam {
                    name,
                    reason: format!("must be finite and > 0, got {x}"),
                })
            }
        }
        positive("sigma", self.sigma)?;
        positive("kappa", self.kappa)?;
        positive("a0", self.a[0])?;
        positive("a1", self.a[1])?;
        positive("c0", self.c[0])?;
        positive("c1", self.c[1])?;
        positive("gamma0", self.gamma[0])?;
        positive("gamma1", self.gamma[1])?;
        positive("eta0", self.eta[0])?;
        positive("eta1", self.eta[1])?;
        positive("delta_inf", self.delta_inf)?;
        positive("horizon", self.horizon)?;
        positive("s0", self.s0)?;
        if !(self.beta.is_finite() && (0.0..1.0).contains(&self.beta)) {
            return Err(Error::InvalidParam {
                name: "beta",
                reason: format!("must lie in [0, 1), got {}", self.beta),
            });
        }
        if self.q_bar < 1 {
            return Err(Error::InvalidParam {
                name: "q_bar",
                reason: format!("must be a positive integer, got {}", self.q_bar),
            });
        }
        // Keeps the log(1 - ...) constant of the own-maker rate finite. Holds
        // identically for positive inputs; a failure means a NaN slipped in.
        for m in 0..2 {
            for scale in [1.0, 1.0 - self.beta] {
                let s = scale * self.sigma;
                let lhs = s * s * self.gamma[m] * self.eta[m];
                let rhs = (self.kappa + s * self.gamma[m]) * (self.kappa + s * self.eta[m]);
                if !(lhs < rhs) {
                    return Err(Error::InvalidParam {
                        name: "gamma/eta",
                        reason: format!("risk-sharing constant degenerate for exchange {m}"),
                    });
                }
            }
        }
        Ok(())
    }

    /// Number of inventory levels per maker, `2 q_bar + 1`.
    pub fn levels(&self) -> usize {
        (2 * self.q_bar + 1) as usize
    }

    /// `A^j exp(-kappa c^j / sigma)`: the quote-independent weight of venue `j`.
    pub fn venue_weight(&self, venue: usize) -> f64 {
        self.a[venue] * (-self.kappa * self.c[venue] / self.sigma).exp()
    }
}

/// Side of the book a market order hits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Bid,
    Ask,
}

impl Side {
    pub const ALL: [Side; 2] = [Side::Bid, Side::Ask];

    /// +1 for bid (maker buys), -1 for ask.
    pub fn phi(self) -> i32 {
        match self {
            Side::Bid => 1,
            Side::Ask => -1,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Side::Bid => 0,
            Side::Ask => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Side::Bid => "bid",
            Side::Ask => "ask",
        }
    }

    pub fn opposite(self) -> Side {
        match self {
            Side::Bid => Side::Ask,
            Side::Ask => Side::Bid,
        }
    }
}

/// Inventories `(q^0, q^1)` of the two market makers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct InventoryPair(pub [i32; 2]);

impl InventoryPair {
    pub fn new(q0: i32, q1: i32) -> Self {
        Self([q0, q1])
    }

    pub fn get(self, maker: usize) -> i32 {
        self.0[maker]
    }

    pub fn in_bounds(self, q_bar: i32) -> bool {
        self.0.iter().all(|q| q.abs() <= q_bar)
    }

    /// True when the cap stops `maker` from trading on `side`.
    pub fn blocked(self, side: Side, maker: usize, q_bar: i32) -> bool {
        side.phi() * self.0[maker] >= q_bar
    }

    /// Inventory after `maker` is filled on `side`.
    pub fn after_fill(self, side: Side, maker: usize) -> Self {
        let mut q = self.0;
        q[maker] += side.phi();
        Self(q)
    }

    pub fn mirrored(self) -> Self {
        Self([-self.0[0], -self.0[1]])
    }

    pub fn swapped(self) -> Self {
        Self([self.0[1], self.0[0]])
    }
}

/// Quotes `delta[side][maker]`, in $ away from the fundamental price.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct QuoteMatrix {
    pub delta: [[f64; 2]; 2],
}

impl QuoteMatrix {
    pub fn uniform(d: f64) -> Self {
        Self {
            delta: [[d; 2]; 2],
        }
    }

    pub fn get(&self, side: Side, maker: usize) -> f64 {
        self.delta[side.index()][maker]
    }

    pub fn set(&mut self, side: Side, maker: usize, d: f64) {
        self.delta[side.index()][maker] = d;
    }

    /// Best (smallest) quote on a side.
    pub fn best(&self, side: Side) -> f64 {
        let row = self.delta[side.index()];
        row[0].min(row[1])
    }

    /// Checks the quote bound and the inventory-cap rule.
    pub fn check_admissible(&self, p: &ModelParams, q: InventoryPair) -> Result<()> {
        for side in Side::ALL {
            for maker in 0..2 {
                let d = self.get(side, maker);
                let capped = q.blocked(side, maker, p.q_bar);
                let bad = !d.is_finite()
                    || d.abs() > p.delta_inf * (1.0 + 1e-12)
                    || (capped && d != p.delta_inf);
                if bad {
                    return Err(Error::InadmissibleQuote {
                        side: side.name(),
                        maker,
                        quote: d,
                        q0: q.0[0],
                        q1: q.0[1],
                    });
                }
            }
        }
        Ok(())
    }
}

/// Payment rates of one exchange's contract: `z_n[side][maker][venue]` per
/// fill, and `z_s` per unit of price move.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RateVector {
    pub z_n: [[[f64; 2]; 2]; 2],
    pub z_s: f64,
}

impl RateVector {
    pub const ZERO: RateVector = RateVector {
        z_n: [[[0.0; 2]; 2]; 2],
        z_s: 0.0,
    };

    pub fn get(&self, side: Side, maker: usize, venue: usize) -> f64 {
        self.z_n[side.index()][maker][venue]
    }

    pub fn set(&mut self, side: Side, maker: usize, venue: usize, z: f64) {
        self.z_n[side.index()][maker][venue] = z;
    }

    /// Sets the same rate on both venues.
    pub fn set_both(&mut self, side: Side, maker: usize, z: f64) {
        self.z_n[side.index()][maker] = [z, z];
    }

    /// Rate pair `(z^{.,k,i,0}, z^{.,k,i,1})`.
    pub fn pair(&self, side: Side, maker: usize) -> [f64; 2] {
        self.z_n[side.index()][maker]
    }

    pub fn is_finite(&self) -> bool {
        self.z_s.is_finite() && self.z_n.iter().flatten().flatten().all(|z| z.is_finite())
    }
}

/// `A^j exp(-(kappa/sigma)(d + c^j))`.
pub fn intensity(p: &ModelParams, venue: usize, d: f64) -> f64 {
    p.a[venue] * (-(p.kappa / p.sigma) * (d + p.c[venue])).exp()
}

/// Intensity of `N^{side,maker,venue}`, switched off when the cap blocks that side.
pub fn effective_intensity(
    p: &ModelParams,
    side: Side,
    maker: usize,
    venue: usize,
    quotes: &QuoteMatrix,
    q: InventoryPair,
) -> Result<f64> {
    quotes.check_admissible(p, q)?;
    if q.blocked(side, maker, p.q_bar) {
        Ok(0.0)
    } else {
        Ok(intensity(p, venue, quotes.get(side, maker)))
    }
}

/// Projection onto `[-delta_inf, delta_inf]`.
pub fn clamp_quote(p: &ModelParams, d: f64) -> f64 {
    d.max(-p.delta_inf).min(p.delta_inf)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + b.abs())
    }

    #[test]
    fn intensity_reference_values() {
        let p = ModelParams::baseline();
        let d = p.sigma * p.a[0].ln() / p.kappa - p.c[0];
        assert!(close(intensity(&p, 0, d), 1.0, 1e-14));
        let direct = 100.0 * (-(8.0 / 1.2) * 1e-5f64).exp();
        assert!(close(intensity(&p, 0, 0.0), direct, 1e-15));
        let at_015 = 100.0 * (-(8.0 / 1.2) * (0.15 + 1e-5f64)).exp();
        assert!(close(intensity(&p, 1, 0.15), at_015, 1e-15));
        assert!((at_015 - 36.8).abs() < 0.05);
    }

    #[test]
    fn intensity_halves_over_log2_shift() {
        let p = ModelParams::baseline();
        let shift = p.sigma * 2f64.ln() / p.kappa;
        for d in [-0.4, 0.0, 0.15, 2.0] {
            assert!(close(intensity(&p, 0, d + shift), intensity(&p, 0, d) / 2.0, 1e-13));
            assert!(intensity(&p, 0, d + 1e-3) < intensity(&p, 0, d));
        }
    }

    #[test]
    fn gated_intensity() {
        let p = ModelParams::baseline();
        let mut quotes = QuoteMatrix::uniform(0.15);
        quotes.set(Side::Bid, 0, p.delta_inf);
        quotes.set(Side::Ask, 1, p.delta_inf);
        let q = InventoryPair::new(p.q_bar, -p.q_bar);
        assert_eq!(effective_intensity(&p, Side::Bid, 0, 0, &quotes, q), Ok(0.0));
        let mut quotes = QuoteMatrix::uniform(0.15);
        quotes.set(Side::Ask, 1, p.delta_inf);
        let q = InventoryPair::new(-p.q_bar, -p.q_bar);
        // maker 0 is short at the cap and still buys
        quotes.set(Side::Ask, 0, p.delta_inf);
        let lam = effective_intensity(&p, Side::Bid, 0, 1, &quotes, q).unwrap();
        assert_eq!(lam, intensity(&p, 1, 0.15));
        let zero = QuoteMatrix::uniform(0.0);
        let lam = effective_intensity(&p, Side::Ask, 1, 0, &zero, InventoryPair::default()).unwrap();
        assert!(close(lam, intensity(&p, 0, 0.0), 1e-15));
    }

    #[test]
    fn gated_intensity_rejects_cap_violation() {
        let p = ModelParams::baseline();
        let quotes = QuoteMatrix::uniform(0.15);
        let q = InventoryPair::new(p.q_bar, 0);
        assert!(matches!(
            effective_intensity(&p, Side::Ask, 1, 0, &quotes, q),
            Err(Error::InadmissibleQuote { side: "bid", maker: 0, .. })
        ));
    }

    #[test]
    fn clamp() {
        let p = ModelParams::baseline();
        assert_eq!(clamp_quote(&p, 12.0), 10.0);
        assert_eq!(clamp_quote(&p, -12.0), -10.0);
        assert_eq!(clamp_quote(&p, 0.3), 0.3);
    }

    #[test]
    fn validation() {
        assert!(ModelParams::baseline().validate().is_ok());
        let mut p = ModelParams::baseline();
        p.beta = 1.0;
        assert!(matches!(p.validate(), Err(Error::InvalidParam { name: "beta", .. })));
        let mut p = ModelParams::baseline();
        p.q_bar = 0;
        assert!(p.validate().is_err());
        let mut p = ModelParams::baseline();
        p.sigma = -1.0;
        assert!(p.validate().is_err());
    }
}
