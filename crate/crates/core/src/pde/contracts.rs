//! Closed-form payment rates of the optimal contracts and the exchange-side
//! generator terms they are plugged into.
//!
//! Exchange `m` contracts with maker `m`. Its "own" rate pays maker `m` per
//! own fill (identical on both venues); its "cross" rates pay maker `m` per
//! fill of the competitor's maker, venue by venue. Grid values `y` of an
//! exchange are negative utilities, so every log-ratio below is of two
//! negative numbers.

use crate::equilibrium::delta_side;
use crate::error::{Error, Result};
use crate::model::{intensity, InventoryPair, ModelParams, Side};
use crate::pde::grid::ValueGrid;

/// Null-contract rate: jump of a maker's certainty-equivalent grid across a fill.
/// Zero when the fill would leave the lattice (the intensity is gated off there).
pub fn zeta_hat(grid: &ValueGrid, q: InventoryPair, side: Side, maker: usize) -> f64 {
    match grid.lattice.neighbour(q, side, maker) {
        Some(i) => grid.values[i] - grid.at(q),
        None => 0.0,
    }
}

/// Optimal price-exposure rate of exchange `m`: `-gamma q / (gamma + eta)`.
pub fn zeta_price(p: &ModelParams, m: usize, q_m: i32) -> f64 {
    -p.gamma[m] / (p.gamma[m] + p.eta[m]) * q_m as f64
}

/// Price-exposure part of the exchange generator, per unit of `-y`.
pub fn g_price(p: &ModelParams, m: usize, z_s: f64, q_m: i32) -> f64 {
    let (g, e) = (p.gamma[m], p.eta[m]);
    let x = z_s + q_m as f64;
    e * p.sigma * p.sigma / 2.0 * (g * x * x + e * z_s * z_s)
}

fn ratio_log(grid: &'static str, y: f64, y_next: f64, t: f64, q: InventoryPair) -> Result<f64> {
    for v in [y, y_next] {
        if !(v < 0.0) {
            return Err(Error::SignBreach {
                grid,
                value: v,
                t,
                q0: q.0[0],
                q1: q.0[1],
            });
        }
    }
    Ok((y / y_next).ln())
}

/// Quote-independent constant of the own-maker rate of exchange `m`.
/// `scale` is 1 on the leader branch and `1 - beta` on the follower branch.
pub fn own_rate_constant(p: &ModelParams, m: usize, scale: f64) -> f64 {
    let s = scale * p.sigma;
    let (g, e, k) = (p.gamma[m], p.eta[m], p.kappa);
    let risk = (-(s * s * g * e) / ((k + s * g) * (k + s * e))).ln_1p();
    let w = [p.venue_weight(0), p.venue_weight(1)];
    let fee = ((w[0] + w[1]) / (w[1 - m] + w[m] * (-e * p.c[m]).exp())).ln();
    risk + fee
}

/// Leader (`tilde`) and follower (`tilde_beta`) candidates of the own-maker rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OwnCandidates {
    pub leader: f64,
    pub follower: f64,
}

/// Candidates for exchange `m` given `y = v_m(q)` and `y_own = v_m(q + phi(k) e^m)`.
pub fn own_candidates(
    p: &ModelParams,
    m: usize,
    y: f64,
    y_own: f64,
    t: f64,
    q: InventoryPair,
) -> Result<OwnCandidates> {
    let r = ratio_log("exchange", y, y_own, t, q)?;
    let e = p.eta[m];
    Ok(OwnCandidates {
        leader: (r + own_rate_constant(p, m, 1.0)) / e,
        follower: (r + own_rate_constant(p, m, 1.0 - p.beta)) / e,
    })
}

/// Picks the leader candidate when the induced quote of maker `m` is at or
/// below the competitor's, the follower candidate otherwise.
pub fn select_own_rate(
    p: &ModelParams,
    m: usize,
    side: Side,
    cand: OwnCandidates,
    competitor_own: f64,
    q: InventoryPair,
) -> f64 {
    let mut z_own = [[0.0; 2]; 2];
    z_own[m] = [cand.leader; 2];
    z_own[1 - m] = [competitor_own; 2];
    let d = delta_side(p, side, z_own, q);
    if d[m] <= d[1 - m] {
        cand.leader
    } else {
        cand.follower
    }
}

/// Own-maker rate of exchange `m` on `side` read from its grid at `q`.
/// Zero when maker `m` is blocked on that side.
pub fn zeta_check_own(
    p: &ModelParams,
    m: usize,
    side: Side,
    grid: &ValueGrid,
    q: InventoryPair,
    competitor_own: f64,
) -> Result<f64> {
    let Some(i) = grid.lattice.neighbour(q, side, m) else {
        return Ok(0.0);
    };
    let cand = own_candidates(p, m, grid.at(q), grid.values[i], grid.t, q)?;
    Ok(select_own_rate(p, m, side, cand, competitor_own, q))
}

/// Cross rate of exchange `m` on fills of the other maker routed through `venue`.
pub fn cross_rate(p: &ModelParams, m: usize, venue: usize, y: f64, y_cross: f64, t: f64, q: InventoryPair) -> Result<f64> {
    let r = ratio_log("exchange", y, y_cross, t, q)?;
    let (g, e) = (p.gamma[m], p.eta[m]);
    let fee = if venue == m { e * p.c[m] } else { 0.0 };
    Ok((fee + r) / (e + g))
}

/// Cross rate read from the grid; zero when the other maker is blocked on `side`.
pub fn zeta_check_cross(
    p: &ModelParams,
    m: usize,
    side: Side,
    venue: usize,
    grid: &ValueGrid,
    q: InventoryPair,
) -> Result<f64> {
    match grid.lattice.neighbour(q, side, 1 - m) {
        Some(i) => cross_rate(p, m, venue, grid.at(q), grid.values[i], grid.t, q),
        None => Ok(0.0),
    }
}

/// Exchange rates entering `g^{m,k}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SideRates {
    /// Rate paid to maker `m` per own fill (both venues).
    pub own: f64,
    /// Rates paid to maker `m` per fill of the other maker, by venue.
    pub cross: [f64; 2],
    /// Own-fill rate of the competing exchange to its maker (enters the quotes only).
    pub competitor_own: f64,
}

/// Exchange `m`'s generator contribution from side `k`.
///
/// `y = v_m(q)`, `y_own = v_m(q + phi(k) e^m)`, `y_cross = v_m(q + phi(k) e^{1-m})`.
/// Terms whose fill is blocked by the cap vanish, so the off-lattice values are never read.
#[allow(clippy::too_many_arguments)]
pub fn g_side(
    p: &ModelParams,
    m: usize,
    side: Side,
    rates: SideRates,
    q: InventoryPair,
    y: f64,
    y_own: f64,
    y_cross: f64,
) -> f64 {
    let o = 1 - m;
    let (g, e) = (p.gamma[m], p.eta[m]);
    let mut z_own = [[0.0; 2]; 2];
    z_own[m] = [rates.own; 2];
    z_own[o] = [rates.competitor_own; 2];
    let d = delta_side(p, side, z_own, q);
    let best = d[0].min(d[1]);
    let fee = |j: usize| if j == m { p.c[m] } else { 0.0 };
    let mut total = 0.0;
    if !q.blocked(side, m, p.q_bar) {
        let capture = d[m] - p.beta * (d[m] - best);
        let util = -(-g * (rates.own + capture)).exp_m1() / g;
        for j in 0..2 {
            total += intensity(p, j, d[m]) * ((e * (rates.own - fee(j))).exp() * y_own - y * (1.0 + e * util));
        }
    }
    if !q.blocked(side, o, p.q_bar) {
        for j in 0..2 {
            let z = rates.cross[j];
            let util = -(-g * z).exp_m1() / g;
            total += intensity(p, j, d[o]) * ((e * (z - fee(j))).exp() * y_cross - y * (1.0 + e * util));
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pde::grid::Lattice;

    fn p() -> ModelParams {
        ModelParams::baseline()
    }

    #[test]
    fn zeta_hat_examples() {
        let l = Lattice::new(5);
        let zero = ValueGrid::constant(1.0, l, 0.0);
        let flat = ValueGrid::constant(0.3, l, 7.5);
        for q in l.states() {
            for side in Side::ALL {
                for i in 0..2 {
                    assert_eq!(zeta_hat(&zero, q, side, i), 0.0);
                    assert_eq!(zeta_hat(&flat, q, side, i), 0.0);
                }
            }
        }
        let mut g = ValueGrid::constant(0.0, l, 0.0);
        for (i, q) in l.states().enumerate() {
            g.values[i] = (q.0[0] * 3 + q.0[1]) as f64;
        }
        let q = InventoryPair::new(1, 1);
        assert_eq!(zeta_hat(&g, q, Side::Bid, 0), 3.0);
        assert_eq!(zeta_hat(&g, q, Side::Ask, 1), -1.0);
    }

    #[test]
    fn price_rate_examples() {
        let p = p();
        assert_eq!(zeta_price(&p, 0, 0), 0.0);
        assert!((zeta_price(&p, 0, 5) + 5.0 / 11.0).abs() < 1e-15);
        // closed form of the minimum: (eta sigma^2 / 2) gamma eta q^2 / (gamma + eta)
        for q in -5..=5 {
            let z = zeta_price(&p, 0, q);
            let at = g_price(&p, 0, z, q);
            let (g, e, s) = (0.01, 0.1, 1.2);
            let closed = e * s * s / 2.0 * g * e * (q * q) as f64 / (g + e);
            assert!((at - closed).abs() < 1e-15 + 1e-12 * closed);
            // stationarity: derivative vanishes
            let h = 1e-6;
            let deriv = (g_price(&p, 0, z + h, q) - g_price(&p, 0, z - h, q)) / (2.0 * h);
            assert!(deriv.abs() < 1e-8);
        }
    }

    #[test]
    fn constant_grid_reduces_to_constants() {
        let p = p();
        let q = InventoryPair::default();
        let c = own_candidates(&p, 0, -1.0, -1.0, 0.0, q).unwrap();
        assert!((c.leader - own_rate_constant(&p, 0, 1.0) / 0.1).abs() < 1e-15);
        assert!((c.follower - own_rate_constant(&p, 0, 0.4) / 0.1).abs() < 1e-15);
        let g = ValueGrid::constant(0.5, Lattice::new(5), -1.0);
        assert_eq!(zeta_check_cross(&p, 0, Side::Bid, 1, &g, q).unwrap(), 0.0);
        let fee = zeta_check_cross(&p, 0, Side::Bid, 0, &g, q).unwrap();
        assert!((fee - 0.1 * 1e-5 / 0.11).abs() < 1e-18);
        let fee1 = zeta_check_cross(&p, 1, Side::Ask, 1, &g, q).unwrap();
        assert_eq!(fee1, fee);
    }

    #[test]
    fn follower_candidate_collapses_at_zero_beta() {
        let mut p = p();
        p.beta = 0.0;
        let c = own_candidates(&p, 1, -3.0, -2.5, 0.0, InventoryPair::default()).unwrap();
        assert_eq!(c.leader, c.follower);
    }

    #[test]
    fn own_constant_matches_expanded_form() {
        let p = p();
        let (s, g, e, k) = (1.2f64, 0.01f64, 0.1f64, 8.0f64);
        let w = 100.0 * (-k * 1e-5 / s).exp();
        let expected = (1.0 - s * s * g * e / ((k + s * g) * (k + s * e))).ln()
            + (2.0 * w / (w + 100.0 * (-(k / s + e) * 1e-5).exp())).ln();
        assert!((own_rate_constant(&p, 0, 1.0) - expected).abs() < 1e-15);
    }

    #[test]
    fn non_negative_grid_is_rejected() {
        let p = p();
        let g = ValueGrid::constant(0.25, Lattice::new(5), 0.0);
        let err = zeta_check_own(&p, 0, Side::Bid, &g, InventoryPair::default(), 0.0).unwrap_err();
        assert!(matches!(err, Error::SignBreach { .. }));
        assert!(zeta_check_cross(&p, 1, Side::Ask, 0, &g, InventoryPair::default()).is_err());
    }

    #[test]
    fn g_side_vanishes_when_both_blocked() {
        let p = p();
        let q = InventoryPair::new(5, 5);
        let r = SideRates {
            own: 0.2,
            cross: [0.1, -0.1],
            competitor_own: 0.05,
        };
        assert_eq!(g_side(&p, 0, Side::Bid, r, q, -1.0, -1.2, -0.8), 0.0);
        assert!(g_side(&p, 0, Side::Ask, r, q, -1.0, -1.2, -0.8) != 0.0);
    }

    #[test]
    fn g_side_zero_rates_closed_form() {
        // all rates 0, y = y' = y'' = -1: each active fill contributes
        // Lambda * (1 + eta (1 - e^{-gamma x}) / gamma - e^{-eta c [j = m]})
        let p = p();
        let q = InventoryPair::new(2, -1);
        let r = SideRates {
            own: 0.0,
            cross: [0.0, 0.0],
            competitor_own: 0.0,
        };
        let f = (p.sigma * 0.01 / p.kappa).ln_1p() / 0.01;
        let (g, e, c) = (0.01f64, 0.1f64, 1e-5f64);
        let lam = |_venue: usize| 100.0 * (-(8.0 / 1.2) * (f + 1e-5)).exp();
        let mut expected = 0.0;
        for j in 0..2 {
            let fee = if j == 0 { (-e * c).exp() } else { 1.0 };
            expected += lam(j) * (1.0 + e * (1.0 - (-g * f).exp()) / g - fee);
            expected += lam(j) * (1.0 - fee);
        }
        let got = g_side(&p, 0, Side::Bid, r, q, -1.0, -1.0, -1.0);
        assert!((got - expected).abs() < 1e-12 * expected.abs(), "{got} vs {expected}");
    }

    #[test]
    fn g_side_relabelling_symmetry() {
        let p = p();
        let r = SideRates {
            own: 0.13,
            cross: [0.02, -0.04],
            competitor_own: -0.07,
        };
        let swapped = SideRates {
            cross: [r.cross[1], r.cross[0]],
            ..r
        };
        for (a, b) in [(0, 0), (2, -3), (5, 1), (-5, 4)] {
            let q = InventoryPair::new(a, b);
            for side in Side::ALL {
                let g0 = g_side(&p, 0, side, r, q, -2.0, -2.1, -1.9);
                let g1 = g_side(&p, 1, side, swapped, q.swapped(), -2.0, -2.1, -1.9);
                assert!((g0 - g1).abs() < 1e-12 * g0.abs().max(1.0));
            }
        }
    }
}
