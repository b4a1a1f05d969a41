//! Market-maker Hamiltonians and the Nash quote map between the two makers.
//!
//! Given both exchanges' payment rates and the inventories, each side of the
//! book is solved independently: the maker with the lower unconstrained quote
//! leads, the other either posts its penalised best response above the
//! leader or matches the leader exactly.

use crate::model::{clamp_quote, intensity, InventoryPair, ModelParams, QuoteMatrix, RateVector, Side};

/// `ln( sum_j w_j e^{-gamma z_j} / sum_j w_j )`, computed as a log-sum-exp.
fn rate_log_ratio(p: &ModelParams, gamma: f64, z_own: [f64; 2]) -> f64 {
    let w = [p.venue_weight(0), p.venue_weight(1)];
    let e = [w[0].ln() - gamma * z_own[0], w[1].ln() - gamma * z_own[1]];
    let m = e[0].max(e[1]);
    let num = m + ((e[0] - m).exp() + (e[1] - m).exp()).ln();
    num - (w[0] + w[1]).ln()
}

/// Leader quote of `maker` on `side` given its own-fill rate pair.
pub fn gamma_quote(p: &ModelParams, maker: usize, side: Side, z_own: [f64; 2], q_i: i32) -> f64 {
    if side.phi() * q_i >= p.q_bar {
        return p.delta_inf;
    }
    let g = p.gamma[maker];
    let raw = ((p.sigma * g / p.kappa).ln_1p() + rate_log_ratio(p, g, z_own)) / g;
    clamp_quote(p, raw)
}

/// Best response of `maker` on `side` when it sits above a competitor quote `d_other`.
pub fn gamma_beta_quote(
    p: &ModelParams,
    maker: usize,
    side: Side,
    d_other: f64,
    z_own: [f64; 2],
    q_i: i32,
) -> f64 {
    if side.phi() * q_i >= p.q_bar {
        return p.delta_inf;
    }
    let g = p.gamma[maker];
    let b = p.beta;
    let raw = -b / (1.0 - b) * d_other
        + (((1.0 - b) * p.sigma * g / p.kappa).ln_1p() + rate_log_ratio(p, g, z_own)) / (g * (1.0 - b));
    clamp_quote(p, raw)
}

/// Equilibrium quotes `(maker 0, maker 1)` on one side, from each maker's own-fill rates.
pub fn delta_side(p: &ModelParams, side: Side, z_own: [[f64; 2]; 2], q: InventoryPair) -> [f64; 2] {
    let lead = [
        gamma_quote(p, 0, side, z_own[0], q.get(0)),
        gamma_quote(p, 1, side, z_own[1], q.get(1)),
    ];
    let mut out = [0.0; 2];
    for i in 0..2 {
        let o = 1 - i;
        out[i] = if lead[i] <= lead[o] {
            lead[i]
        } else {
            let follow = gamma_beta_quote(p, i, side, lead[o], z_own[i], q.get(i));
            if lead[o] < follow {
                follow
            } else {
                lead[o]
            }
        };
    }
    out
}

/// The Nash fixed point of both makers' Hamiltonians.
pub fn delta_fixed_point(p: &ModelParams, rates: &[RateVector; 2], q: InventoryPair) -> QuoteMatrix {
    let mut quotes = QuoteMatrix::default();
    for side in Side::ALL {
        let z_own = [rates[0].pair(side, 0), rates[1].pair(side, 1)];
        let d = delta_side(p, side, z_own, q);
        quotes.set(side, 0, d[0]);
        quotes.set(side, 1, d[1]);
    }
    quotes
}

/// Contribution of one side to `h^maker`.
pub fn hamiltonian_side(
    p: &ModelParams,
    maker: usize,
    side: Side,
    quotes: &QuoteMatrix,
    z: &RateVector,
    q: InventoryPair,
) -> f64 {
    let g = p.gamma[maker];
    let other = 1 - maker;
    let best = quotes.best(side);
    let mut h = 0.0;
    if !q.blocked(side, maker, p.q_bar) {
        let d = quotes.get(side, maker);
        let capture = d - p.beta * (d - best);
        for j in 0..2 {
            h += -(-g * (z.get(side, maker, j) + capture)).exp_m1() / g * intensity(p, j, d);
        }
    }
    if !q.blocked(side, other, p.q_bar) {
        let d = quotes.get(side, other);
        for j in 0..2 {
            h += -(-g * z.get(side, other, j)).exp_m1() / g * intensity(p, j, d);
        }
    }
    h
}

/// `h^maker(quotes, z^maker, q)`: the maker's instantaneous utility rate.
pub fn hamiltonian(p: &ModelParams, maker: usize, quotes: &QuoteMatrix, z: &RateVector, q: InventoryPair) -> f64 {
    Side::ALL
        .iter()
        .map(|&s| hamiltonian_side(p, maker, s, quotes, z, q))
        .sum()
}

/// `h^maker` evaluated at the Nash quotes.
pub fn equilibrium_hamiltonian(p: &ModelParams, maker: usize, rates: &[RateVector; 2], q: InventoryPair) -> f64 {
    let quotes = delta_fixed_point(p, rates, q);
    hamiltonian(p, maker, &quotes, &rates[maker], q)
}

/// Argmax of `h^maker` over a quote mesh of step `mesh` on `[-delta_inf, delta_inf]`,
/// holding the other maker's `(bid, ask)` quotes fixed. Returns `(bid, ask)`.
///
/// Exhaustive search; intended as a verification oracle.
pub fn best_response_bruteforce(
    p: &ModelParams,
    maker: usize,
    d_other: [f64; 2],
    z: &RateVector,
    q: InventoryPair,
    mesh: f64,
) -> [f64; 2] {
    assert!(mesh > 0.0, "mesh step must be positive");
    let n = (2.0 * p.delta_inf / mesh).round() as i64;
    let mut out = [p.delta_inf; 2];
    for side in Side::ALL {
        if q.blocked(side, maker, p.q_bar) {
            continue;
        }
        let mut quotes = QuoteMatrix::uniform(p.delta_inf);
        quotes.set(side, 1 - maker, d_other[side.index()]);
        let mut best = (f64::NEG_INFINITY, p.delta_inf);
        for k in 0..=n {
            let d = (-p.delta_inf + k as f64 * mesh).min(p.delta_inf);
            quotes.set(side, maker, d);
            let h = hamiltonian_side(p, maker, side, &quotes, z, q);
            if h > best.0 {
                best = (h, d);
            }
        }
        out[side.index()] = best.1;
    }
    out
}

/// Gauss-Seidel best-response iteration on the quote mesh, started from both
/// makers at `delta_inf`. Returns `None` if it fails to settle within `max_iter` rounds.
pub fn iterate_best_responses(
    p: &ModelParams,
    rates: &[RateVector; 2],
    q: InventoryPair,
    mesh: f64,
    max_iter: usize,
) -> Option<QuoteMatrix> {
    let mut cur = [[p.delta_inf; 2]; 2]; // [maker][side]
    for _ in 0..max_iter {
        let prev = cur;
        cur[0] = best_response_bruteforce(p, 0, cur[1], &rates[0], q, mesh);
        cur[1] = best_response_bruteforce(p, 1, cur[0], &rates[1], q, mesh);
        if cur == prev {
            let mut m = QuoteMatrix::default();
            for side in Side::ALL {
                for maker in 0..2 {
                    m.set(side, maker, cur[maker][side.index()]);
                }
            }
            return Some(m);
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn baseline() -> ModelParams {
        ModelParams::baseline()
    }

    fn fundamental(p: &ModelParams, i: usize) -> f64 {
        (p.sigma * p.gamma[i] / p.kappa).ln_1p() / p.gamma[i]
    }

    #[test]
    fn gamma_quote_examples() {
        let p = baseline();
        let g = gamma_quote(&p, 0, Side::Bid, [0.0, 0.0], 0);
        let expected = 100.0 * (1.0 + 0.012f64 / 8.0).ln();
        assert!((g - expected).abs() < 1e-14);
        assert!((g - 0.1499).abs() < 1e-4);
        assert_eq!(gamma_quote(&p, 0, Side::Bid, [0.0, 0.0], p.q_bar), 10.0);
        let z = 0.05;
        let gz = gamma_quote(&p, 1, Side::Ask, [z, z], 2);
        assert!((gz - (expected - z)).abs() < 1e-13);
    }

    #[test]
    fn gamma_quote_is_unconstrained_argmax() {
        // with the competitor parked at delta_inf the leader branch applies
        let p = baseline();
        let z = RateVector::ZERO;
        let q = InventoryPair::default();
        let br = best_response_bruteforce(&p, 0, [p.delta_inf; 2], &z, q, 1e-4);
        let g = gamma_quote(&p, 0, Side::Bid, [0.0, 0.0], 0);
        assert!((br[0] - g).abs() <= 1e-4);
        assert!((br[1] - g).abs() <= 1e-4);
    }

    #[test]
    fn gamma_beta_examples() {
        let mut p = baseline();
        let at_06 = gamma_beta_quote(&p, 0, Side::Bid, 0.0, [0.0, 0.0], 0);
        let expected = (1.0 / (0.01 * 0.4)) * (1.0 + 0.4 * 1.2 * 0.01 / 8.0f64).ln();
        assert!((at_06 - expected).abs() < 1e-13);
        assert_eq!(gamma_beta_quote(&p, 0, Side::Ask, 0.3, [0.0, 0.0], -p.q_bar), 10.0);
        p.beta = 0.0;
        let b0 = gamma_beta_quote(&p, 1, Side::Bid, 0.7, [0.0, 0.0], 0);
        assert!((b0 - gamma_quote(&p, 1, Side::Bid, [0.0, 0.0], 0)).abs() < 1e-15);
    }

    #[test]
    fn gamma_beta_is_restricted_argmax() {
        // argmax of h over d >= d_other when the follower branch is interior
        let p = baseline();
        let z = RateVector::ZERO;
        let q = InventoryPair::default();
        let d_other = 0.0;
        let gb = gamma_beta_quote(&p, 0, Side::Bid, d_other, [0.0, 0.0], 0);
        assert!(gb > d_other);
        let mut quotes = QuoteMatrix::uniform(p.delta_inf);
        quotes.set(Side::Bid, 1, d_other);
        let mut best = (f64::NEG_INFINITY, 0.0);
        let mut d = d_other;
        while d < 1.0 {
            quotes.set(Side::Bid, 0, d);
            let h = hamiltonian_side(&p, 0, Side::Bid, &quotes, &z, q);
            if h > best.0 {
                best = (h, d);
            }
            d += 1e-4;
        }
        assert!((best.1 - gb).abs() <= 1e-4, "{} vs {gb}", best.1);
    }

    #[test]
    fn symmetric_zero_rates_give_fundamental_quotes() {
        let p = baseline();
        let quotes = delta_fixed_point(&p, &[RateVector::ZERO; 2], InventoryPair::default());
        let f = fundamental(&p, 0);
        for side in Side::ALL {
            for i in 0..2 {
                assert_eq!(quotes.get(side, i), f);
            }
        }
    }

    #[test]
    fn capped_maker_is_inactive() {
        let p = baseline();
        let q = InventoryPair::new(p.q_bar, 0);
        let quotes = delta_fixed_point(&p, &[RateVector::ZERO; 2], q);
        assert_eq!(quotes.get(Side::Bid, 0), p.delta_inf);
        assert_eq!(quotes.get(Side::Bid, 1), gamma_quote(&p, 1, Side::Bid, [0.0, 0.0], 0));
        assert!(quotes.check_admissible(&p, q).is_ok());
    }

    #[test]
    fn fixed_point_matches_best_response_iteration() {
        let p = baseline();
        let grid = [-0.3, 0.0, 0.2];
        for &a in &grid {
            for &b in &grid {
                let mut r0 = RateVector::ZERO;
                let mut r1 = RateVector::ZERO;
                r0.set_both(Side::Bid, 0, a);
                r0.set(Side::Ask, 0, 0, b);
                r1.set_both(Side::Bid, 1, b);
                r1.set(Side::Ask, 1, 1, a);
                let rates = [r0, r1];
                let q = InventoryPair::new(1, -2);
                let fp = delta_fixed_point(&p, &rates, q);
                let br = iterate_best_responses(&p, &rates, q, 1e-3, 50).expect("converges");
                for side in Side::ALL {
                    for i in 0..2 {
                        assert!(
                            (fp.get(side, i) - br.get(side, i)).abs() <= 1e-3 + 1e-12,
                            "a={a} b={b} {side:?} maker {i}: {} vs {}",
                            fp.get(side, i),
                            br.get(side, i)
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn hamiltonian_all_quotes_at_bound() {
        let p = baseline();
        let quotes = QuoteMatrix::uniform(p.delta_inf);
        let g = p.gamma[0];
        let expected: f64 = (0..2)
            .map(|j| 2.0 * (1.0 - (-g * p.delta_inf).exp()) / g * intensity(&p, j, p.delta_inf))
            .sum();
        let h = hamiltonian(&p, 0, &quotes, &RateVector::ZERO, InventoryPair::default());
        assert!((h - expected).abs() < 1e-12 * expected.abs().max(1e-300));
    }

    #[test]
    fn hamiltonian_transcription() {
        // independent scalar transcription of h^1 for one hand-picked instance
        let p = baseline();
        let mut z = RateVector::ZERO;
        let vals = [0.1, -0.2, 0.05, 0.3, -0.1, 0.25, 0.0, -0.05];
        let mut n = 0;
        for side in Side::ALL {
            for i in 0..2 {
                for j in 0..2 {
                    z.set(side, i, j, vals[n]);
                    n += 1;
                }
            }
        }
        let quotes = QuoteMatrix { delta: [[0.12, 0.18], [0.2, 0.09]] };
        let q = InventoryPair::new(-1, 3);
        let (g, b, k, s) = (p.gamma[1], p.beta, p.kappa, p.sigma);
        let lam = |j: usize, d: f64| p.a[j] * (-(k / s) * (d + p.c[j])).exp();
        let mut expected = 0.0;
        // bid: own maker 1 at 0.18, best 0.12
        let cap = 0.18 - b * (0.18 - 0.12);
        expected += (1.0 - (-g * (0.05 + cap)).exp()) / g * lam(0, 0.18);
        expected += (1.0 - (-g * (0.3 + cap)).exp()) / g * lam(1, 0.18);
        expected += (1.0 - (-g * 0.1f64).exp()) / g * lam(0, 0.12);
        expected += (1.0 - (-g * -0.2f64).exp()) / g * lam(1, 0.12);
        // ask: own maker 1 at best 0.09
        expected += (1.0 - (-g * (0.0 + 0.09)).exp()) / g * lam(0, 0.09);
        expected += (1.0 - (-g * (-0.05 + 0.09)).exp()) / g * lam(1, 0.09);
        expected += (1.0 - (-g * -0.1f64).exp()) / g * lam(0, 0.2);
        expected += (1.0 - (-g * 0.25f64).exp()) / g * lam(1, 0.2);
        let h = hamiltonian(&p, 1, &quotes, &z, q);
        assert!((h - expected).abs() < 1e-12 * expected.abs());
    }

    #[test]
    fn hamiltonian_at_full_long_cap_drops_bid() {
        let p = baseline();
        let q = InventoryPair::new(p.q_bar, p.q_bar);
        let mut quotes = QuoteMatrix::uniform(0.15);
        quotes.set(Side::Bid, 0, p.delta_inf);
        quotes.set(Side::Bid, 1, p.delta_inf);
        let z = RateVector {
            z_n: [[[0.3; 2]; 2]; 2],
            z_s: 0.0,
        };
        for maker in 0..2 {
            assert_eq!(hamiltonian_side(&p, maker, Side::Bid, &quotes, &z, q), 0.0);
        }
        let rates = [z, z];
        let big_h = equilibrium_hamiltonian(&p, 0, &rates, q);
        let ask_only = hamiltonian_side(&p, 0, Side::Ask, &delta_fixed_point(&p, &rates, q), &z, q);
        assert_eq!(big_h, ask_only);
    }

    #[test]
    fn equilibrium_hamiltonian_symmetric_at_zero() {
        let p = baseline();
        let rates = [RateVector::ZERO; 2];
        let q = InventoryPair::default();
        let h0 = equilibrium_hamiltonian(&p, 0, &rates, q);
        let h1 = equilibrium_hamiltonian(&p, 1, &rates, q);
        assert_eq!(h0, h1);
    }

    fn arb_rates() -> impl Strategy<Value = [RateVector; 2]> {
        proptest::collection::vec(-1.0f64..1.0, 18).prop_map(|v| {
            let mut r = [RateVector::ZERO; 2];
            let mut n = 0;
            for rv in r.iter_mut() {
                for side in Side::ALL {
                    for i in 0..2 {
                        for j in 0..2 {
                            rv.set(side, i, j, v[n]);
                            n += 1;
                        }
                    }
                }
                rv.z_s = v[n];
                n += 1;
            }
            r
        })
    }

    fn arb_q() -> impl Strategy<Value = InventoryPair> {
        (-5i32..=5, -5i32..=5).prop_map(|(a, b)| InventoryPair::new(a, b))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn boundary_rule_always_holds(rates in arb_rates(), q in arb_q()) {
            let p = baseline();
            let quotes = delta_fixed_point(&p, &rates, q);
            prop_assert!(quotes.check_admissible(&p, q).is_ok());
        }

        #[test]
        fn sup_dominates_mesh(rates in arb_rates(), q in arb_q(), maker in 0usize..2) {
            // H^i(z, q) >= h^i(d, Delta^{other}, z^i, q) for alternatives d on a coarse mesh
            let p = baseline();
            let fp = delta_fixed_point(&p, &rates, q);
            let big_h = hamiltonian(&p, maker, &fp, &rates[maker], q);
            let mut alt = fp;
            for side in Side::ALL {
                if q.blocked(side, maker, p.q_bar) { continue; }
                let mut d = -1.0;
                while d <= 2.0 {
                    alt.set(side, maker, d);
                    let h = hamiltonian(&p, maker, &alt, &rates[maker], q);
                    prop_assert!(h <= big_h + 1e-9 * big_h.abs().max(1.0), "{side:?} d={d}: {h} > {big_h}");
                    d += 0.01;
                }
                alt.set(side, maker, fp.get(side, maker));
            }
        }

        #[test]
        fn maker_swap_equivariance(rates in arb_rates(), q in arb_q()) {
            let p = baseline();
            let fp = delta_fixed_point(&p, &rates, q);
            let mut swapped = [RateVector::ZERO; 2];
            for l in 0..2 {
                for side in Side::ALL {
                    for i in 0..2 {
                        for j in 0..2 {
                            swapped[1 - l].set(side, 1 - i, 1 - j, rates[l].get(side, i, j));
                        }
                    }
                }
            }
            let sw = delta_fixed_point(&p, &swapped, q.swapped());
            for side in Side::ALL {
                for i in 0..2 {
                    prop_assert!((fp.get(side, i) - sw.get(side, 1 - i)).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn own_rate_lowers_own_quote(rates in arb_rates(), q in arb_q(), bump in 0.0f64..0.5) {
            let p = baseline();
            for side in Side::ALL {
                for i in 0..2 {
                    let before = delta_side(&p, side, [rates[0].pair(side, 0), rates[1].pair(side, 1)], q)[i];
                    let mut r = rates;
                    let pair = r[i].pair(side, i);
                    r[i].set(side, i, 0, pair[0] + bump);
                    r[i].set(side, i, 1, pair[1] + bump);
                    let after = delta_side(&p, side, [r[0].pair(side, 0), r[1].pair(side, 1)], q)[i];
                    prop_assert!(after <= before + 1e-12);
                }
            }
        }
    }

    #[test]
    fn bid_ask_mirror_at_zero_rates() {
        let p = baseline();
        let rates = [RateVector::ZERO; 2];
        for q0 in -p.q_bar..=p.q_bar {
            for q1 in -p.q_bar..=p.q_bar {
                let q = InventoryPair::new(q0, q1);
                let a = delta_fixed_point(&p, &rates, q);
                let b = delta_fixed_point(&p, &rates, q.mirrored());
                for i in 0..2 {
                    assert_eq!(a.get(Side::Bid, i), b.get(Side::Ask, i));
                }
            }
        }
    }
}
