//! Mesh search around the closed-form contract rates.
//!
//! Each rate is moved alone over a symmetric mesh while the others stay at
//! their closed-form values. A rate passes when the mesh maximiser of the
//! exchange's generator lies within one mesh step of it.

use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

use crate::error::Result;
use crate::model::{InventoryPair, Side};
use crate::pde::contracts::{g_price, g_side, SideRates};
use crate::pde::solver::SolveResult;

/// Which rate was varied.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RateComponent {
    Own,
    Cross(usize),
    Price,
}

/// Outcome of one mesh search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Certificate {
    pub exchange: usize,
    pub side: Option<Side>,
    pub component: RateComponent,
    pub t: f64,
    pub q: InventoryPair,
    pub closed_form: f64,
    pub mesh_argmax: f64,
    /// Generator value at the closed form and at the mesh maximiser.
    pub value: f64,
    pub mesh_value: f64,
    pub mesh_step: f64,
}

impl Certificate {
    pub fn passed(&self) -> bool {
        (self.mesh_argmax - self.closed_form).abs() <= self.mesh_step * (1.0 + 1e-9)
    }

    /// Generator gain of the mesh maximiser over the closed form.
    pub fn shortfall(&self) -> f64 {
        (self.mesh_value - self.value).max(0.0)
    }
}

fn mesh_search(f: impl Fn(f64) -> f64, centre: f64, step: f64, half_width: usize) -> (f64, f64) {
    let mut best = (centre, f(centre));
    for k in 1..=half_width {
        for z in [centre - k as f64 * step, centre + k as f64 * step] {
            let v = f(z);
            if v > best.1 {
                best = (z, v);
            }
        }
    }
    best
}

/// Certifies every active rate of every contracting exchange at slice `n`, state `q`.
pub fn certify_state(
    res: &SolveResult,
    n: usize,
    q: InventoryPair,
    step: f64,
    half_width: usize,
) -> Result<Vec<Certificate>> {
    let p = &res.params;
    let grids = res.slice(n);
    let rates = res.rates(n, q)?;
    let t = grids[0].t;
    let mut out = Vec::new();
    for m in (0..2).filter(|&m| res.regime.contracts(m)) {
        let o = 1 - m;
        let g = &grids[m];
        let y = g.at(q);
        let zs = rates[m].z_s;
        let qm = q.get(m);
        let (arg, best) = mesh_search(|z| y * g_price(p, m, z, qm), zs, step, half_width);
        out.push(Certificate {
            exchange: m,
            side: None,
            component: RateComponent::Price,
            t,
            q,
            closed_form: zs,
            mesh_argmax: arg,
            value: y * g_price(p, m, zs, qm),
            mesh_value: best,
            mesh_step: step,
        });
        for side in Side::ALL {
            let base = SideRates {
                own: rates[m].get(side, m, 0),
                cross: rates[m].pair(side, o),
                competitor_own: rates[o].get(side, o, 0),
            };
            let (y_own, y_cross) = (g.after_fill(q, side, m), g.after_fill(q, side, o));
            let eval = |r: SideRates| g_side(p, m, side, r, q, y, y_own, y_cross);
            let v0 = eval(base);
            let mut push = |component, closed_form, (arg, best): (f64, f64)| {
                out.push(Certificate {
                    exchange: m,
                    side: Some(side),
                    component,
                    t,
                    q,
                    closed_form,
                    mesh_argmax: arg,
                    value: v0,
                    mesh_value: best,
                    mesh_step: step,
                })
            };
            if !q.blocked(side, m, p.q_bar) {
                let found = mesh_search(|z| eval(SideRates { own: z, ..base }), base.own, step, half_width);
                push(RateComponent::Own, base.own, found);
            }
            if !q.blocked(side, o, p.q_bar) {
                for j in 0..2 {
                    let found = mesh_search(
                        |z| {
                            let mut cross = base.cross;
                            cross[j] = z;
                            eval(SideRates { cross, ..base })
                        },
                        base.cross[j],
                        step,
                        half_width,
                    );
                    push(RateComponent::Cross(j), base.cross[j], found);
                }
            }
        }
    }
    Ok(out)
}

/// Certificates at `count` random `(t, q)` drawn with `seed`.
pub fn certify_random(
    res: &SolveResult,
    count: usize,
    seed: u64,
    step: f64,
    half_width: usize,
) -> Result<Vec<Certificate>> {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let qb = res.lattice.q_bar;
    let mut out = Vec::new();
    for _ in 0..count {
        let n = rng.gen_range(0..res.steps());
        let q = InventoryPair::new(rng.gen_range(-qb..=qb), rng.gen_range(-qb..=qb));
        out.extend(certify_state(res, n, q, step, half_width)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelParams;
    use crate::pde::{solve, Regime, SolveConfig};

    #[test]
    fn mesh_search_finds_peak() {
        let (z, v) = mesh_search(|z| -(z - 0.0123).powi(2), 0.0, 1e-3, 50);
        assert!((z - 0.012).abs() < 1e-12);
        assert!(v <= 0.0);
    }

    #[test]
    fn price_and_cross_rates_are_certified() {
        let mut p = ModelParams::baseline();
        p.q_bar = 2;
        p.horizon = 0.05;
        let res = solve(&p, Regime::Both, &SolveConfig::with_dt(1e-3)).unwrap();
        let certs = certify_random(&res, 10, 3, 1e-4, 100).unwrap();
        assert!(!certs.is_empty());
        for c in certs.iter().filter(|c| c.component != RateComponent::Own) {
            assert!(c.passed(), "{c:?}");
        }
    }
}
