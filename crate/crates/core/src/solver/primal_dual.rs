//! First-order primal-dual iteration for `min_u Σ w g(Ku + X*)`, with
//! triangle weights `w = h²/4` and nodal weights `h²`.
//!
//! The dual update `prox_{σg*}(v) = v − σ J_{1/σ}(v/σ)` is the Yosida
//! approximation `A_{1/σ}(v/σ)`.

use rayon::prelude::*;

use super::{FreeNodes, LoopOutcome, SolveConfig};
use crate::error::Result;
use crate::geometry::PlanePoint;
use crate::grid::functional::{apply_k, apply_kt, drift_samples};
use crate::grid::{BoundaryDatum, GridDomain};
use crate::convex::ConvexIntegrand;

/// Asymmetric soft threshold of the boundary penalty at one node:
/// the prox of `t_up (φ − x)⁺ + t_down (x − φ)⁺`.
#[derive(Clone, Copy, Debug)]
struct BoundaryProx {
    node: usize,
    phi: f64,
    t_up: f64,
    t_down: f64,
}

impl BoundaryProx {
    fn apply(&self, x: f64) -> f64 {
        if x < self.phi - self.t_up {
            x + self.t_up
        } else if x > self.phi + self.t_down {
            x - self.t_down
        } else {
            self.phi
        }
    }
}

fn weighted_norm(w: f64, v: impl Iterator<Item = f64>) -> f64 {
    (w * v.map(|x| x * x).sum::<f64>()).sqrt()
}

/// `relaxed` holds the boundary datum when boundary values are free.
pub(crate) fn minimize(
    g: &ConvexIntegrand,
    d: &GridDomain,
    mut u: Vec<f64>,
    relaxed: Option<&BoundaryDatum>,
    tau: f64,
    sigma: f64,
    cfg: &SolveConfig,
) -> Result<LoopOutcome> {
    let h = d.h();
    let free = FreeNodes::new(d, relaxed.is_some());
    let boundary: Vec<BoundaryProx> = match relaxed {
        None => Vec::new(),
        Some(phi) => d
            .boundary_nodes()
            .iter()
            .map(|b| {
                let s = tau * b.weight / (h * h);
                Ok(BoundaryProx {
                    node: b.node,
                    phi: phi.eval(d.point(b.node)),
                    t_up: s * g.recession_value(b.normal)?,
                    t_down: s * g.recession_value(-b.normal)?,
                })
            })
            .collect::<Result<_>>()?,
    };
    let interior: Vec<usize> = match relaxed {
        None => free.nodes.clone(),
        Some(_) => d.interior_nodes().collect(),
    };
    if free.nodes.is_empty() {
        return Ok(LoopOutcome { values: u, iterations: 0, converged: true, residual_history: Vec::new() });
    }

    let drift = drift_samples(d);
    let (wp, wd) = (h * h, 0.25 * h * h);
    let dual_prox = |p: &mut [PlanePoint], ku: &[PlanePoint]| -> Result<()> {
        p.par_iter_mut().zip(ku.par_iter().zip(drift.par_iter())).try_for_each(|(q, (k, x))| {
            let v = *q + (*k + *x) * sigma;
            *q = g.yosida(sigma.recip(), v * sigma.recip())?;
            Ok(())
        })
    };

    let ku0: Vec<PlanePoint> = apply_k(d, &u).into_iter().zip(&drift).map(|(k, x)| k + *x).collect();
    let mut q: Vec<PlanePoint> = ku0.par_iter().map(|z| g.yosida(h, *z)).collect::<Result<_>>()?;
    let mut u_prev = u.clone();
    let mut u_bar = u.clone();
    let mut history = Vec::new();
    let mut converged = false;

    while history.len() < cfg.max_iters {
        let q_old = q.clone();
        let ku_bar = apply_k(d, &u_bar);
        dual_prox(&mut q, &ku_bar)?;

        let kt = apply_kt(d, &q);
        let mut u_new = u.clone();
        for &k in &interior {
            u_new[k] = u[k] - 0.25 * tau * kt[k];
        }
        for b in &boundary {
            u_new[b.node] = b.apply(u[b.node] - 0.25 * tau * kt[b.node]);
        }

        // residuals of the optimality system at (u_new, q)
        let p_res = weighted_norm(wp, free.nodes.iter().map(|&k| (u[k] - u_new[k]) / tau));
        let mut second: Vec<f64> = u_new.iter().zip(&u).zip(&u_prev).map(|((a, b), c)| a - 2.0 * b + c).collect();
        for (k, x) in second.iter_mut().enumerate() {
            if !d.is_in_domain(k) {
                *x = 0.0;
            }
        }
        let k2 = apply_k(d, &second);
        let d_res = weighted_norm(
            wd,
            q_old.iter().zip(&q).zip(&k2).flat_map(|((a, b), c)| {
                let r = (*a - *b) * sigma.recip() - *c;
                [r.x, r.y]
            }),
        );
        let kt_scale = weighted_norm(wp, free.nodes.iter().map(|&k| 0.25 * kt[k]));
        let ku = apply_k(d, &u_new);
        let ku_scale = weighted_norm(wd, ku.iter().zip(&drift).flat_map(|(k, x)| [k.x + x.x, k.y + x.y]));
        let r = (p_res / (1.0 + kt_scale)).max(d_res / (1.0 + ku_scale));
        history.push(r);

        for k in 0..u.len() {
            u_bar[k] = 2.0 * u_new[k] - u[k];
        }
        u_prev = std::mem::replace(&mut u, u_new);
        if r <= cfg.tol_rel {
            converged = true;
            break;
        }
    }
    Ok(LoopOutcome { values: u, iterations: history.len(), converged, residual_history: history })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn boundary_prox_thresholds() {
        let b = BoundaryProx { node: 0, phi: 1.0, t_up: 0.2, t_down: 0.5 };
        assert_eq!(b.apply(0.0), 0.2);
        assert_eq!(b.apply(0.9), 1.0);
        assert_eq!(b.apply(1.4), 1.0);
        assert_eq!(b.apply(2.0), 1.5);
    }
}
