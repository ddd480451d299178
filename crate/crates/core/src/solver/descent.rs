//! Preconditioned gradient descent with Barzilai–Borwein steps and Armijo
//! backtracking. The preconditioner is the discrete Dirichlet Laplacian on
//! the free nodes.

use super::{BandCholesky, FreeNodes, LoopOutcome, SolveConfig};
use crate::error::{Error, Result};
use crate::grid::functional::{bulk_value, bulk_value_and_gradient, drift_samples};
use crate::grid::{Density, GridDomain};

const ARMIJO: f64 = 1e-4;
const MAX_HALVINGS: usize = 60;

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

struct Previous {
    t: f64,
    slope: f64,
    dir: Vec<f64>,
    grad: Vec<f64>,
}

pub(crate) fn minimize(
    density: &dyn Density,
    d: &GridDomain,
    mut v: Vec<f64>,
    cfg: &SolveConfig,
) -> Result<LoopOutcome> {
    let free = FreeNodes::new(d, false);
    if free.nodes.is_empty() {
        return Ok(LoopOutcome { values: v, iterations: 0, converged: true, residual_history: Vec::new() });
    }
    let chol = BandCholesky::factor(&free.laplacian(d))?;
    let drift = drift_samples(d);
    let restrict = |full: &[f64]| -> Vec<f64> { free.nodes.iter().map(|&k| full[k]).collect() };

    let (mut f, full) = bulk_value_and_gradient(density, d, &v, &drift);
    if !f.is_finite() {
        return Err(Error::Domain("functional is not finite at the initial guess".into()));
    }
    let mut grad = restrict(&full);
    let mut prev: Option<Previous> = None;
    let mut history = Vec::new();
    let mut converged = false;
    let mut trial = v.clone();

    while history.len() < cfg.max_iters {
        let dir: Vec<f64> = chol.solve(&grad).into_iter().map(|x| -x).collect();
        let slope = dot(&grad, &dir);
        let u_scale = 1.0 + sup(&v);
        let dir_sup = sup(&dir);
        if !(slope < 0.0) || dir_sup <= 1e-3 * cfg.tol_rel * u_scale {
            history.push(0.0);
            converged = true;
            break;
        }
        let mut t = match &prev {
            None => 1.0,
            Some(p) => {
                // s = t_prev d_prev, so sᵀPs = −t_prev² slope_prev
                let sps = -p.t * p.t * p.slope;
                let sy: f64 = p.t * p.dir.iter().zip(grad.iter().zip(&p.grad)).map(|(s, (g, g0))| s * (g - g0)).sum::<f64>();
                if sy > 0.0 {
                    (sps / sy).clamp(1e-10, 1e10)
                } else {
                    1.0
                }
            }
        };
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            for (m, &k) in free.nodes.iter().enumerate() {
                trial[k] = v[k] + t * dir[m];
            }
            let f_new = bulk_value(density, d, &trial, &drift);
            if f_new.is_finite() && f_new <= f + ARMIJO * t * slope {
                accepted = Some(f_new);
                break;
            }
            t *= 0.5;
        }
        let Some(f_new) = accepted else {
            // no decrease representable: the direction is at roundoff level
            history.push(dir_sup / u_scale);
            converged = dir_sup <= 1e3 * cfg.tol_rel * u_scale;
            break;
        };
        std::mem::swap(&mut v, &mut trial);
        trial.copy_from_slice(&v);
        let rel_decrease = (f - f_new) / (1.0 + f_new.abs());
        let step = t * dir_sup;
        let rel_step = step / (1.0 + sup(&v));
        history.push(rel_decrease.max(rel_step));
        f = f_new;
        let (_, full) = bulk_value_and_gradient(density, d, &v, &drift);
        let new_grad = restrict(&full);
        prev = Some(Previous { t, slope, dir, grad: std::mem::replace(&mut grad, new_grad) });
        if rel_decrease <= cfg.tol_rel && step <= cfg.tol_rel * (1.0 + sup(&v)) {
            converged = true;
            break;
        }
    }
    Ok(LoopOutcome { values: v, iterations: history.len(), converged, residual_history: history })
}
