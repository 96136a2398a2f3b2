//! Maximum-likelihood fitting of preset state-space models.
//!
//! Positive parameters are log-reparameterized and the negative marginal
//! log-likelihood is minimized with Nelder-Mead, which is derivative-free
//! and deterministic. The returned likelihood is never below the one at
//! the data-driven initialization.

use super::{kalman_filter, PresetParams, SsmPreset};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct FitResult {
    pub params: PresetParams,
    pub log_likelihood: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// Fit a preset to a partially observed series. `max_iters` bounds the
/// Nelder-Mead iterations; on non-convergence the best point so far is
/// returned with `converged = false`.
pub fn fit_mle(preset: &SsmPreset, z: &[Option<f64>], max_iters: usize) -> Result<FitResult> {
    preset.validate()?;
    if z.len() < 2 {
        return Err(Error::validation("fitting requires a series of length >= 2"));
    }
    let init = preset.initial_params(z)?;
    let x0 = encode(&init);

    let objective = |x: &[f64]| -> f64 {
        let params = decode(preset, x);
        match preset.expand(&params, z.len()) {
            Ok(ssm) => match kalman_filter(&ssm, z) {
                Ok(result) if result.log_likelihood.is_finite() => -result.log_likelihood,
                _ => f64::INFINITY,
            },
            Err(_) => f64::INFINITY,
        }
    };

    let f0 = objective(&x0);
    if !f0.is_finite() {
        return Err(Error::numerics(None, "objective is non-finite at the initialization".to_string()));
    }

    let nm = nelder_mead(&objective, &x0, max_iters, 1e-10);
    // Guaranteed by construction, but cheap to assert in debug builds.
    debug_assert!(nm.best_value <= f0 + 1e-12);

    Ok(FitResult {
        params: decode(preset, &nm.best_point),
        log_likelihood: -nm.best_value,
        converged: nm.converged,
        iterations: nm.iterations,
    })
}

/// Unconstrained encoding: log for positive parameters, identity for means.
fn encode(params: &PresetParams) -> Vec<f64> {
    let mut x = Vec::with_capacity(2 + params.innovations.len() + params.prior_mean.len());
    x.push(params.obs_noise.max(1e-12).ln());
    for g in &params.innovations {
        x.push(g.max(1e-12).ln());
    }
    x.extend_from_slice(&params.prior_mean);
    x.push(params.prior_scale.max(1e-12).ln());
    x
}

fn decode(preset: &SsmPreset, x: &[f64]) -> PresetParams {
    let n_innov = preset.innovation_count();
    let dim = preset.latent_dim();
    let bounded_exp = |v: f64| v.min(300.0).exp();
    PresetParams {
        obs_noise: bounded_exp(x[0]),
        innovations: x[1..1 + n_innov].iter().map(|v| bounded_exp(*v)).collect(),
        prior_mean: x[1 + n_innov..1 + n_innov + dim].to_vec(),
        prior_scale: bounded_exp(x[1 + n_innov + dim]),
    }
}

struct NmOutcome {
    best_point: Vec<f64>,
    best_value: f64,
    converged: bool,
    iterations: usize,
}

/// Standard Nelder-Mead (reflection 1, expansion 2, contraction 0.5,
/// shrink 0.5) on an initial simplex of unit-ish perturbations.
fn nelder_mead(f: &dyn Fn(&[f64]) -> f64, x0: &[f64], max_iters: usize, ftol: f64) -> NmOutcome {
    let n = x0.len();
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((x0.to_vec(), f(x0)));
    for i in 0..n {
        let mut p = x0.to_vec();
        p[i] += 0.5;
        let v = f(&p);
        simplex.push((p, v));
    }

    let mut converged = false;
    let mut iterations = 0;
    for _ in 0..max_iters {
        iterations += 1;
        simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));
        let best = simplex[0].1;
        let worst = simplex[n].1;
        if worst.is_finite() && (worst - best).abs() <= ftol * best.abs().max(1.0) {
            converged = true;
            break;
        }

        let mut centroid = vec![0.0; n];
        for (p, _) in &simplex[..n] {
            for (c, v) in centroid.iter_mut().zip(p) {
                *c += v / n as f64;
            }
        }
        let point_at = |coef: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[n].0)
                .map(|(c, w)| c + coef * (c - w))
                .collect()
        };

        let reflected = point_at(1.0);
        let fr = f(&reflected);
        if fr < simplex[0].1 {
            let expanded = point_at(2.0);
            let fe = f(&expanded);
            simplex[n] = if fe < fr { (expanded, fe) } else { (reflected, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (reflected, fr);
        } else {
            let contracted = if fr < simplex[n].1 { point_at(0.5) } else { point_at(-0.5) };
            let fc = f(&contracted);
            if fc < simplex[n].1.min(fr) {
                simplex[n] = (contracted, fc);
            } else {
                // Shrink toward the best point.
                let best_point = simplex[0].0.clone();
                for entry in simplex.iter_mut().skip(1) {
                    let p: Vec<f64> = entry
                        .0
                        .iter()
                        .zip(&best_point)
                        .map(|(x, b)| b + 0.5 * (x - b))
                        .collect();
                    let v = f(&p);
                    *entry = (p, v);
                }
            }
        }
    }

    simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));
    NmOutcome {
        best_point: simplex[0].0.clone(),
        best_value: simplex[0].1,
        converged,
        iterations,
    }
}
