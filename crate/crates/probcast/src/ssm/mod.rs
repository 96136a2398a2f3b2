//! Linear innovation state-space models.
//!
//! Dynamics (per step, 0-based array index `t`):
//!
//! ```text
//! x[t+1] = F[t] x[t] + g[t] ε[t]            ε[t]  ~ N(0, 1)
//! z[t]   = a[t]·x[t] + b[t] + σ[t] ε'[t]    ε'[t] ~ N(0, 1)
//! x[0]   ~ N(prior_mean, diag(prior_scale²))
//! ```
//!
//! with independent scalar noises. The Kalman filter integrates out the
//! latent state to evaluate the marginal likelihood; missing observations
//! skip the update (and contribute nothing to the likelihood). The RTS
//! smoother runs backward over the latent chain, then maps through the
//! observation equation to give per-step posterior mean/variance of `z`.

mod fit;
mod presets;

pub use fit::{fit_mle, FitResult};
pub use presets::{PresetParams, SsmPreset};

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, StandardNormal};

use crate::error::{Error, Result};

const LN_2PI: f64 = 1.8378770664093453;
/// Predictive variances at or below this are treated as degenerate.
const DEGENERATE_VAR: f64 = 1e-300;

/// Parameters of one step: transition `F`, innovation loading `g`,
/// emission `a`, offset `b`, observation noise `σ`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepParams {
    pub transition: DMatrix<f64>,
    pub innovation: DVector<f64>,
    pub emission: DVector<f64>,
    pub offset: f64,
    pub obs_noise: f64,
}

impl StepParams {
    fn validate(&self, dim: usize) -> Result<()> {
        if self.transition.nrows() != dim || self.transition.ncols() != dim {
            return Err(Error::validation("transition matrix must be L x L"));
        }
        if self.innovation.len() != dim || self.emission.len() != dim {
            return Err(Error::validation("innovation and emission vectors must have length L"));
        }
        // σ = 0 is allowed for deterministic observation models; the filter
        // rejects it only when it actually degenerates the likelihood.
        if !(self.obs_noise >= 0.0) || !self.offset.is_finite() {
            return Err(Error::validation("obs_noise must be >= 0 and offset finite"));
        }
        let finite = self.transition.iter().all(|v| v.is_finite())
            && self.innovation.iter().all(|v| v.is_finite())
            && self.emission.iter().all(|v| v.is_finite())
            && self.obs_noise.is_finite();
        if !finite {
            return Err(Error::validation("step parameters must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
enum StepSequence {
    Invariant(StepParams),
    Varying(Vec<StepParams>),
}

/// Full parameter set Θ: prior over the initial latent state plus per-step
/// parameters, for `len` observation steps.
#[derive(Debug, Clone, PartialEq)]
pub struct SsmParams {
    pub prior_mean: DVector<f64>,
    /// Component-wise prior standard deviations (diagonal prior covariance).
    pub prior_scale: DVector<f64>,
    steps: StepSequence,
    len: usize,
}

impl SsmParams {
    pub fn time_invariant(
        prior_mean: DVector<f64>,
        prior_scale: DVector<f64>,
        step: StepParams,
        len: usize,
    ) -> Result<Self> {
        let params = SsmParams { prior_mean, prior_scale, steps: StepSequence::Invariant(step), len };
        params.validate()?;
        Ok(params)
    }

    pub fn time_varying(
        prior_mean: DVector<f64>,
        prior_scale: DVector<f64>,
        steps: Vec<StepParams>,
    ) -> Result<Self> {
        let len = steps.len();
        let params = SsmParams { prior_mean, prior_scale, steps: StepSequence::Varying(steps), len };
        params.validate()?;
        Ok(params)
    }

    fn validate(&self) -> Result<()> {
        let dim = self.prior_mean.len();
        if dim == 0 {
            return Err(Error::validation("latent dimension must be >= 1"));
        }
        if self.len == 0 {
            return Err(Error::validation("parameter sequence length must be >= 1"));
        }
        if self.prior_scale.len() != dim {
            return Err(Error::validation("prior_scale must match prior_mean length"));
        }
        if self.prior_scale.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
            return Err(Error::validation("prior_scale components must be >= 0 and finite"));
        }
        match &self.steps {
            StepSequence::Invariant(step) => step.validate(dim)?,
            StepSequence::Varying(steps) => {
                for step in steps {
                    step.validate(dim)?;
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn latent_dim(&self) -> usize {
        self.prior_mean.len()
    }

    /// Step parameters at index `t`; indices past the end clamp to the final
    /// step, which is what forecasting uses to extend time-invariant models.
    pub fn step(&self, t: usize) -> &StepParams {
        match &self.steps {
            StepSequence::Invariant(step) => step,
            StepSequence::Varying(steps) => &steps[t.min(steps.len() - 1)],
        }
    }

    pub fn prior_cov(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.prior_scale.map(|s| s * s))
    }
}

/// Per-step filter output.
#[derive(Debug, Clone)]
pub struct FilterStep {
    /// Mean of the pre-update latent state (given observations before this step).
    pub prior_mean: DVector<f64>,
    /// Covariance of the pre-update latent state.
    pub prior_cov: DMatrix<f64>,
    /// One-step predictive mean of the observation.
    pub predictive_mean: f64,
    /// One-step predictive variance of the observation.
    pub predictive_var: f64,
    /// Log-likelihood contribution (0 at missing steps).
    pub loglik_increment: f64,
    pub observed: bool,
}

/// Full filter pass output.
#[derive(Debug, Clone)]
pub struct FilterResult {
    pub steps: Vec<FilterStep>,
    /// Post-update latent means, one per step.
    pub filtered_means: Vec<DVector<f64>>,
    /// Post-update latent covariances, one per step.
    pub filtered_covs: Vec<DMatrix<f64>>,
    /// Latent posterior after the final transition (state feeding step `len`).
    pub final_mean: DVector<f64>,
    pub final_cov: DMatrix<f64>,
    pub log_likelihood: f64,
}

impl FilterResult {
    /// Negative log-likelihood per observed step (None at missing steps).
    pub fn step_nlls(&self) -> Vec<Option<f64>> {
        self.steps
            .iter()
            .map(|s| if s.observed { Some(-s.loglik_increment) } else { None })
            .collect()
    }
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let t = m.transpose();
    *m += t;
    *m *= 0.5;
}

/// Kalman filter over a partially observed series. Returns per-step state
/// and the total marginal log-likelihood.
pub fn kalman_filter(params: &SsmParams, z: &[Option<f64>]) -> Result<FilterResult> {
    if z.len() != params.len() {
        return Err(Error::validation(format!(
            "series length {} does not match parameter length {}",
            z.len(),
            params.len()
        )));
    }
    let dim = params.latent_dim();
    let mut mean = params.prior_mean.clone();
    let mut cov = params.prior_cov();
    let mut steps = Vec::with_capacity(z.len());
    let mut filtered_means = Vec::with_capacity(z.len());
    let mut filtered_covs = Vec::with_capacity(z.len());
    let mut loglik = 0.0f64;

    for (t, obs) in z.iter().enumerate() {
        let sp = params.step(t);
        let predictive_mean = sp.emission.dot(&mean) + sp.offset;
        let cov_a = &cov * &sp.emission;
        let predictive_var = sp.emission.dot(&cov_a) + sp.obs_noise * sp.obs_noise;

        let prior_mean = mean.clone();
        let prior_cov = cov.clone();

        let mut increment = 0.0;
        if let Some(value) = obs {
            let innovation = value - predictive_mean;
            if predictive_var <= DEGENERATE_VAR {
                // A deterministic observation consistent with the state
                // carries no information; an inconsistent one has no density.
                let scale = value.abs().max(predictive_mean.abs()).max(1.0);
                if innovation.abs() > 1e-9 * scale {
                    return Err(Error::numerics(
                        Some(t),
                        format!("degenerate predictive variance with mismatch (innovation {innovation})"),
                    ));
                }
            } else {
                increment = -0.5 * (LN_2PI + predictive_var.ln() + innovation * innovation / predictive_var);
                if !increment.is_finite() {
                    return Err(Error::numerics(Some(t), format!("non-finite likelihood increment ({increment})")));
                }
                let gain = &cov_a / predictive_var;
                mean += &gain * innovation;
                // Joseph-form update keeps the covariance PSD.
                let ikh = DMatrix::<f64>::identity(dim, dim) - &gain * sp.emission.transpose();
                cov = &ikh * &cov * ikh.transpose()
                    + (sp.obs_noise * sp.obs_noise) * &gain * gain.transpose();
                symmetrize(&mut cov);
            }
        }
        loglik += increment;

        steps.push(FilterStep {
            prior_mean,
            prior_cov,
            predictive_mean,
            predictive_var,
            loglik_increment: increment,
            observed: obs.is_some(),
        });
        filtered_means.push(mean.clone());
        filtered_covs.push(cov.clone());

        // Transition to the state feeding the next observation.
        mean = &sp.transition * &mean;
        cov = &sp.transition * &cov * sp.transition.transpose()
            + &sp.innovation * sp.innovation.transpose();
        symmetrize(&mut cov);
    }

    Ok(FilterResult {
        steps,
        filtered_means,
        filtered_covs,
        final_mean: mean,
        final_cov: cov,
        log_likelihood: loglik,
    })
}

/// Smoothed observation distribution at one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothedPoint {
    pub mean: f64,
    pub variance: f64,
    pub observed: bool,
}

/// RTS smoother: posterior mean and variance of `z[t]` given every observed
/// value. At missing steps this is exactly the Gaussian conditional of the
/// missing observation; at observed steps it is the smoothed signal plus
/// observation noise (the σ → 0 limit is deliberately not taken, so the
/// smoothed mean sits between the filtered prediction and the observation).
pub fn kalman_smooth(params: &SsmParams, z: &[Option<f64>]) -> Result<Vec<SmoothedPoint>> {
    if z.iter().all(|v| v.is_none()) {
        return Err(Error::validation("smoothing requires at least one observed value"));
    }
    let filter = kalman_filter(params, z)?;
    let n = z.len();

    let mut smoothed_means: Vec<DVector<f64>> = vec![DVector::zeros(0); n];
    let mut smoothed_covs: Vec<DMatrix<f64>> = vec![DMatrix::zeros(0, 0); n];
    smoothed_means[n - 1] = filter.filtered_means[n - 1].clone();
    smoothed_covs[n - 1] = filter.filtered_covs[n - 1].clone();

    for t in (0..n - 1).rev() {
        let sp = params.step(t);
        let pred_next_mean = &filter.steps[t + 1].prior_mean;
        let pred_next_cov = &filter.steps[t + 1].prior_cov;

        // J = P_filt F^T (P_pred)^-1, via a PSD solve; a fully degenerate
        // predicted covariance carries no information backward.
        let gain = match psd_solve(pred_next_cov, &(sp.transition.clone() * &filter.filtered_covs[t])) {
            Some(solved) => solved.transpose(),
            None => DMatrix::zeros(params.latent_dim(), params.latent_dim()),
        };

        let dm = &smoothed_means[t + 1] - pred_next_mean;
        smoothed_means[t] = &filter.filtered_means[t] + &gain * dm;
        let dp = &smoothed_covs[t + 1] - pred_next_cov;
        let mut cov = &filter.filtered_covs[t] + &gain * dp * gain.transpose();
        symmetrize(&mut cov);
        smoothed_covs[t] = cov;
    }

    let mut out = Vec::with_capacity(n);
    for t in 0..n {
        let sp = params.step(t);
        let mean = sp.emission.dot(&smoothed_means[t]) + sp.offset;
        let variance =
            sp.emission.dot(&(&smoothed_covs[t] * &sp.emission)) + sp.obs_noise * sp.obs_noise;
        out.push(SmoothedPoint { mean, variance: variance.max(0.0), observed: z[t].is_some() });
    }
    Ok(out)
}

/// Solve `A X = B` for symmetric PSD `A`, with escalating jitter.
fn psd_solve(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let scale = a.diagonal().amax().max(1.0);
    for jitter in [0.0, 1e-12, 1e-9, 1e-6] {
        let mut m = a.clone();
        if jitter > 0.0 {
            for i in 0..m.nrows() {
                m[(i, i)] += jitter * scale;
            }
        }
        if let Some(chol) = Cholesky::new(m) {
            return Some(chol.solve(b));
        }
    }
    None
}

/// A matrix square root `L` with `L Lᵀ = cov`: Cholesky when possible,
/// eigen square root (negative eigenvalues clamped) otherwise.
fn psd_sqrt(cov: &DMatrix<f64>) -> DMatrix<f64> {
    let mut m = cov.clone();
    symmetrize(&mut m);
    if let Some(chol) = Cholesky::new(m.clone()) {
        return chol.l();
    }
    let eig = m.symmetric_eigen();
    let sqrt_vals = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&sqrt_vals)
}

/// Sample future trajectories: draw the latent state from the filtered
/// posterior at the end of the series, then roll the transition and
/// observation equations forward. Time-varying parameter sequences extend
/// by clamping to their final step.
pub fn forecast_sample_paths(
    params: &SsmParams,
    z: &[Option<f64>],
    horizon: usize,
    num_paths: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    if horizon == 0 {
        return Err(Error::validation("horizon must be >= 1"));
    }
    if num_paths == 0 {
        return Err(Error::validation("num_paths must be >= 1"));
    }
    let filter = kalman_filter(params, z)?;
    let root = psd_sqrt(&filter.final_cov);
    let dim = params.latent_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = StandardNormal;

    let mut paths = Vec::with_capacity(num_paths);
    for _ in 0..num_paths {
        let noise = DVector::from_fn(dim, |_, _| normal.sample(&mut rng));
        let mut state = &filter.final_mean + &root * noise;
        let mut path = Vec::with_capacity(horizon);
        for k in 0..horizon {
            let sp = params.step(params.len() + k);
            let obs_noise: f64 = normal.sample(&mut rng);
            path.push(sp.emission.dot(&state) + sp.offset + sp.obs_noise * obs_noise);
            let innov: f64 = normal.sample(&mut rng);
            state = &sp.transition * state + &sp.innovation * innov;
        }
        paths.push(path);
    }
    Ok(paths)
}
