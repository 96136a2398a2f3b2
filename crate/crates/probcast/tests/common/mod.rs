//! Shared test oracles, independent of the library's filtering code paths.
//!
//! A linear-Gaussian state-space model implies a joint Gaussian over the
//! observations; its moments follow from the recursions directly, so the
//! marginal log-likelihood and any conditional can be computed densely and
//! compared against the Kalman implementations.

use nalgebra::{DMatrix, DVector};
use probcast::ssm::SsmParams;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, StandardNormal};

pub struct JointGaussian {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

/// Joint distribution of the full observation vector implied by the model,
/// assembled from first principles (latent moment recursions, no filtering).
pub fn joint_observation_distribution(params: &SsmParams, len: usize) -> JointGaussian {
    let mut latent_means: Vec<DVector<f64>> = Vec::with_capacity(len);
    latent_means.push(params.prior_mean.clone());
    for t in 0..len - 1 {
        let next = params.step(t).transition.clone() * &latent_means[t];
        latent_means.push(next);
    }

    // cross[i][j] = Cov(x_i, x_j) for j >= i.
    let mut cross: Vec<Vec<DMatrix<f64>>> = vec![Vec::new(); len];
    cross[0].push(params.prior_cov());
    for j in 0..len - 1 {
        let f = &params.step(j).transition;
        let g = &params.step(j).innovation;
        for i in 0..=j {
            let next = &cross[i][j - i] * f.transpose();
            cross[i].push(next);
        }
        let own = f * &cross[j][0] * f.transpose() + g * g.transpose();
        cross[j + 1].insert(0, own);
    }

    let mut mean = DVector::zeros(len);
    let mut cov = DMatrix::zeros(len, len);
    for i in 0..len {
        let si = params.step(i);
        mean[i] = si.emission.dot(&latent_means[i]) + si.offset;
        for j in i..len {
            let sj = params.step(j);
            let mut v = (si.emission.transpose() * &cross[i][j - i] * &sj.emission)[(0, 0)];
            if i == j {
                v += si.obs_noise * si.obs_noise;
            }
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    JointGaussian { mean, cov }
}

/// Multivariate normal log-density of the observed subvector.
pub fn dense_log_likelihood(joint: &JointGaussian, z: &[Option<f64>]) -> f64 {
    let observed: Vec<usize> = (0..z.len()).filter(|i| z[*i].is_some()).collect();
    if observed.is_empty() {
        return 0.0;
    }
    let n = observed.len();
    let mean = DVector::from_fn(n, |i, _| joint.mean[observed[i]]);
    let cov = DMatrix::from_fn(n, n, |i, j| joint.cov[(observed[i], observed[j])]);
    let x = DVector::from_fn(n, |i, _| z[observed[i]].unwrap());

    let chol = cov.cholesky().expect("oracle covariance must be SPD");
    let diff = x - mean;
    let solved = chol.solve(&diff);
    let quad = diff.dot(&solved);
    let logdet: f64 = chol.l().diagonal().iter().map(|d| 2.0 * d.ln()).sum();
    -0.5 * (n as f64 * (2.0 * std::f64::consts::PI).ln() + logdet + quad)
}

/// Gaussian conditioning: mean and variance of component `target` given the
/// observed components.
pub fn dense_conditional(joint: &JointGaussian, z: &[Option<f64>], target: usize) -> (f64, f64) {
    assert!(z[target].is_none(), "conditioning target must be unobserved");
    let observed: Vec<usize> = (0..z.len()).filter(|i| z[*i].is_some()).collect();
    assert!(!observed.is_empty());
    let n = observed.len();
    let mean_o = DVector::from_fn(n, |i, _| joint.mean[observed[i]]);
    let cov_oo = DMatrix::from_fn(n, n, |i, j| joint.cov[(observed[i], observed[j])]);
    let cov_to = DMatrix::from_fn(1, n, |_, j| joint.cov[(target, observed[j])]);
    let x = DVector::from_fn(n, |i, _| z[observed[i]].unwrap());

    let chol = cov_oo.cholesky().expect("oracle covariance must be SPD");
    let diff = x - mean_o;
    let mean = joint.mean[target] + (&cov_to * chol.solve(&diff))[(0, 0)];
    let var = joint.cov[(target, target)] - (&cov_to * chol.solve(&cov_to.transpose()))[(0, 0)];
    (mean, var)
}

/// A random, well-conditioned state-space parameter set for fuzzing.
pub fn random_ssm(rng: &mut ChaCha8Rng, len: usize) -> SsmParams {
    use probcast::ssm::StepParams;
    let dim = rng.random_range(1..=3usize);
    let step = StepParams {
        transition: DMatrix::from_fn(dim, dim, |_, _| rng.random_range(-0.9..0.9)),
        innovation: DVector::from_fn(dim, |_, _| rng.random_range(-1.0..1.0)),
        emission: DVector::from_fn(dim, |_, _| rng.random_range(-1.5..1.5)),
        offset: rng.random_range(-2.0..2.0),
        obs_noise: rng.random_range(0.1..1.5),
    };
    SsmParams::time_invariant(
        DVector::from_fn(dim, |_, _| rng.random_range(-2.0..2.0)),
        DVector::from_fn(dim, |_, _| rng.random_range(0.1..1.5)),
        step,
        len,
    )
    .expect("random parameters are valid")
}

/// Simulate observations from the model equations (independent of any
/// filtering code).
pub fn simulate_ssm(params: &SsmParams, len: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = StandardNormal;
    let dim = params.latent_dim();
    let mut state = DVector::from_fn(dim, |i, _| {
        let draw: f64 = normal.sample(&mut rng);
        params.prior_mean[i] + params.prior_scale[i] * draw
    });
    let mut out = Vec::with_capacity(len);
    for t in 0..len {
        let sp = params.step(t);
        let eps: f64 = normal.sample(&mut rng);
        out.push(sp.emission.dot(&state) + sp.offset + sp.obs_noise * eps);
        let innov: f64 = normal.sample(&mut rng);
        state = &sp.transition * state + &sp.innovation * innov;
    }
    out
}

