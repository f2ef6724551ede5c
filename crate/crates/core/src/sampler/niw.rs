//! Conjugate Normal-Inverse-Wishart updates for the weight and bias priors.
//!
//! Weights into each target electrode `n` share a Gaussian prior
//! `N(mu_w[n], S_w[n])`; all biases share `N(mu_b, S_b)`. Both are scalar, so
//! the inverse-Wishart reduces to an inverse-gamma on the variance:
//! `S ~ InvGamma(nu/2, Psi/2)`, `mu | S ~ N(m0, S/kappa0)`.

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::model::{HyperParams, NiwPrior};

/// Mean and variance of a scalar Gaussian prior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianPrior {
    pub mean: f64,
    pub var: f64,
}

impl GaussianPrior {
    pub fn new(mean: f64, var: f64) -> Self {
        Self { mean, var }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        self.mean + self.var.sqrt() * z
    }
}

/// Current weight prior for every target plus the shared bias prior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperState {
    pub weight: Vec<GaussianPrior>,
    pub bias: GaussianPrior,
}

impl HyperState {
    /// The fixed values carried by `hp`, replicated for `n` targets.
    pub fn fixed(hp: &HyperParams, n: usize) -> Self {
        Self {
            weight: vec![GaussianPrior::new(hp.mu_w, hp.s_w); n],
            bias: GaussianPrior::new(hp.mu_b, hp.s_b),
        }
    }
}

/// Conjugate posterior of the NIW prior after observing `obs`.
pub fn niw_posterior(prior: &NiwPrior, obs: &[f64]) -> NiwPrior {
    if obs.is_empty() {
        return *prior;
    }
    let k = obs.len() as f64;
    let mean = obs.iter().sum::<f64>() / k;
    let ss: f64 = obs.iter().map(|x| (x - mean).powi(2)).sum();
    let kappa = prior.kappa + k;
    NiwPrior {
        mean: (prior.kappa * prior.mean + k * mean) / kappa,
        kappa,
        scale: prior.scale + ss + prior.kappa * k / kappa * (mean - prior.mean).powi(2),
        dof: prior.dof + k,
    }
}

/// Draw `(mu, S)` from a scalar NIW distribution.
pub fn sample_niw<R: Rng + ?Sized>(params: &NiwPrior, rng: &mut R) -> GaussianPrior {
    let precision = Gamma::new(0.5 * params.dof, 2.0 / params.scale)
        .expect("NIW parameters validated")
        .sample(rng);
    let var = 1.0 / precision;
    let z: f64 = StandardNormal.sample(rng);
    GaussianPrior::new(params.mean + (var / params.kappa).sqrt() * z, var)
}

/// Resample the hyperparameters given the included weights of every target
/// (`included[n]` lists the weights of edges currently into `n`) and the bias
/// vector. With `resample == false` the fixed values of `hp` are returned.
pub fn resample_niw_hyperparameters<R: Rng + ?Sized>(
    included: &[Vec<f64>],
    bias: &[f64],
    hp: &HyperParams,
    resample: bool,
    rng: &mut R,
) -> HyperState {
    if !resample {
        return HyperState::fixed(hp, included.len());
    }
    let weight = included
        .iter()
        .map(|w| sample_niw(&niw_posterior(&hp.niw, w), rng))
        .collect();
    let bias = sample_niw(&niw_posterior(&hp.niw, bias), rng);
    HyperState { weight, bias }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampler::streams::{stream, Purpose};

    #[test]
    fn empty_observations_keep_prior() {
        let prior = NiwPrior::default();
        assert_eq!(niw_posterior(&prior, &[]), prior);
    }

    #[test]
    fn mean_update_formula() {
        let prior = NiwPrior::default();
        let post = niw_posterior(&prior, &[0.7; 5]);
        assert!((post.mean - (1.0 * 0.0 + 5.0 * 0.7) / (1.0 + 5.0)).abs() < 1e-15);
        assert_eq!(post.kappa, 6.0);
        assert_eq!(post.dof, 8.0);
        // no spread, only the shrinkage term
        assert!((post.scale - (1.0 + 5.0 / 6.0 * 0.49)).abs() < 1e-12);
    }

    #[test]
    fn fixed_mode_returns_configured_values() {
        let hp = HyperParams::real_data();
        let mut rng = stream(0, Purpose::Hyper, 0, 0);
        let h =
            resample_niw_hyperparameters(&[vec![3.0], vec![]], &[0.0, 1.0], &hp, false, &mut rng);
        assert_eq!(h.weight[0].var, 1.0);
        assert_eq!(h.weight[1].mean, 1.0);
        assert_eq!(h.bias.mean, -2.0);
        assert_eq!(h.bias.var, 1.0);
    }

    #[test]
    fn prior_draws_match_moments() {
        // NIW(0, 1, 1, 3): E[S] = Psi/(nu - 2) = 1, E[mu] = 0
        let prior = NiwPrior::default();
        let mut rng = stream(5, Purpose::Hyper, 0, 0);
        let n = 200_000;
        let draws: Vec<GaussianPrior> = (0..n).map(|_| sample_niw(&prior, &mut rng)).collect();
        let mean_mu = draws.iter().map(|d| d.mean).sum::<f64>() / n as f64;
        // E[1/S] = nu/Psi = 3 has finite variance, unlike S itself
        let mean_prec = draws.iter().map(|d| 1.0 / d.var).sum::<f64>() / n as f64;
        assert!(mean_mu.abs() < 0.02, "{mean_mu}");
        assert!((mean_prec - 3.0).abs() < 0.05, "{mean_prec}");
    }

    #[test]
    fn posterior_concentrates_on_data() {
        let prior = NiwPrior::default();
        let obs: Vec<f64> = (0..400)
            .map(|i| 2.0 + 0.5 * ((i % 7) as f64 - 3.0) / 3.0)
            .collect();
        let post = niw_posterior(&prior, &obs);
        let mut rng = stream(6, Purpose::Hyper, 0, 0);
        let mean_mu = (0..2000)
            .map(|_| sample_niw(&post, &mut rng).mean)
            .sum::<f64>()
            / 2000.0;
        assert!((mean_mu - 2.0).abs() < 0.02);
    }
}
