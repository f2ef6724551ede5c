//! Pólya-Gamma PG(1, c) variates.
//!
//! Conditioning on `omega ~ PG(1, psi)` turns a logistic-Bernoulli
//! observation into a Gaussian factor in `psi`:
//! `sigma(psi)^x (1 - sigma(psi))^(1-x) ∝ E[exp((x - 1/2) psi - omega psi^2 / 2)]`.
//!
//! The exact sampler is Devroye's alternating-series rejection scheme for
//! the Jacobi distribution `J*(1, c/2)` with `omega = J*/4`: proposals come
//! from a two-piece envelope (truncated inverse Gaussian left of
//! `t = 0.64`, shifted exponential right of it) and are accepted by bracketing
//! the target density between consecutive partial sums.

use std::f64::consts::{FRAC_2_PI, PI};

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

const TRUNC: f64 = 0.64;
const TRUNC_RECIP: f64 = 1.0 / TRUNC;
const PI_SQ: f64 = PI * PI;

/// Number of terms used by the truncated-sum sampler.
pub const DEFAULT_SERIES_TERMS: usize = 200;

/// How PG(1, c) variates are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum PgMethod {
    /// Exact rejection sampler.
    #[default]
    Exact,
    /// Truncated sum of weighted exponentials with the tail mean added back.
    TruncatedSum { terms: usize },
}

/// Mean of PG(1, c): `tanh(c/2) / (2c)`, with limit 1/4 at `c = 0`.
pub fn pg_mean(c: f64) -> f64 {
    let c = c.abs();
    if c < 1e-6 {
        // series: 1/4 - c^2/48 + ...
        0.25 - c * c / 48.0
    } else {
        (0.5 * c).tanh() / (2.0 * c)
    }
}

/// Draw from PG(1, c) with the requested method.
pub fn sample_pg<R: Rng + ?Sized>(c: f64, method: PgMethod, rng: &mut R) -> f64 {
    match method {
        PgMethod::Exact => sample_polya_gamma(c, rng),
        PgMethod::TruncatedSum { terms } => sample_polya_gamma_series(c, terms, rng),
    }
}

/// Exact draw from PG(1, c). Always strictly positive.
pub fn sample_polya_gamma<R: Rng + ?Sized>(c: f64, rng: &mut R) -> f64 {
    let z = 0.5 * c.abs();
    let fz = 0.125 * PI_SQ + 0.5 * z * z;
    let p_right = right_tail_mass(z, fz);
    loop {
        let x = if rng.random::<f64>() < p_right {
            let e: f64 = Exp1.sample(rng);
            TRUNC + e / fz
        } else {
            truncated_inverse_gaussian(z, rng)
        };
        let mut s = series_coef(0, x);
        let y = rng.random::<f64>() * s;
        let mut n = 0;
        loop {
            n += 1;
            if n % 2 == 1 {
                s -= series_coef(n, x);
                if y <= s {
                    return 0.25 * x;
                }
            } else {
                s += series_coef(n, x);
                if y > s {
                    break;
                }
            }
        }
    }
}

/// Approximate PG(1, c) draw from the first `terms` terms of its
/// infinite-convolution representation,
/// `omega = 1/(2 pi^2) sum_k g_k / ((k - 1/2)^2 + c^2/(4 pi^2))`,
/// plus the expected value of the dropped tail so the mean is exact.
pub fn sample_polya_gamma_series<R: Rng + ?Sized>(c: f64, terms: usize, rng: &mut R) -> f64 {
    let shift = c * c / (4.0 * PI_SQ);
    let mut draw = 0.0;
    let mut head_mean = 0.0;
    for k in 1..=terms.max(1) {
        let d = (k as f64 - 0.5).powi(2) + shift;
        let g: f64 = Exp1.sample(rng);
        draw += g / d;
        head_mean += 1.0 / d;
    }
    let scale = 1.0 / (2.0 * PI_SQ);
    let tail = (pg_mean(c) - scale * head_mean).max(0.0);
    scale * draw + tail
}

/// Probability that a proposal comes from the exponential piece (`x > t`).
fn right_tail_mass(z: f64, fz: f64) -> f64 {
    let t = TRUNC;
    let root = TRUNC_RECIP.sqrt();
    let b = root * (t * z - 1.0);
    let a = -root * (t * z + 1.0);
    let q_over_p = if z < 40.0 {
        let ez = z.exp();
        2.0 * FRAC_2_PI * fz * (fz * t).exp() * (normal_cdf(b) / ez + ez * normal_cdf(a))
    } else {
        // log space: exp(fz * t) overflows long before the product does
        let x0 = fz.ln() + fz * t;
        let xb = x0 - z + normal_cdf(b).ln();
        let xa = x0 + z + normal_cdf(a).ln();
        2.0 * FRAC_2_PI * (xb.exp() + xa.exp())
    };
    1.0 / (1.0 + q_over_p)
}

fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * std::f64::consts::FRAC_1_SQRT_2)
}

/// Inverse Gaussian with mean `1/z` and shape 1, truncated to `(0, t)`.
fn truncated_inverse_gaussian<R: Rng + ?Sized>(z: f64, rng: &mut R) -> f64 {
    let t = TRUNC;
    let mut x = t + 1.0;
    if TRUNC_RECIP > z {
        // mean beyond the truncation point: propose from the z = 0 case
        // (a truncated Levy variate) and correct with exp(-z^2 x / 2).
        let mut alpha = 0.0;
        while rng.random::<f64>() > alpha {
            let mut e1: f64 = Exp1.sample(rng);
            let mut e2: f64 = Exp1.sample(rng);
            while e1 * e1 > 2.0 * e2 / t {
                e1 = Exp1.sample(rng);
                e2 = Exp1.sample(rng);
            }
            let d = 1.0 + e1 * t;
            x = t / (d * d);
            alpha = (-0.5 * z * z * x).exp();
        }
    } else {
        let mu = 1.0 / z;
        while x > t {
            let n: f64 = StandardNormal.sample(rng);
            let mu_y = mu * n * n;
            let half_mu = 0.5 * mu;
            x = mu + half_mu * mu_y - half_mu * (4.0 * mu_y + mu_y * mu_y).sqrt();
            if rng.random::<f64>() > mu / (mu + x) {
                x = mu * mu / x;
            }
        }
    }
    x
}

/// n-th coefficient of the alternating series for the `J*(1)` density,
/// using the small-x representation left of `t` and the large-x one right of it.
#[inline]
fn series_coef(n: usize, x: f64) -> f64 {
    let half = n as f64 + 0.5;
    let k = half * PI;
    if x > TRUNC {
        k * (-0.5 * k * k * x).exp()
    } else if x > 0.0 {
        // (2 / (pi x))^(3/2) * k * exp(-2 half^2 / x)
        let r = FRAC_2_PI / x;
        r * r.sqrt() * k * (-2.0 * half * half / x).exp()
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampler::streams::{stream, Purpose};

    fn mean_and_se(draws: &[f64]) -> (f64, f64) {
        let n = draws.len() as f64;
        let mean = draws.iter().sum::<f64>() / n;
        let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (mean, (var / n).sqrt())
    }

    #[test]
    fn mean_formula() {
        assert_eq!(pg_mean(0.0), 0.25);
        assert!((pg_mean(2.0) - 1.0f64.tanh() / 4.0).abs() < 1e-15);
        assert!((pg_mean(2.0) - 0.190399).abs() < 1e-6);
        assert!((pg_mean(1e-7) - 0.25).abs() < 1e-14);
        assert_eq!(pg_mean(-3.0), pg_mean(3.0));
        let mut prev = f64::INFINITY;
        for c in [0.0, 0.5, 1.0, 2.0, 4.0, 8.0, 50.0] {
            assert!(pg_mean(c) < prev);
            prev = pg_mean(c);
        }
    }

    #[test]
    fn exact_sampler_matches_mean() {
        let mut rng = stream(1, Purpose::Auxiliary, 0, 0);
        for c in [0.0, 2.0, -3.5] {
            let draws: Vec<f64> = (0..100_000)
                .map(|_| sample_polya_gamma(c, &mut rng))
                .collect();
            assert!(draws.iter().all(|&d| d > 0.0 && d.is_finite()));
            let (mean, se) = mean_and_se(&draws);
            assert!(
                (mean - pg_mean(c)).abs() < 3.0 * se,
                "c={c}: mean {mean} vs {} (se {se})",
                pg_mean(c)
            );
        }
    }

    #[test]
    fn exact_sampler_variance() {
        // Var PG(1, c) = (sinh c - c) / (4 c^3 cosh^2(c/2)); 1/24 at c = 0
        let mut rng = stream(2, Purpose::Auxiliary, 0, 0);
        for c in [0.0f64, 1.5] {
            let draws: Vec<f64> = (0..100_000)
                .map(|_| sample_polya_gamma(c, &mut rng))
                .collect();
            let (mean, _) = mean_and_se(&draws);
            let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / 99_999.0;
            let expected = if c == 0.0 {
                1.0 / 24.0
            } else {
                (c.sinh() - c) / (4.0 * c.powi(3) * (0.5 * c).cosh().powi(2))
            };
            assert!(
                (var - expected).abs() / expected < 0.03,
                "c={c}: {var} vs {expected}"
            );
        }
    }

    #[test]
    fn extreme_tilts_stay_finite() {
        let mut rng = stream(3, Purpose::Auxiliary, 0, 0);
        for c in [1e-12, 30.0, 300.0, 700.0, -700.0] {
            for _ in 0..100 {
                let d = sample_polya_gamma(c, &mut rng);
                assert!(d > 0.0 && d.is_finite(), "c={c} gave {d}");
            }
        }
    }

    #[test]
    fn truncated_sum_mean_error_is_tiny() {
        // the tail correction makes the expected value exact up to rounding
        for c in [0.0, 1.0, 2.0, 5.0, 40.0] {
            let scale = 1.0 / (2.0 * PI_SQ);
            let shift = c * c / (4.0 * PI_SQ);
            let head: f64 = (1..=DEFAULT_SERIES_TERMS)
                .map(|k| scale / ((k as f64 - 0.5).powi(2) + shift))
                .sum();
            let tail = (pg_mean(c) - head).max(0.0);
            assert!(((head + tail) - pg_mean(c)).abs() / pg_mean(c) < 1e-4);
        }
        let mut rng = stream(4, Purpose::Auxiliary, 0, 0);
        let draws: Vec<f64> = (0..100_000)
            .map(|_| sample_polya_gamma_series(2.0, DEFAULT_SERIES_TERMS, &mut rng))
            .collect();
        let (mean, se) = mean_and_se(&draws);
        assert!((mean - pg_mean(2.0)).abs() < 3.0 * se);
    }
}
