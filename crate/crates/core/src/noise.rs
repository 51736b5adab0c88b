//! Noise distribution families.
//!
//! Every constructible family has mean exactly zero, a cumulant generating
//! function `φ(t) = log E e^{tZ}` that is finite for all real `t`, and a
//! non-lattice law. Those are the standing assumptions of the asymptotics
//! this crate computes, enforced here at the type level: only Gaussian,
//! centered uniform, and (recentered) Gaussian mixture noises can be built.
//!
//! Tilted sampling is exact per family: `sample_tilted(θ)` draws from
//! `G_θ(dx) = e^{-φ(θ)+θx} F(dx)` with no rejection or approximation layer,
//! so the tilted mean and variance are exactly `φ'(θ)` and `φ''(θ)`.

use rand::Rng;

use crate::error::{Error, Result};
use crate::real::Real;

/// Series cutoff for the removable singularity of the uniform CGF at 0.
const UNIFORM_SERIES_CUTOFF: f64 = 1e-2;

#[derive(Debug, Clone, PartialEq)]
pub enum Family<T> {
    Gaussian { sigma: T },
    CenteredUniform { halfwidth: T },
    /// Components are recentered at construction so the mixture mean is 0.
    GaussianMixture { weights: Vec<T>, means: Vec<T>, sigmas: Vec<T> },
}

/// A zero-mean noise law with exact CGF, derivatives, and samplers.
#[derive(Debug, Clone)]
pub struct NoiseModel<T> {
    family: Family<T>,
    sigma_sq: T,
    support_sup: T,
}

impl<T: Real> NoiseModel<T> {
    /// N(0, σ²).
    pub fn gaussian(sigma: T) -> Result<Self> {
        if !(sigma.is_finite() && sigma > T::zero()) {
            return Err(Error::InvalidParameter(format!(
                "gaussian sigma must be a positive real, got {sigma}"
            )));
        }
        Ok(NoiseModel {
            family: Family::Gaussian { sigma },
            sigma_sq: sigma * sigma,
            support_sup: T::infinity(),
        })
    }

    /// Uniform on [-h, h].
    pub fn centered_uniform(halfwidth: T) -> Result<Self> {
        if !(halfwidth.is_finite() && halfwidth > T::zero()) {
            return Err(Error::InvalidParameter(format!(
                "uniform halfwidth must be a positive real, got {halfwidth}"
            )));
        }
        Ok(NoiseModel {
            family: Family::CenteredUniform { halfwidth },
            sigma_sq: halfwidth * halfwidth / T::lit(3.0),
            support_sup: halfwidth,
        })
    }

    /// Gaussian mixture, recentered so the overall mean is exactly 0.
    ///
    /// `weights` must be a probability vector (sum within 1e-6 of 1; it is
    /// renormalized exactly), `sigmas` strictly positive.
    pub fn gaussian_mixture(weights: &[T], means: &[T], sigmas: &[T]) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::EmptyInput("mixture needs at least one component"));
        }
        if weights.len() != means.len() || weights.len() != sigmas.len() {
            return Err(Error::LengthMismatch(format!(
                "mixture weights/means/sigmas have lengths {}/{}/{}",
                weights.len(),
                means.len(),
                sigmas.len()
            )));
        }
        let mut wsum = T::zero();
        for &w in weights {
            if !(w.is_finite() && w >= T::zero()) {
                return Err(Error::InvalidParameter(format!(
                    "mixture weights must be nonnegative reals, got {w}"
                )));
            }
            wsum += w;
        }
        if (wsum - T::one()).abs() > T::lit(1e-6) {
            return Err(Error::InvalidParameter(format!(
                "mixture weights must sum to 1, got {wsum}"
            )));
        }
        for &s in sigmas {
            if !(s.is_finite() && s > T::zero()) {
                return Err(Error::InvalidParameter(format!(
                    "mixture sigmas must be positive reals, got {s}"
                )));
            }
        }
        for &m in means {
            if !m.is_finite() {
                return Err(Error::NonFinite { what: "mixture mean", value: format!("{m}") });
            }
        }
        let weights: Vec<T> = weights.iter().map(|&w| w / wsum).collect();
        let mean: T = weights.iter().zip(means).map(|(&w, &m)| w * m).sum();
        let means: Vec<T> = means.iter().map(|&m| m - mean).collect();
        let sigma_sq: T = weights
            .iter()
            .zip(&means)
            .zip(sigmas)
            .map(|((&w, &m), &s)| w * (m * m + s * s))
            .sum();
        Ok(NoiseModel {
            family: Family::GaussianMixture { weights, means, sigmas: sigmas.to_vec() },
            sigma_sq,
            support_sup: T::infinity(),
        })
    }

    pub fn family(&self) -> &Family<T> {
        &self.family
    }

    /// Noise variance σ², equal to `cgf_d2(0)`.
    pub fn sigma_sq(&self) -> T {
        self.sigma_sq
    }

    /// Right endpoint of the support (+∞ for unbounded families). The first
    /// CGF derivative increases from 0 at t = 0 towards this value.
    pub fn support_sup(&self) -> T {
        self.support_sup
    }

    fn check_finite(t: T) -> Result<()> {
        if t.is_finite() {
            Ok(())
        } else {
            Err(Error::NonFinite { what: "cgf argument", value: format!("{t}") })
        }
    }

    /// Cumulant generating function `φ(t) = log ∫ e^{tz} F(dz)`.
    pub fn cgf(&self, t: T) -> Result<T> {
        Self::check_finite(t)?;
        Ok(self.cgf_raw(t))
    }

    /// First derivative `φ'`; strictly increasing, `φ'(0) = 0`.
    pub fn cgf_d1(&self, t: T) -> Result<T> {
        Self::check_finite(t)?;
        Ok(self.cgf_d1_raw(t))
    }

    /// Second derivative `φ'' > 0`; `φ''(0) = σ²`.
    pub fn cgf_d2(&self, t: T) -> Result<T> {
        Self::check_finite(t)?;
        Ok(self.cgf_d2_raw(t))
    }

    pub(crate) fn cgf_raw(&self, t: T) -> T {
        match &self.family {
            Family::Gaussian { sigma } => *sigma * *sigma * t * t * T::lit(0.5),
            Family::CenteredUniform { halfwidth } => uniform_cgf(*halfwidth, t),
            Family::GaussianMixture { weights, means, sigmas } => {
                mixture_cgf(weights, means, sigmas, t).0
            }
        }
    }

    pub(crate) fn cgf_d1_raw(&self, t: T) -> T {
        match &self.family {
            Family::Gaussian { sigma } => *sigma * *sigma * t,
            Family::CenteredUniform { halfwidth } => uniform_cgf_d1(*halfwidth, t),
            Family::GaussianMixture { weights, means, sigmas } => {
                mixture_cgf(weights, means, sigmas, t).1
            }
        }
    }

    pub(crate) fn cgf_d2_raw(&self, t: T) -> T {
        match &self.family {
            Family::Gaussian { sigma } => *sigma * *sigma,
            Family::CenteredUniform { halfwidth } => uniform_cgf_d2(*halfwidth, t),
            Family::GaussianMixture { weights, means, sigmas } => {
                mixture_cgf(weights, means, sigmas, t).2
            }
        }
    }

    /// One draw from the (untilted) noise law.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> T {
        match &self.family {
            Family::Gaussian { sigma } => *sigma * T::std_normal(rng),
            Family::CenteredUniform { halfwidth } => {
                let u = T::open01(rng);
                *halfwidth * (u + u - T::one())
            }
            Family::GaussianMixture { weights, means, sigmas } => {
                let i = pick_component(weights, rng);
                means[i] + sigmas[i] * T::std_normal(rng)
            }
        }
    }

    /// One draw from the tilted law `G_θ`.
    ///
    /// Gaussian: N(θσ², σ²). Uniform: exact inverse CDF of the density
    /// ∝ e^{θx} on [-h, h]. Mixture: component probabilities reweighted by
    /// the component MGFs at θ, then the chosen Gaussian component tilted.
    pub fn sample_tilted<R: Rng + ?Sized>(&self, theta: T, rng: &mut R) -> T {
        debug_assert!(theta.is_finite());
        match &self.family {
            Family::Gaussian { sigma } => {
                let s2 = *sigma * *sigma;
                theta * s2 + *sigma * T::std_normal(rng)
            }
            Family::CenteredUniform { halfwidth } => {
                uniform_tilted_draw(*halfwidth, theta, T::open01(rng))
            }
            Family::GaussianMixture { weights, means, sigmas } => {
                // p_i ∝ w_i exp(μ_i θ + σ_i² θ²/2), via a log-sum-exp scan.
                let logits: Vec<T> = weights
                    .iter()
                    .zip(means)
                    .zip(sigmas)
                    .map(|((&w, &m), &s)| {
                        w.ln() + m * theta + s * s * theta * theta * T::lit(0.5)
                    })
                    .collect();
                let max = logits.iter().cloned().fold(T::neg_infinity(), T::max);
                let mut cum = T::zero();
                let total: T = logits.iter().map(|&l| (l - max).exp()).sum();
                let target = T::open01(rng) * total;
                let mut idx = logits.len() - 1;
                for (i, &l) in logits.iter().enumerate() {
                    cum += (l - max).exp();
                    if target <= cum {
                        idx = i;
                        break;
                    }
                }
                means[idx] + theta * sigmas[idx] * sigmas[idx] + sigmas[idx] * T::std_normal(rng)
            }
        }
    }
}

fn pick_component<T: Real, R: Rng + ?Sized>(weights: &[T], rng: &mut R) -> usize {
    let target = T::open01(rng);
    let mut cum = T::zero();
    for (i, &w) in weights.iter().enumerate() {
        cum += w;
        if target <= cum {
            return i;
        }
    }
    weights.len() - 1
}

/// log(sinh(u)/u) with u = h t, series-expanded near the removable
/// singularity at 0 and overflow-safe for large |u|.
fn uniform_cgf<T: Real>(h: T, t: T) -> T {
    let u = h * t;
    let au = u.abs();
    if au < T::lit(UNIFORM_SERIES_CUTOFF) {
        let u2 = u * u;
        u2 * (T::lit(1.0 / 6.0) + u2 * (T::lit(-1.0 / 180.0) + u2 * T::lit(1.0 / 2835.0)))
    } else if au > T::lit(350.0) {
        // log(sinh u / u) = u - log 2 - log u + log(1 - e^{-2u})
        au - T::LN_2() - au.ln() + (-(au + au)).exp().neg().ln_1p()
    } else {
        (au.sinh() / au).ln()
    }
}

/// d/dt log(sinh(ht)/(ht)) = h coth(ht) - 1/t, odd in t.
fn uniform_cgf_d1<T: Real>(h: T, t: T) -> T {
    let u = h * t;
    let au = u.abs();
    let mag = if au < T::lit(UNIFORM_SERIES_CUTOFF) {
        let u2 = au * au;
        au * (T::lit(1.0 / 3.0) + u2 * (T::lit(-1.0 / 45.0) + u2 * T::lit(2.0 / 945.0)))
    } else {
        let coth = if au > T::lit(20.0) {
            let e = (-(au + au)).exp();
            T::one() + (e + e) / (T::one() - e)
        } else {
            T::one() / au.tanh()
        };
        coth - T::one() / au
    };
    // mag vanishes at u = 0, so the sign factor never matters there.
    h * mag * u.signum()
}

/// Second derivative h²(1/u² - 1/sinh²u), even in t, limit h²/3 at 0.
fn uniform_cgf_d2<T: Real>(h: T, t: T) -> T {
    let u = h * t;
    let au = u.abs();
    let h2 = h * h;
    if au < T::lit(UNIFORM_SERIES_CUTOFF) {
        let u2 = u * u;
        h2 * (T::lit(1.0 / 3.0)
            + u2 * (T::lit(-1.0 / 15.0) + u2 * (T::lit(2.0 / 189.0) - u2 * T::lit(1.0 / 675.0))))
    } else if au > T::lit(350.0) {
        h2 / (u * u)
    } else {
        let s = au.sinh();
        h2 * (T::one() / (u * u) - T::one() / (s * s))
    }
}

/// Exact inverse-CDF draw from the density ∝ e^{θx} on [-h, h].
///
/// For θ > 0 the CDF inverts to `h + ln(1 + (1-u)(e^{-2θh}-1))/θ`, written
/// with `ln_1p`/`exp_m1` so it degrades continuously to the uniform draw as
/// θ → 0 instead of cancelling catastrophically.
fn uniform_tilted_draw<T: Real>(h: T, theta: T, u: T) -> T {
    let th = theta * h;
    if th.abs() < T::lit(1e-12) {
        return h * (u + u - T::one());
    }
    if theta > T::zero() {
        let m = (-(th + th)).exp_m1(); // e^{-2θh} - 1, in (-1, 0)
        h + ((T::one() - u) * m).ln_1p() / theta
    } else {
        -uniform_tilted_draw(h, -theta, u)
    }
}

/// Mixture CGF and first two derivatives in one pass (shared softmax).
fn mixture_cgf<T: Real>(weights: &[T], means: &[T], sigmas: &[T], t: T) -> (T, T, T) {
    let half = T::lit(0.5);
    if t.is_zero() {
        // log of total mass, exactly; moments of the recentered mixture.
        let mean: T = weights.iter().zip(means).map(|(&w, &m)| w * m).sum();
        let m2: T = weights
            .iter()
            .zip(means)
            .zip(sigmas)
            .map(|((&w, &m), &s)| w * (s * s + m * m))
            .sum();
        return (T::zero(), mean, m2 - mean * mean);
    }
    let logits: Vec<T> = weights
        .iter()
        .zip(means)
        .zip(sigmas)
        .map(|((&w, &m), &s)| w.ln() + m * t + s * s * t * t * half)
        .collect();
    let max = logits.iter().cloned().fold(T::neg_infinity(), T::max);
    let total: T = logits.iter().map(|&l| (l - max).exp()).sum();
    let value = max + total.ln();
    let mut d1 = T::zero();
    let mut m2 = T::zero();
    for ((&l, &m), &s) in logits.iter().zip(means).zip(sigmas) {
        let p = (l - max).exp() / total;
        let gi = m + s * s * t; // component tilted mean
        d1 += p * gi;
        m2 += p * (s * s + gi * gi);
    }
    (value, d1, m2 - d1 * d1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive_stream;

    fn models() -> Vec<NoiseModel<f64>> {
        vec![
            NoiseModel::gaussian(1.0).unwrap(),
            NoiseModel::gaussian(2.0).unwrap(),
            NoiseModel::centered_uniform(1.0).unwrap(),
            NoiseModel::centered_uniform(0.4).unwrap(),
            NoiseModel::gaussian_mixture(&[0.3, 0.7], &[-1.0, 1.0], &[0.5, 1.0]).unwrap(),
        ]
    }

    /// Plain Simpson quadrature of ∫ e^{tz} dz / (2h) over [-h, h]; an
    /// oracle for the uniform CGF that never touches the closed form.
    fn uniform_mgf_quadrature(h: f64, t: f64) -> f64 {
        let n = 20_000;
        let dz = 2.0 * h / n as f64;
        let f = |z: f64| (t * z).exp();
        let mut acc = f(-h) + f(h);
        for k in 1..n {
            let z = -h + k as f64 * dz;
            acc += if k % 2 == 1 { 4.0 * f(z) } else { 2.0 * f(z) };
        }
        acc * dz / 3.0 / (2.0 * h)
    }

    #[test]
    fn cgf_examples() {
        let g = NoiseModel::<f64>::gaussian(1.0).unwrap();
        assert!((g.cgf(2.0).unwrap() - 2.0).abs() < 1e-15);
        for m in models() {
            assert_eq!(m.cgf(0.0).unwrap(), 0.0);
        }
        let u = NoiseModel::<f64>::centered_uniform(1.0).unwrap();
        let oracle = uniform_mgf_quadrature(1.0, 1.0).ln();
        assert!((u.cgf(1.0).unwrap() - oracle).abs() < 1e-10);
        assert!((u.cgf(1.0).unwrap() - 0.161_439_361_571_195_63).abs() < 1e-14);
    }

    #[test]
    fn cgf_d1_examples() {
        let g = NoiseModel::<f64>::gaussian(1.0).unwrap();
        assert!((g.cgf_d1(0.7).unwrap() - 0.7).abs() < 1e-15);
        for m in models() {
            assert!(m.cgf_d1(0.0).unwrap().abs() < 1e-14, "zero mean");
        }
        // coth(1) - 1 from a central difference of the CGF at step 1e-6.
        let u = NoiseModel::<f64>::centered_uniform(1.0).unwrap();
        let h = 1e-6;
        let fd = (u.cgf(1.0 + h).unwrap() - u.cgf(1.0 - h).unwrap()) / (2.0 * h);
        assert!((u.cgf_d1(1.0).unwrap() - fd).abs() < 1e-9);
        assert!((u.cgf_d1(1.0).unwrap() - 0.313_035_285_499_331_3).abs() < 1e-12);
    }

    #[test]
    fn non_finite_arguments_rejected() {
        let g = NoiseModel::<f64>::gaussian(1.0).unwrap();
        assert!(g.cgf(f64::NAN).is_err());
        assert!(g.cgf_d1(f64::INFINITY).is_err());
        assert!(g.cgf_d2(f64::NEG_INFINITY).is_err());
    }

    #[test]
    fn identities_at_zero() {
        for m in models() {
            assert_eq!(m.cgf(0.0).unwrap(), 0.0);
            assert!(m.cgf_d1(0.0).unwrap().abs() < 1e-14);
            let rel = (m.cgf_d2(0.0).unwrap() - m.sigma_sq()) / m.sigma_sq();
            assert!(rel.abs() < 1e-12, "sigma_sq mismatch: {rel}");
        }
    }

    #[test]
    fn d1_strictly_increasing() {
        for m in models() {
            let grid: Vec<f64> = (-50..=50).map(|k| k as f64 * 0.1).collect();
            for w in grid.windows(2) {
                assert!(
                    m.cgf_d1(w[0]).unwrap() < m.cgf_d1(w[1]).unwrap(),
                    "cgf_d1 not increasing at {}",
                    w[0]
                );
            }
        }
    }

    #[test]
    fn central_differences_match_derivatives() {
        // d1 at step 1e-5, d2 at step 5e-4 (d2 needs the larger step to keep
        // rounding noise under the 1e-6 absolute tolerance).
        for m in models() {
            for k in -10..=10 {
                let t = k as f64 * 0.5;
                let h1 = 1e-5;
                let fd1 = (m.cgf(t + h1).unwrap() - m.cgf(t - h1).unwrap()) / (2.0 * h1);
                assert!((fd1 - m.cgf_d1(t).unwrap()).abs() < 1e-6, "d1 at {t}");
                let h2 = 5e-4;
                let fd2 = (m.cgf(t + h2).unwrap() - 2.0 * m.cgf(t).unwrap()
                    + m.cgf(t - h2).unwrap())
                    / (h2 * h2);
                assert!((fd2 - m.cgf_d2(t).unwrap()).abs() < 1e-6, "d2 at {t}");
            }
        }
    }

    #[test]
    fn plain_sampler_moments() {
        let mut rng = derive_stream(11, 0);
        let g = NoiseModel::<f64>::gaussian(1.0).unwrap();
        let n = 1_000_000;
        let mean: f64 = (0..n).map(|_| g.sample(&mut rng)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 4e-3, "mean {mean}");

        let u = NoiseModel::<f64>::centered_uniform(1.0).unwrap();
        for _ in 0..10_000 {
            let z = u.sample(&mut rng);
            assert!((-1.0..=1.0).contains(&z));
        }

        let g2 = NoiseModel::<f64>::gaussian(2.0).unwrap();
        let var: f64 = (0..n).map(|_| g2.sample(&mut rng).powi(2)).sum::<f64>() / n as f64;
        assert!((var - 4.0).abs() < 0.2, "variance {var}");
    }

    #[test]
    fn tilted_sampler_matches_cgf_derivatives() {
        let mut rng = derive_stream(12, 0);
        let n = 100_000;
        for m in models() {
            for &theta in &[-0.8, -0.2, 0.0, 0.5, 1.0] {
                let draws: Vec<f64> = (0..n).map(|_| m.sample_tilted(theta, &mut rng)).collect();
                let mean = draws.iter().sum::<f64>() / n as f64;
                let var =
                    draws.iter().map(|z| (z - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
                let want_mean = m.cgf_d1(theta).unwrap();
                let want_var = m.cgf_d2(theta).unwrap();
                let se_mean = (want_var / n as f64).sqrt();
                assert!(
                    (mean - want_mean).abs() < 4.0 * se_mean,
                    "tilted mean: {mean} vs {want_mean} (theta {theta})"
                );
                // se of the sample variance ~ var * sqrt(2/n + kurt/n); 4 CLT
                // bands with the Gaussian factor is enough for every family.
                let se_var = want_var * (4.0 / n as f64).sqrt();
                assert!(
                    (var - want_var).abs() < 4.0 * se_var,
                    "tilted var: {var} vs {want_var} (theta {theta})"
                );
            }
        }
    }

    #[test]
    fn gaussian_tilt_shifts_mean() {
        let mut rng = derive_stream(13, 0);
        let g = NoiseModel::<f64>::gaussian(1.0).unwrap();
        let n = 1_000_000;
        let mean: f64 = (0..n).map(|_| g.sample_tilted(0.5, &mut rng)).sum::<f64>() / n as f64;
        assert!((mean - 0.5).abs() < 4.0 / (n as f64).sqrt());
    }

    #[test]
    fn uniform_tilt_mean_matches_finite_difference_oracle() {
        let mut rng = derive_stream(14, 0);
        let u = NoiseModel::<f64>::centered_uniform(1.0).unwrap();
        let n = 1_000_000;
        let mean: f64 = (0..n).map(|_| u.sample_tilted(1.0, &mut rng)).sum::<f64>() / n as f64;
        assert!((mean - 0.313_035).abs() < 4.0 * (u.cgf_d2(1.0).unwrap() / n as f64).sqrt());
    }

    #[test]
    fn zero_tilt_is_identity_in_law() {
        // Two-sample KS at 1%: D_crit = 1.628 sqrt(2/n).
        let mut rng = derive_stream(15, 0);
        let n = 50_000;
        for m in models() {
            let a: Vec<f64> = (0..n).map(|_| m.sample(&mut rng)).collect();
            let b: Vec<f64> = (0..n).map(|_| m.sample_tilted(0.0, &mut rng)).collect();
            let d = crate::stats::ks_distance(&a, &b).unwrap();
            let crit = 1.628 * (2.0 / n as f64).sqrt();
            assert!(d < crit, "KS {d} >= {crit}");
        }
    }

    #[test]
    fn mixture_is_recentered() {
        let m = NoiseModel::gaussian_mixture(&[0.3, 0.7], &[-1.0, 1.0], &[0.5, 1.0]).unwrap();
        if let Family::GaussianMixture { weights, means, .. } = m.family() {
            let mean: f64 = weights.iter().zip(means).map(|(w, m)| w * m).sum();
            assert!(mean.abs() < 1e-15);
        } else {
            panic!("wrong family");
        }
        // variance: 0.3(1.4² + 0.25) + 0.7(0.6² + 1)
        assert!((m.sigma_sq() - (0.3 * (1.96 + 0.25) + 0.7 * (0.36 + 1.0))).abs() < 1e-14);
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(NoiseModel::<f64>::gaussian(0.0).is_err());
        assert!(NoiseModel::<f64>::gaussian(-1.0).is_err());
        assert!(NoiseModel::<f64>::centered_uniform(0.0).is_err());
        assert!(NoiseModel::<f64>::gaussian_mixture(&[0.5, 0.6], &[0.0, 1.0], &[1.0, 1.0])
            .is_err());
        assert!(NoiseModel::<f64>::gaussian_mixture(&[0.5, 0.5], &[0.0, 1.0], &[1.0, 0.0])
            .is_err());
        assert!(NoiseModel::<f64>::gaussian_mixture(&[], &[], &[]).is_err());
    }

    #[test]
    fn f32_instantiation() {
        let g = NoiseModel::<f32>::gaussian(1.5).unwrap();
        assert_eq!(g.cgf(0.0).unwrap(), 0.0);
        assert!((g.cgf_d2(0.0).unwrap() - g.sigma_sq()).abs() < 1e-5);
        let mut rng = derive_stream(16, 0);
        let z = g.sample_tilted(0.3f32, &mut rng);
        assert!(z.is_finite());
    }
}
