//! The small-overshoot limit of the cluster sizes.
//!
//! As `ε → 0`, `ε²` times each cluster size converges in law to
//! `A²σ² ∫₀^∞ 1(T₀ ≥ √2 B_t + t) dt` with `T₀` a standard exponential
//! shared by the two sides and `B^±` independent standard Brownian motions.
//! This module estimates that functional two independent ways:
//!
//! * [`simulate_functional`] — Euler paths on a grid of step `dt`, counting
//!   grid points below the level (left-endpoint rule);
//! * [`mean_functional_quadrature`] — the mean as the exact double integral
//!   `A²σ² ∫₀^∞∫₀^∞ e^{-x} Φ((x-t)/√(2t)) dx dt` by adaptive quadrature
//!   (expectation moved inside the occupation integral).
//!
//! [`scaling_study`] ties the loop: it measures `ε²·E D⁺` with the cluster
//! sampler and tabulates the ratio against the quadrature value.

use rand::Rng;

use crate::coefficients::CoefficientSeq;
use crate::error::{Error, Result};
use crate::limit_process::{LimitOptions, LimitSampler};
use crate::noise::NoiseModel;
use crate::real::Real;
use crate::stats::Estimate;

/// Required relative accuracy of the quadrature oracle.
pub const QUADRATURE_RTOL: f64 = 1e-6;

/// Maximum admissible post-horizon occupation contribution.
pub const HORIZON_OCCUPATION_BOUND: f64 = 1e-4;

/// Per-draw early-stop margin: once the drifted boundary clears the level
/// by this much, the chance of any later dip back is
/// `e^{-margin}` ≈ 1e-9 (drift 1, variance 2 per unit time), far below the
/// Monte Carlo resolution of every consumer.
const STOP_MARGIN: f64 = 20.8;

/// Grid and model constants of the Brownian functional.
#[derive(Debug, Clone, Copy)]
pub struct BrownianFunctionalConfig<T> {
    pub dt: T,
    pub horizon: T,
    pub a_total: T,
    pub sigma_sq: T,
}

impl<T: Real> BrownianFunctionalConfig<T> {
    /// Validates the grid and the certified-horizon invariant
    /// (`post_horizon_bound(horizon) ≤ 1e-4`).
    pub fn new(dt: T, horizon: T, a_total: T, sigma_sq: T) -> Result<Self> {
        if !(dt.is_finite() && dt > T::zero()) {
            return Err(Error::InvalidParameter(format!("dt must be a positive real, got {dt}")));
        }
        if !(horizon.is_finite() && horizon >= dt) {
            return Err(Error::InvalidParameter(format!(
                "horizon must be finite and at least dt, got {horizon}"
            )));
        }
        if !(sigma_sq.is_finite() && sigma_sq > T::zero() && a_total.is_finite()) {
            return Err(Error::InvalidParameter("bad a_total / sigma_sq".into()));
        }
        let bound = post_horizon_bound(horizon, a_total, sigma_sq);
        if bound > T::lit(HORIZON_OCCUPATION_BOUND) {
            return Err(Error::InvalidParameter(format!(
                "post-horizon occupation bound {bound} exceeds {HORIZON_OCCUPATION_BOUND}; \
                 raise the horizon (auto_horizon gives a certified choice)"
            )));
        }
        Ok(BrownianFunctionalConfig { dt, horizon, a_total, sigma_sq })
    }

    /// Config with the certified automatic horizon.
    pub fn with_auto_horizon(dt: T, a_total: T, sigma_sq: T) -> Result<Self> {
        let h = auto_horizon(T::lit(HORIZON_OCCUPATION_BOUND), a_total, sigma_sq);
        Self::new(dt, h, a_total, sigma_sq)
    }
}

/// Certified bound on the expected occupation contribution past `horizon`:
/// `A²σ² Σ_{k≥⌈H⌉} P(inf_{[k,k+1]}(√2B_t + t) ≤ T₀)`, each term bounded by
/// Chernoff at rate 1/2 (`4e^{1/4} e^{-k/4}`), summed in closed form.
pub fn post_horizon_bound<T: Real>(horizon: T, a_total: T, sigma_sq: T) -> T {
    let quarter = T::lit(0.25);
    let k0 = horizon.ceil();
    let unit = T::lit(4.0) * quarter.exp() / (T::one() - (-quarter).exp());
    a_total * a_total * sigma_sq * unit * (-k0 * quarter).exp()
}

/// Smallest horizon meeting `post_horizon_bound ≤ delta`, floored at the
/// coarse rule `max(50, 10·log10(1/delta))`.
pub fn auto_horizon<T: Real>(delta: T, a_total: T, sigma_sq: T) -> T {
    let ten = T::lit(10.0);
    let coarse = T::lit(50.0).max(ten * (T::one() / delta).log10());
    let quarter = T::lit(0.25);
    let unit = T::lit(4.0) * quarter.exp() / (T::one() - (-quarter).exp());
    let chernoff = T::lit(4.0) * (a_total * a_total * sigma_sq * unit / delta).ln();
    coarse.max(chernoff)
}

/// One draw of the pair of occupation functionals, sharing one `T₀` across
/// the two independent Brownian paths as the limit law does. Returns
/// `A²σ²·dt·#{grid points with √2B_t + t ≤ T₀}` for (plus, minus).
pub fn simulate_functional<T: Real, R: Rng + ?Sized>(
    cfg: &BrownianFunctionalConfig<T>,
    rng: &mut R,
) -> (T, T) {
    let t0 = T::std_exp(rng);
    let scale = cfg.a_total * cfg.a_total * cfg.sigma_sq * cfg.dt;
    let plus = occupation_count(cfg, t0, rng);
    let minus = occupation_count(cfg, t0, rng);
    (scale * T::lit(plus as f64), scale * T::lit(minus as f64))
}

fn occupation_count<T: Real, R: Rng + ?Sized>(
    cfg: &BrownianFunctionalConfig<T>,
    t0: T,
    rng: &mut R,
) -> u64 {
    let steps = (cfg.horizon / cfg.dt).floor().to_f64().expect("horizon steps") as u64;
    let sd = (cfg.dt + cfg.dt).sqrt(); // increments of √2·B
    let stop = t0 + T::lit(STOP_MARGIN);
    let mut x = T::zero(); // √2 B_t
    let mut t = T::zero();
    let mut count = 0u64;
    for _ in 0..=steps {
        let boundary = x + t;
        if boundary <= t0 {
            count += 1;
        } else if boundary > stop {
            break;
        }
        x += sd * T::std_normal(rng);
        t += cfg.dt;
    }
    count
}

/// Adaptive Simpson on `[a, b]` to absolute tolerance `tol`.
fn adaptive_simpson<T: Real>(
    f: &impl Fn(T) -> T,
    a: T,
    b: T,
    tol: T,
    max_depth: u32,
) -> Result<T> {
    fn simpson<T: Real>(fa: T, fm: T, fb: T, h: T) -> T {
        h / T::lit(6.0) * (fa + T::lit(4.0) * fm + fb)
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse<T: Real>(
        f: &impl Fn(T) -> T,
        a: T,
        b: T,
        fa: T,
        fm: T,
        fb: T,
        whole: T,
        tol: T,
        depth: u32,
    ) -> std::result::Result<T, T> {
        let m = (a + b) * T::lit(0.5);
        let lm = (a + m) * T::lit(0.5);
        let rm = (m + b) * T::lit(0.5);
        let flm = f(lm);
        let frm = f(rm);
        let h = b - a;
        let left = simpson(fa, flm, fm, h * T::lit(0.5));
        let right = simpson(fm, frm, fb, h * T::lit(0.5));
        let delta = left + right - whole;
        if delta.abs() <= T::lit(15.0) * tol {
            return Ok(left + right + delta / T::lit(15.0));
        }
        if depth == 0 {
            return Err(delta.abs() / T::lit(15.0));
        }
        let half_tol = tol * T::lit(0.5);
        match (
            recurse(f, a, m, fa, flm, fm, left, half_tol, depth - 1),
            recurse(f, m, b, fm, frm, fb, right, half_tol, depth - 1),
        ) {
            (Ok(l), Ok(r)) => Ok(l + r),
            (Ok(_), Err(e)) | (Err(e), Ok(_)) => Err(e),
            (Err(l), Err(r)) => Err(l + r),
        }
    }
    let fa = f(a);
    let m = (a + b) * T::lit(0.5);
    let fm = f(m);
    let fb = f(b);
    let whole = simpson(fa, fm, fb, b - a);
    recurse(f, a, b, fa, fm, fb, whole, tol, max_depth).map_err(|achieved| {
        Error::QuadratureNonConvergence {
            achieved: achieved.to_f64().unwrap_or(f64::NAN),
            requested: tol.to_f64().unwrap_or(f64::NAN),
        }
    })
}

/// Inner integral `∫₀^∞ e^{-x} Φ((x-t)/√(2t)) dx`.
///
/// The integrand only departs from `e^{-x}` on `x ≤ t + 12√(2t)` (beyond
/// that `Φ > 1 - 1e-33`), so the quadrature runs on that bounded range and
/// the remainder is added as an exact exponential tail.
fn occupation_probability<T: Real>(t: T, tol: T) -> Result<T> {
    if t <= T::zero() {
        return Ok(T::one());
    }
    let s = (t + t).sqrt();
    let upper = t + T::lit(12.0) * s;
    let f = move |x: T| ((x - t) / s).normal_cdf() * (-x).exp();
    let head = adaptive_simpson(&f, T::zero(), upper, tol, 40)?;
    Ok(head + (-upper).exp())
}

/// Mean of the occupation functional by adaptive 2D quadrature:
/// `A²σ² ∫₀^∞ ∫₀^∞ e^{-x} Φ((x-t)/√(2t)) dx dt` to relative accuracy
/// [`QUADRATURE_RTOL`].
pub fn mean_functional_quadrature<T: Real>(cfg: &BrownianFunctionalConfig<T>) -> Result<T> {
    // Outer substitution t = w²: the inner integral has a √t cusp at the
    // origin which the substitution removes, and the tail past w = 14
    // (t = 196) is below 1e-20.
    let w_max = T::lit(14.0);
    let outer = move |inner_tol: T| {
        move |w: T| -> T {
            occupation_probability(w * w, inner_tol)
                .map(|p| (w + w) * p)
                .unwrap_or(T::nan())
        }
    };
    // Two passes: a rough value sets the absolute tolerance of the refined
    // pass so the result meets the relative target.
    let rough = adaptive_simpson(&outer(T::lit(1e-8)), T::zero(), w_max, T::lit(1e-3), 40)?;
    let tol = T::lit(QUADRATURE_RTOL) * rough.abs() * T::lit(0.5);
    let refined = adaptive_simpson(&outer(T::lit(1e-12)), T::zero(), w_max, tol, 44)?;
    if !refined.is_finite() {
        return Err(Error::QuadratureNonConvergence {
            achieved: f64::NAN,
            requested: QUADRATURE_RTOL,
        });
    }
    Ok(cfg.a_total * cfg.a_total * cfg.sigma_sq * refined)
}

/// Partial sums of cluster-size draws at one `ε`; merges associatively.
#[derive(Debug, Clone, Copy)]
pub struct ScalingAccum<T> {
    pub sum_d_plus: T,
    pub sum_d_plus_sq: T,
    pub truncated: u64,
    pub n: u64,
}

impl<T: Real> ScalingAccum<T> {
    pub fn zero() -> Self {
        ScalingAccum { sum_d_plus: T::zero(), sum_d_plus_sq: T::zero(), truncated: 0, n: 0 }
    }

    pub fn merge(&mut self, o: &ScalingAccum<T>) {
        self.sum_d_plus += o.sum_d_plus;
        self.sum_d_plus_sq += o.sum_d_plus_sq;
        self.truncated += o.truncated;
        self.n += o.n;
    }

    /// Estimate of `ε²·E D⁺`.
    pub fn estimate(&self, eps: T) -> Estimate<T> {
        let n = T::lit(self.n as f64);
        let mean = self.sum_d_plus / n;
        let var = (self.sum_d_plus_sq / n - mean * mean).max(T::zero());
        let e2 = eps * eps;
        Estimate {
            value: e2 * mean,
            stderr: e2 * (var / n).sqrt(),
            n_samples: self.n,
            ess: n,
        }
    }
}

/// One chunk of cluster-size draws for the scaling study.
pub fn scaling_chunk<T: Real, R: Rng + ?Sized>(
    m: &NoiseModel<T>,
    c: &CoefficientSeq<T>,
    eps: T,
    opts: LimitOptions<T>,
    count: u64,
    rng: &mut R,
) -> Result<ScalingAccum<T>> {
    let sampler = LimitSampler::new(m, c, eps, opts)?;
    let mut acc = ScalingAccum::zero();
    for _ in 0..count {
        let d = sampler.sample(rng);
        let dp = T::lit(d.d_plus as f64);
        acc.sum_d_plus += dp;
        acc.sum_d_plus_sq += dp * dp;
        acc.truncated += d.truncated as u64;
        acc.n += 1;
    }
    Ok(acc)
}

/// One row of the scaling table.
#[derive(Debug, Clone, Copy)]
pub struct ScalingRow<T> {
    pub eps: T,
    /// Estimate of `ε²·E D⁺`.
    pub e2_d_plus: T,
    pub stderr: T,
    /// Quadrature value of the limiting mean.
    pub oracle: T,
    pub ratio: T,
    pub n_draws: u64,
    pub truncated_draws: u64,
}

/// Estimate `ε²·E D⁺` across a decreasing grid of overshoot levels and
/// tabulate each against the quadrature oracle.
pub fn scaling_study<T: Real, R: Rng + ?Sized>(
    m: &NoiseModel<T>,
    c: &CoefficientSeq<T>,
    eps_list: &[T],
    n_draws: u64,
    opts: LimitOptions<T>,
    rng: &mut R,
) -> Result<Vec<ScalingRow<T>>> {
    if eps_list.is_empty() {
        return Err(Error::EmptyInput("scaling eps list"));
    }
    for w in eps_list.windows(2) {
        if !(w[1] < w[0]) {
            return Err(Error::Precondition("eps_list must be strictly decreasing".into()));
        }
    }
    if n_draws < 1 {
        return Err(Error::Precondition("n_draws must be >= 1".into()));
    }
    let sums = c.sums();
    let cfg = BrownianFunctionalConfig::with_auto_horizon(
        T::lit(1e-3),
        sums.total,
        m.sigma_sq(),
    )?;
    let oracle = mean_functional_quadrature(&cfg)?;
    let mut rows = Vec::with_capacity(eps_list.len());
    for &eps in eps_list {
        let acc = scaling_chunk(m, c, eps, opts, n_draws, rng)?;
        let est = acc.estimate(eps);
        rows.push(ScalingRow {
            eps,
            e2_d_plus: est.value,
            stderr: est.stderr,
            oracle,
            ratio: est.value / oracle,
            n_draws: acc.n,
            truncated_draws: acc.truncated,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive_stream;
    use crate::stats::ks_distance;

    fn unit_cfg(dt: f64) -> BrownianFunctionalConfig<f64> {
        BrownianFunctionalConfig::with_auto_horizon(dt, 1.0, 1.0).unwrap()
    }

    #[test]
    fn config_validation() {
        assert!(BrownianFunctionalConfig::<f64>::new(0.0, 50.0, 1.0, 1.0).is_err());
        assert!(BrownianFunctionalConfig::<f64>::new(0.1, 0.05, 1.0, 1.0).is_err());
        // Horizon too short for the certified bound.
        assert!(BrownianFunctionalConfig::<f64>::new(0.01, 10.0, 1.0, 1.0).is_err());
        assert!(BrownianFunctionalConfig::<f64>::new(0.01, 60.0, 1.0, 1.0).is_ok());
    }

    #[test]
    fn horizon_bound_certifies_default() {
        assert!(post_horizon_bound(50.0, 1.0, 1.0) < 1e-4);
        assert!(post_horizon_bound(60.0, 1.0, 1.0) < post_horizon_bound(50.0, 1.0, 1.0));
        // Larger A²σ² pushes the certified horizon up.
        let h = auto_horizon(1e-4, 2.0, 1.0);
        assert!(h > 50.0);
        assert!(post_horizon_bound(h, 2.0, 1.0) <= 1e-4 * 1.0001);
    }

    #[test]
    fn every_draw_counts_the_origin() {
        // √2B_0 + 0 = 0 ≤ T₀ almost surely, so each value is ≥ A²σ²·dt.
        let cfg = unit_cfg(0.05);
        let mut rng = derive_stream(71, 0);
        for _ in 0..200 {
            let (p, m) = simulate_functional(&cfg, &mut rng);
            assert!(p >= cfg.dt && m >= cfg.dt);
        }
    }

    #[test]
    fn plus_and_minus_are_exchangeable() {
        let cfg = unit_cfg(0.02);
        let mut rng = derive_stream(72, 0);
        let n = 20_000;
        let mut plus = Vec::with_capacity(n);
        let mut minus = Vec::with_capacity(n);
        for _ in 0..n {
            let (p, m) = simulate_functional(&cfg, &mut rng);
            plus.push(p);
            minus.push(m);
        }
        let d = ks_distance(&plus, &minus).unwrap();
        let crit = 1.628 * (2.0 / n as f64).sqrt();
        assert!(d < crit, "KS {d} >= {crit}");
    }

    #[test]
    fn quadrature_matches_analytic_value() {
        // The double integral evaluates in closed form: the inner integral
        // is 2Φ(-√(t/2)), and ∫₀^∞ 2Φ(-√(t/2)) dt = 8 ∫₀^∞ u Φ(-u) du = 2.
        let cfg = unit_cfg(1e-3);
        let v = mean_functional_quadrature(&cfg).unwrap();
        assert!((v - 2.0).abs() < 1e-5, "quadrature {v}");

        // Doubling A multiplies the value by exactly 4.
        let cfg2 = BrownianFunctionalConfig::with_auto_horizon(1e-3, 2.0, 1.0).unwrap();
        let v2 = mean_functional_quadrature(&cfg2).unwrap();
        assert!((v2 - 4.0 * v).abs() < 1e-12 * v2.abs());
    }

    #[test]
    fn inner_integral_boundary_value() {
        // t → 0⁺: Φ((x - t)/√(2t)) → 1 for x > 0, so the integral tends to 1.
        let p: f64 = occupation_probability(1e-12, 1e-10).unwrap();
        assert!((p - 1.0).abs() < 1e-6, "{p}");
        assert_eq!(occupation_probability(0.0, 1e-10).unwrap(), 1.0);
    }

    #[test]
    fn simulator_agrees_with_quadrature_at_coarse_dt() {
        let cfg = unit_cfg(5e-3);
        let oracle = mean_functional_quadrature(&cfg).unwrap();
        let mut rng = derive_stream(73, 0);
        let n = 40_000;
        let mut sum = 0.0;
        let mut sq = 0.0;
        for _ in 0..n {
            let (p, _) = simulate_functional(&cfg, &mut rng);
            sum += p;
            sq += p * p;
        }
        let mean = sum / n as f64;
        let var = sq / n as f64 - mean * mean;
        let se = (var / n as f64).sqrt();
        // Left-endpoint bias is O(dt), invisible at this tolerance.
        assert!((mean - oracle).abs() < 4.0 * se + 0.01, "{mean} vs {oracle} (se {se})");
    }

    #[test]
    fn shared_level_couples_the_sides() {
        let cfg = unit_cfg(0.02);
        let mut rng = derive_stream(74, 0);
        let n = 20_000;
        let mut xs = Vec::with_capacity(n);
        let mut ys = Vec::with_capacity(n);
        for _ in 0..n {
            let (p, m) = simulate_functional(&cfg, &mut rng);
            xs.push(p);
            ys.push(m);
        }
        let corr = correlation(&xs, &ys);
        assert!(corr > 0.1, "shared T0 correlation {corr}");
        // Pairing plus-values with the NEXT draw's minus-values instead
        // breaks the coupling.
        let shifted: Vec<f64> = ys.iter().cycle().skip(1).take(n).cloned().collect();
        let corr0 = correlation(&xs, &shifted);
        assert!(corr0.abs() < 4.0 / (n as f64).sqrt(), "independent correlation {corr0}");
    }

    fn correlation(xs: &[f64], ys: &[f64]) -> f64 {
        let n = xs.len() as f64;
        let mx = xs.iter().sum::<f64>() / n;
        let my = ys.iter().sum::<f64>() / n;
        let mut cov = 0.0;
        let mut vx = 0.0;
        let mut vy = 0.0;
        for (x, y) in xs.iter().zip(ys) {
            cov += (x - mx) * (y - my);
            vx += (x - mx).powi(2);
            vy += (y - my).powi(2);
        }
        cov / (vx * vy).sqrt()
    }

    #[test]
    fn scaling_ratio_moves_towards_one() {
        let m = NoiseModel::<f64>::gaussian(1.0).unwrap();
        let c = CoefficientSeq::new(0, vec![1.0]).unwrap();
        let mut rng = derive_stream(75, 0);
        let rows =
            scaling_study(&m, &c, &[0.4, 0.2], 3_000, LimitOptions::default(), &mut rng).unwrap();
        assert_eq!(rows.len(), 2);
        let gap0 = (rows[0].ratio - 1.0).abs();
        let gap1 = (rows[1].ratio - 1.0).abs();
        let slack = 2.0 * (rows[0].stderr + rows[1].stderr) / rows[0].oracle;
        assert!(gap1 < gap0 + slack, "ratios {} then {}", rows[0].ratio, rows[1].ratio);
    }

    #[test]
    fn quartering_under_eps_doubling() {
        let m = NoiseModel::<f64>::gaussian(1.0).unwrap();
        let c = CoefficientSeq::new(0, vec![1.0]).unwrap();
        let mut rng = derive_stream(76, 0);
        let rows =
            scaling_study(&m, &c, &[0.2, 0.1], 3_000, LimitOptions::default(), &mut rng).unwrap();
        // ÊD(0.2)/ÊD(0.1) ≈ 1/4 within 15%: equivalently the ε²-scaled
        // values agree to 15%.
        let ratio = rows[0].e2_d_plus / rows[1].e2_d_plus;
        assert!((ratio - 1.0).abs() < 0.15, "quartering ratio {ratio}");
    }

    #[test]
    fn top_of_range_eps_still_runs() {
        // ε/A near the uniform support endpoint: no oracle claim, but the
        // study must execute and produce finite numbers.
        let m = NoiseModel::<f64>::centered_uniform(1.0).unwrap();
        let c = CoefficientSeq::new(0, vec![1.0]).unwrap();
        let mut rng = derive_stream(77, 0);
        let rows =
            scaling_study(&m, &c, &[0.9], 500, LimitOptions::default(), &mut rng).unwrap();
        assert!(rows[0].e2_d_plus.is_finite());
    }

    #[test]
    fn eps_list_must_decrease() {
        let m = NoiseModel::<f64>::gaussian(1.0).unwrap();
        let c = CoefficientSeq::new(0, vec![1.0]).unwrap();
        let mut rng = derive_stream(78, 0);
        assert!(
            scaling_study(&m, &c, &[0.1, 0.2], 10, LimitOptions::default(), &mut rng).is_err()
        );
    }
}
