//! Non-logarithmic tail approximation for the exceedance probability.
//!
//! With `S_n = Σ_{i=0..n-1} X_i` and `ψ_n(t) = n⁻¹ log E e^{tS_n}`, the
//! probability of the window event `{S_n ≥ nε}` satisfies
//!
//! ```text
//! P(S_n ≥ nε) ≈ (C/√n) exp(-n(θ_n ε - ψ_n(θ_n))),
//! C = 1 / (τ(ε) √(2π φ''(τ(ε)))),
//! ```
//!
//! where `θ_n > 0` is the saddlepoint root `ψ_n'(θ_n) = ε` and `τ(ε) > 0`
//! the tilt defined by `φ'(τ) = ε/A`. For finite-support coefficients
//! `ψ_n` is the finite sum `n⁻¹ Σ_j φ(c_{n,j} t)` over the window-sum
//! coefficients, so everything here is exact up to the root solves.
//!
//! [`cs_formula`] exposes the generic version of the same asymptotic for an
//! arbitrary smooth strictly convex CGF family, with the prefactor written
//! in terms of `ψ_n''(τ_n)` rather than the limiting `φ''(τ(ε))`; both are
//! provided so the two prefactors can be compared.

use crate::coefficients::CoefficientSeq;
use crate::error::{Error, Result};
use crate::noise::NoiseModel;
use crate::real::Real;
use crate::root::{bracket_increasing, solve_increasing, MAX_DOUBLINGS};

/// Residual tolerance of all tilt-root solves: `1e-12 · max(1, target)`.
pub const ROOT_RTOL: f64 = 1e-12;

/// Initial upper bracket endpoint scale: `50 / max|coefficient|`.
pub const BRACKET_SCALE: f64 = 50.0;

/// Saddlepoint solve output for one `(noise, coefficients, n, ε)` instance.
#[derive(Debug, Clone, Copy)]
pub struct SaddlepointResult<T> {
    /// Root of `ψ_n'(θ) = ε`.
    pub theta_n: T,
    pub psi_at_theta: T,
    pub psi_d2_at_theta: T,
    /// Root of `φ'(τ) = ε/A`.
    pub tau_eps: T,
    /// `n (θ_n ε - ψ_n(θ_n))`, the exponential decay exponent.
    pub exponent: T,
    /// Tail probability approximation; filled by [`prob_e0`].
    pub prob_approx: Option<T>,
}

/// Validate `0 < ε/A < s₀` and return `ε/A`.
///
/// This is the standing admissibility condition on the overshoot level: the
/// tilted mean of a single noise can only reach values below the right
/// support endpoint.
pub fn check_overshoot_level<T: Real>(
    m: &NoiseModel<T>,
    c: &CoefficientSeq<T>,
    eps: T,
) -> Result<T> {
    if !(eps.is_finite() && eps > T::zero()) {
        return Err(Error::Precondition(format!(
            "overshoot level eps must be a positive real, got {eps}"
        )));
    }
    let ratio = eps / c.sums().total;
    if ratio >= m.support_sup() {
        return Err(Error::Precondition(format!(
            "overshoot level must satisfy 0 < eps/A < s0 (right endpoint of the noise \
             support): got eps/A = {ratio} with s0 = {}",
            m.support_sup()
        )));
    }
    Ok(ratio)
}

/// The unique `τ > 0` with `φ'(τ) = ε/A`.
pub fn solve_tau<T: Real>(m: &NoiseModel<T>, c: &CoefficientSeq<T>, eps: T) -> Result<T> {
    let target = check_overshoot_level(m, c, eps)?;
    let f_tol = T::lit(ROOT_RTOL) * T::one().max(target);
    let mut f = |t: T| m.cgf_d1_raw(t) - target;
    let mut df = |t: T| m.cgf_d2_raw(t);
    let (lo, hi) = bracket_increasing(&mut f, T::zero(), T::lit(BRACKET_SCALE), MAX_DOUBLINGS)?;
    // Small-tilt linearization φ'(τ) ≈ σ²τ seeds Newton.
    let x0 = target / m.sigma_sq();
    solve_increasing(&mut f, &mut df, lo, hi, x0, f_tol)
}

fn check_n(n: i64) -> Result<()> {
    if n < 1 {
        return Err(Error::Precondition(format!("window length n must be >= 1, got {n}")));
    }
    Ok(())
}

/// `ψ_n(t) = n⁻¹ Σ_j φ(c_{n,j} t)` over the finitely many nonzero terms.
pub fn psi_n<T: Real>(m: &NoiseModel<T>, c: &CoefficientSeq<T>, n: i64, t: T) -> Result<T> {
    check_n(n)?;
    if !t.is_finite() {
        return Err(Error::NonFinite { what: "psi_n argument", value: format!("{t}") });
    }
    Ok(psi_terms(m, c, n, t).0)
}

/// `ψ_n'(t)`, computed termwise in closed form.
pub fn psi_n_d1<T: Real>(m: &NoiseModel<T>, c: &CoefficientSeq<T>, n: i64, t: T) -> Result<T> {
    check_n(n)?;
    if !t.is_finite() {
        return Err(Error::NonFinite { what: "psi_n argument", value: format!("{t}") });
    }
    Ok(psi_terms(m, c, n, t).1)
}

/// `ψ_n''(t) > 0`, computed termwise in closed form.
pub fn psi_n_d2<T: Real>(m: &NoiseModel<T>, c: &CoefficientSeq<T>, n: i64, t: T) -> Result<T> {
    check_n(n)?;
    if !t.is_finite() {
        return Err(Error::NonFinite { what: "psi_n argument", value: format!("{t}") });
    }
    Ok(psi_terms(m, c, n, t).2)
}

fn psi_terms<T: Real>(m: &NoiseModel<T>, c: &CoefficientSeq<T>, n: i64, t: T) -> (T, T, T) {
    let (lo, hi) = c.s_n_support(n);
    let mut v = T::zero();
    let mut d1 = T::zero();
    let mut d2 = T::zero();
    for j in lo..=hi {
        let cj = c.s_n_coefficient_raw(n, j);
        if cj.is_zero() {
            continue;
        }
        let arg = cj * t;
        v += m.cgf_raw(arg);
        d1 += cj * m.cgf_d1_raw(arg);
        d2 += cj * cj * m.cgf_d2_raw(arg);
    }
    let nf = T::lit(n as f64);
    (v / nf, d1 / nf, d2 / nf)
}

/// Solve `ψ_n'(θ_n) = ε` for the saddlepoint root `θ_n > 0`.
///
/// Errors when the root cannot be bracketed within the geometrically widened
/// search interval — the window is too short or `ε` is beyond the mean
/// reachable by tilting at this `n`.
pub fn solve_theta_n<T: Real>(
    m: &NoiseModel<T>,
    c: &CoefficientSeq<T>,
    n: i64,
    eps: T,
) -> Result<SaddlepointResult<T>> {
    check_n(n)?;
    check_overshoot_level(m, c, eps)?;
    let f_tol = T::lit(ROOT_RTOL) * T::one().max(eps);
    let mut f = |t: T| psi_terms(m, c, n, t).1 - eps;
    let mut df = |t: T| psi_terms(m, c, n, t).2;
    let hi0 = T::lit(BRACKET_SCALE) / c.max_abs();
    let (lo, hi) =
        bracket_increasing(&mut f, T::zero(), hi0, MAX_DOUBLINGS).map_err(|_| {
            Error::RootNotBracketed(format!(
                "psi_n' does not reach eps = {eps} on the search interval: n = {n} is too \
                 small or eps is beyond the reachable tilted mean"
            ))
        })?;
    let tau_eps = solve_tau(m, c, eps)?;
    let x0 = tau_eps / c.sums().total;
    let theta_n = solve_increasing(&mut f, &mut df, lo, hi, x0, f_tol)?;
    let (psi_at_theta, _, psi_d2_at_theta) = psi_terms(m, c, n, theta_n);
    debug_assert!(psi_d2_at_theta > T::zero());
    let exponent = T::lit(n as f64) * (theta_n * eps - psi_at_theta);
    Ok(SaddlepointResult {
        theta_n,
        psi_at_theta,
        psi_d2_at_theta,
        tau_eps,
        exponent,
        prob_approx: None,
    })
}

/// Tail probability approximation `(C/√n) exp(-n(θ_n ε - ψ_n(θ_n)))` with
/// the limiting prefactor `C = 1/(τ(ε)√(2π φ''(τ(ε))))`.
pub fn prob_e0<T: Real>(
    m: &NoiseModel<T>,
    c: &CoefficientSeq<T>,
    n: i64,
    eps: T,
) -> Result<SaddlepointResult<T>> {
    let mut r = solve_theta_n(m, c, n, eps)?;
    let two_pi = T::lit(2.0) * T::PI();
    let c_pref = T::one() / (r.tau_eps * (two_pi * m.cgf_d2_raw(r.tau_eps)).sqrt());
    let prob = c_pref / T::lit(n as f64).sqrt() * (-r.exponent).exp();
    r.prob_approx = Some(prob);
    Ok(r)
}

/// Generic saddlepoint tail formula for an arbitrary smooth CGF family.
///
/// Solves `ψ'(τ_n) = m_n` on `bracket` and returns
/// `(τ_n, (τ_n √(2π a_n ψ''(τ_n)))⁻¹ exp(-a_n(m_n τ_n - ψ(τ_n))))`.
///
/// `d1` must be strictly increasing on the bracket (checked on a grid) and
/// the solution must have `τ_n > 0`; a target at or below `ψ'(lo)` is
/// rejected as degenerate.
pub fn cs_formula<T: Real>(
    value: impl Fn(T) -> T,
    d1: impl Fn(T) -> T,
    d2: impl Fn(T) -> T,
    a_n: T,
    m_n: T,
    bracket: (T, T),
) -> Result<(T, T)> {
    let (lo, hi) = bracket;
    if !(lo.is_finite() && hi.is_finite() && lo < hi && lo >= T::zero()) {
        return Err(Error::Precondition(format!(
            "bracket must satisfy 0 <= lo < hi, got [{lo}, {hi}]"
        )));
    }
    if !(a_n.is_finite() && a_n > T::zero()) {
        return Err(Error::Precondition(format!("speed a_n must be positive, got {a_n}")));
    }
    // Monotonicity screen for d1 on a fixed grid.
    let grid_n = 32;
    let mut prev = d1(lo);
    for k in 1..=grid_n {
        let x = lo + (hi - lo) * T::of_usize(k) / T::of_usize(grid_n);
        let cur = d1(x);
        if !(cur > prev) {
            return Err(Error::NonMonotoneDerivative(format!(
                "d1 not strictly increasing near {x}"
            )));
        }
        prev = cur;
    }
    let f_lo = d1(lo) - m_n;
    let f_hi = d1(hi) - m_n;
    if f_lo >= T::zero() {
        return Err(Error::Precondition(format!(
            "target mean m_n = {m_n} is not above d1(lo) = {}; the tilt root would be \
             degenerate (tau_n must be strictly positive)",
            d1(lo)
        )));
    }
    if f_hi < T::zero() {
        return Err(Error::RootNotBracketed(format!(
            "d1(hi) = {} below target m_n = {m_n}",
            d1(hi)
        )));
    }
    let f_tol = T::lit(ROOT_RTOL) * T::one().max(m_n.abs());
    let mut f = |t: T| d1(t) - m_n;
    let mut df = |t: T| d2(t);
    let tau_n = solve_increasing(&mut f, &mut df, lo, hi, (lo + hi) * T::lit(0.5), f_tol)?;
    if !(tau_n > T::zero()) {
        return Err(Error::Precondition(format!(
            "solved tilt tau_n = {tau_n} is not strictly positive"
        )));
    }
    let two_pi = T::lit(2.0) * T::PI();
    let pref = T::one() / (tau_n * (two_pi * a_n * d2(tau_n)).sqrt());
    let prob = pref * (-(a_n * (m_n * tau_n - value(tau_n)))).exp();
    Ok((tau_n, prob))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::{normal_pdf, normal_sf};
    use crate::test_support::models;

    fn gauss1() -> NoiseModel<f64> {
        NoiseModel::gaussian(1.0).unwrap()
    }

    fn iid() -> CoefficientSeq<f64> {
        CoefficientSeq::new(0, vec![1.0]).unwrap()
    }

    fn two_tap() -> CoefficientSeq<f64> {
        CoefficientSeq::new(0, vec![0.5, 0.5]).unwrap()
    }

    #[test]
    fn tau_gaussian_closed_forms() {
        let t = solve_tau(&gauss1(), &iid(), 0.5).unwrap();
        assert!((t - 0.5).abs() < 1e-12);

        // sigma = 2, A = 2: φ' = 4t, eps/A = 0.4, tau = 0.1.
        let m = NoiseModel::<f64>::gaussian(2.0).unwrap();
        let c = CoefficientSeq::new(0, vec![2.0]).unwrap();
        let t = solve_tau(&m, &c, 0.8).unwrap();
        assert!((t - 0.1).abs() < 1e-12);
    }

    #[test]
    fn tau_uniform_matches_bisection_oracle() {
        // Oracle: bisection on coth(t) - 1/t = 0.3, independent of the
        // Newton path under test.
        let f = |t: f64| 1.0 / t.tanh() - 1.0 / t - 0.3;
        let (mut lo, mut hi) = (1e-8, 10.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let oracle = 0.5 * (lo + hi);
        let m = NoiseModel::centered_uniform(1.0).unwrap();
        let t = solve_tau(&m, &iid(), 0.3).unwrap();
        assert!((t - oracle).abs() < 1e-10, "{t} vs oracle {oracle}");
        assert!((t - 0.953_149_472_857_405_9).abs() < 1e-11);
    }

    #[test]
    fn tau_preconditions() {
        let m = NoiseModel::centered_uniform(1.0).unwrap();
        assert!(solve_tau(&m, &iid(), 0.0).is_err());
        assert!(solve_tau(&m, &iid(), -0.5).is_err());
        let err = solve_tau(&m, &iid(), 1.0).unwrap_err();
        assert!(err.to_string().contains("eps/A"), "{err}");
    }

    #[test]
    fn psi_n_iid_gaussian_is_quadratic() {
        for n in [1, 5, 50] {
            for t in [-2.0, 0.3, 1.7] {
                assert!((psi_n(&gauss1(), &iid(), n, t).unwrap() - t * t / 2.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn psi_n_zero_at_zero() {
        for (_, m, c, _) in models() {
            for n in [1, 7, 40] {
                assert_eq!(psi_n(&m, &c, n, 0.0).unwrap(), 0.0);
            }
        }
    }

    #[test]
    fn psi_4_two_tap_gaussian_value() {
        // Five contributing noises with weights 0.5, 1, 1, 1, 0.5:
        // ψ₄(1) = (φ(½) + 3φ(1) + φ(½))/4 = 0.4375 for unit Gaussian noise.
        let got = psi_n(&gauss1(), &two_tap(), 4, 1.0).unwrap();
        assert!((got - 0.4375).abs() < 1e-14);
    }

    #[test]
    fn psi_derivatives_match_finite_differences() {
        for (_, m, c, _) in models() {
            for n in [3, 17] {
                for k in -4..=4 {
                    let t = k as f64 * 0.4;
                    let h = 1e-5;
                    let fd1 = (psi_n(&m, &c, n, t + h).unwrap()
                        - psi_n(&m, &c, n, t - h).unwrap())
                        / (2.0 * h);
                    assert!((fd1 - psi_n_d1(&m, &c, n, t).unwrap()).abs() < 1e-6);
                    let h2 = 5e-4;
                    let fd2 = (psi_n(&m, &c, n, t + h2).unwrap()
                        - 2.0 * psi_n(&m, &c, n, t).unwrap()
                        + psi_n(&m, &c, n, t - h2).unwrap())
                        / (h2 * h2);
                    assert!((fd2 - psi_n_d2(&m, &c, n, t).unwrap()).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn theta_n_iid_gaussian_exact() {
        for n in [1, 10, 400] {
            let r = solve_theta_n(&gauss1(), &iid(), n, 0.3).unwrap();
            assert!((r.theta_n - 0.3).abs() < 1e-12);
            assert!((r.exponent - n as f64 * 0.045).abs() < 1e-10);
            assert!(r.exponent > 0.0);
        }
    }

    #[test]
    fn theta_n_converges_to_tau_over_a() {
        let r = solve_theta_n(&gauss1(), &two_tap(), 400, 0.3).unwrap();
        assert!((r.theta_n - r.tau_eps).abs() < 0.01 * r.tau_eps, "theta {}", r.theta_n);
        // ψ_n''(θ_n) → A² φ''(τ) = 1 for this model.
        assert!((r.psi_d2_at_theta - 1.0).abs() < 0.02);
    }

    #[test]
    fn theta_residual_and_tau_gap_shrink_with_n() {
        for (name, m, c, eps) in models() {
            let a = c.sums().total;
            let r100 = solve_theta_n(&m, &c, 100, eps).unwrap();
            let r400 = solve_theta_n(&m, &c, 400, eps).unwrap();
            // Residual of the solved root.
            let res = (psi_n_d1(&m, &c, 400, r400.theta_n).unwrap() - eps).abs();
            assert!(res <= 1e-12 * 1f64.max(eps), "{name}: residual {res}");
            let gap100 = (r100.theta_n - r100.tau_eps / a).abs();
            let gap400 = (r400.theta_n - r400.tau_eps / a).abs();
            assert!(gap400 <= gap100 + 1e-12, "{name}: {gap400} vs {gap100}");
        }
    }

    #[test]
    fn exponent_increasing_in_n() {
        for (name, m, c, eps) in models() {
            let mut prev = -1.0;
            for n in [25, 50, 100, 200, 400] {
                let e = solve_theta_n(&m, &c, n, eps).unwrap().exponent;
                assert!(e > prev, "{name}: exponent not increasing at n = {n}");
                prev = e;
            }
        }
    }

    #[test]
    fn theta_unreachable_reported() {
        // eps/A = 1 - 1e-9 < s0 passes the precondition but needs a tilt
        // beyond the widened bracket.
        let m = NoiseModel::centered_uniform(1.0).unwrap();
        let err = solve_theta_n(&m, &iid(), 50, 1.0 - 1e-9).unwrap_err();
        assert!(err.to_string().contains("too small"), "{err}");
    }

    #[test]
    fn prob_e0_iid_gaussian_reference() {
        // Closed form reduces to φ(3)/3 at n = 100, eps = 0.3.
        let r = prob_e0(&gauss1(), &iid(), 100, 0.3).unwrap();
        let p = r.prob_approx.unwrap();
        assert!((p - normal_pdf(3.0) / 3.0).abs() < 1e-12 * p);
        assert!((p - 1.4773e-3).abs() < 1e-7);

        // Exact tail Φ̄(3); the approximation overshoots by the Mills ratio.
        let exact = normal_sf(3.0);
        assert!((exact - 1.3499e-3).abs() < 1e-7);

        let r400 = prob_e0(&gauss1(), &iid(), 400, 0.3).unwrap();
        let ratio = r400.prob_approx.unwrap() / normal_sf(6.0);
        assert!((ratio - 1.026).abs() < 5e-3, "ratio {ratio}");
        let ratio100 = p / exact;
        assert!((ratio400_closer(ratio, ratio100)), "{ratio} vs {ratio100}");
    }

    fn ratio400_closer(r400: f64, r100: f64) -> bool {
        (r400 - 1.0).abs() < (r100 - 1.0).abs()
    }

    #[test]
    fn prob_in_unit_interval_on_battery() {
        for (name, m, c, eps) in models() {
            for n in [50, 100, 400] {
                let p = prob_e0(&m, &c, n, eps).unwrap().prob_approx.unwrap();
                assert!(p > 0.0 && p < 1.0, "{name} n={n}: p = {p}");
            }
        }
    }

    #[test]
    fn cs_formula_gaussian_closed_forms() {
        let psi = |t: f64| t * t / 2.0;
        let d1 = |t: f64| t;
        let d2 = |_: f64| 1.0;
        let (tau, p) = cs_formula(psi, d1, d2, 100.0, 0.3, (0.0, 2.0)).unwrap();
        assert!((tau - 0.3).abs() < 1e-12);
        assert!((p - normal_pdf(3.0) / 3.0).abs() < 1e-15 * p.abs().max(1.0));

        let (_, p400) = cs_formula(psi, d1, d2, 400.0, 0.3, (0.0, 2.0)).unwrap();
        assert!((p400 - normal_pdf(6.0) / 6.0).abs() < 1e-12 * p400);
        assert!((p400 - 1.0126e-9).abs() < 1e-13);
    }

    #[test]
    fn cs_formula_rejects_degenerate_target() {
        let psi = |t: f64| t * t / 2.0;
        assert!(cs_formula(psi, |t| t, |_| 1.0, 100.0, 0.0, (0.0, 2.0)).is_err());
    }

    #[test]
    fn cs_formula_detects_non_monotone_d1() {
        let err =
            cs_formula(|t: f64| t, |t| (3.0 * t).sin(), |t| (3.0 * t).cos(), 10.0, 0.5, (0.0, 3.0))
                .unwrap_err();
        assert!(matches!(err, Error::NonMonotoneDerivative(_)));
    }

    #[test]
    fn generic_and_specialized_prefactors_agree_at_large_n() {
        for (name, m, c, eps) in models() {
            let n = 400;
            let r = prob_e0(&m, &c, n, eps).unwrap();
            let (tau_n, p_cs) = cs_formula(
                |t| psi_n(&m, &c, n, t).unwrap(),
                |t| psi_n_d1(&m, &c, n, t).unwrap(),
                |t| psi_n_d2(&m, &c, n, t).unwrap(),
                n as f64,
                eps,
                (0.0, 8.0 * r.theta_n.max(0.1)),
            )
            .unwrap();
            assert!((tau_n - r.theta_n).abs() < 1e-9, "{name}");
            let ratio = p_cs / r.prob_approx.unwrap();
            assert!((ratio - 1.0).abs() < 0.02, "{name}: prefactor ratio {ratio}");
        }
    }
}
