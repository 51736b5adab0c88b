//! Monte Carlo for the moving average process itself: window simulation,
//! exceedance detection, and conditional laws given the event at lag 0.
//!
//! The window event at lag `j` is `{Σ_{i=j..j+n-1} X_i ≥ nε}`. Two routes to
//! the conditional law given the lag-0 event are provided:
//!
//! * rejection — simulate unconditionally, keep draws where the lag-0 event
//!   occurred (exact but useless for genuinely rare events);
//! * exponential tilting — draw every noise `Z_d` that `S_n` loads from the
//!   tilted law `G_{θ_n c_{n,d}}` (noises the lag windows need but `S_n`
//!   does not stay untilted), weight by `exp(nψ_n(θ_n) - θ_n S_n)`, and form
//!   self-normalized ratio estimates. Under this tilt the event has
//!   probability near 1/2, so the conditional law is cheap at any rarity.

use rand::Rng;

use crate::coefficients::CoefficientSeq;
use crate::error::{Error, Result};
use crate::noise::NoiseModel;
use crate::real::Real;
use crate::saddlepoint::{check_overshoot_level, solve_theta_n};
use crate::stats::{lag_bit, Estimate, PatternAccum, PatternLaw};

/// Sliding window sums are recomputed from scratch at this cadence to cap
/// floating-point drift on long lag ranges.
const RESUM_INTERVAL: usize = 1 << 16;

/// One rare-event instance: window length, overshoot level, observed lags.
#[derive(Debug, Clone, Copy)]
pub struct WindowSpec<T> {
    n: i64,
    eps: T,
    k_minus: usize,
    k_plus: usize,
}

impl<T: Real> WindowSpec<T> {
    /// Validates `n ≥ 1` and `0 < eps/A < s₀` against the model.
    pub fn new(
        m: &NoiseModel<T>,
        c: &CoefficientSeq<T>,
        n: i64,
        eps: T,
        k_minus: usize,
        k_plus: usize,
    ) -> Result<Self> {
        if n < 1 {
            return Err(Error::Precondition(format!("window length n must be >= 1, got {n}")));
        }
        check_overshoot_level(m, c, eps)?;
        Ok(WindowSpec { n, eps, k_minus, k_plus })
    }

    pub fn n(&self) -> i64 {
        self.n
    }

    pub fn eps(&self) -> T {
        self.eps
    }

    pub fn k_minus(&self) -> usize {
        self.k_minus
    }

    pub fn k_plus(&self) -> usize {
        self.k_plus
    }

    /// Number of observed lags, including lag 0.
    pub fn n_lags(&self) -> usize {
        self.k_minus + self.k_plus + 1
    }

    /// Index range of the noises any observed window depends on.
    pub fn noise_range(&self, c: &CoefficientSeq<T>) -> (i64, i64) {
        (
            -(self.k_minus as i64) - c.window_hi(),
            self.k_plus as i64 + self.n - 1 - c.window_lo(),
        )
    }
}

/// One simulated (or weighted) observation of the lag window.
#[derive(Debug, Clone)]
pub struct ConditionalSample<T> {
    /// Event indicators over lags `-k_minus ..= k_plus`.
    pub indicators: Vec<bool>,
    /// Window sum minus `nε` over the same lags.
    pub overshoots: Vec<T>,
    /// Importance weight; 1 for unconditional simulation.
    pub weight: T,
}

impl<T: Real> ConditionalSample<T> {
    /// Bit pattern over the nonzero lags (lag 0 is the conditioning event).
    pub fn pattern(&self, spec: &WindowSpec<T>) -> u32 {
        let mut bits = 0u32;
        for (off, &ind) in self.indicators.iter().enumerate() {
            let j = off as i64 - spec.k_minus as i64;
            if j != 0 && ind {
                bits |= 1 << lag_bit(spec.k_minus, spec.k_plus, j);
            }
        }
        bits
    }
}

/// Noise values on a contiguous index range.
#[derive(Debug, Clone)]
pub struct NoiseSlab<T> {
    pub lo: i64,
    pub values: Vec<T>,
}

impl<T: Real> NoiseSlab<T> {
    #[inline]
    pub fn get(&self, d: i64) -> T {
        self.values[(d - self.lo) as usize]
    }
}

/// Window sums over the observed lags from explicit noise values, by the
/// sliding recurrence `S(j+1) = S(j) - X_j + X_{j+n}` with periodic full
/// recomputation. This is the deterministic kernel behind every simulator
/// here and a test hook for forced noise paths.
pub fn window_sums_from_noises<T: Real>(
    c: &CoefficientSeq<T>,
    spec: &WindowSpec<T>,
    noises: &NoiseSlab<T>,
) -> Vec<T> {
    let k_minus = spec.k_minus as i64;
    let x = |i: i64| -> T {
        let mut acc = T::zero();
        for k in c.window_lo()..=c.window_hi() {
            acc += c.value(k) * noises.get(i - k);
        }
        acc
    };
    let full = |j: i64| -> T {
        let mut acc = T::zero();
        for i in j..j + spec.n {
            acc += x(i);
        }
        acc
    };
    let mut sums = Vec::with_capacity(spec.n_lags());
    let mut s = full(-k_minus);
    sums.push(s);
    for (step, j) in (-k_minus..spec.k_plus as i64).enumerate() {
        if (step + 1) % RESUM_INTERVAL == 0 {
            s = full(j + 1);
        } else {
            s = s - x(j) + x(j + spec.n);
        }
        sums.push(s);
    }
    sums
}

fn sample_from_sums<T: Real>(spec: &WindowSpec<T>, sums: &[T], weight: T) -> ConditionalSample<T> {
    let level = T::lit(spec.n as f64) * spec.eps;
    let overshoots: Vec<T> = sums.iter().map(|&s| s - level).collect();
    let indicators: Vec<bool> = overshoots.iter().map(|&o| o >= T::zero()).collect();
    ConditionalSample { indicators, overshoots, weight }
}

/// Unconditional simulation of one lag window: draws exactly the noises the
/// window depends on and returns indicators and overshoots.
pub fn simulate_window<T: Real, R: Rng + ?Sized>(
    m: &NoiseModel<T>,
    c: &CoefficientSeq<T>,
    spec: &WindowSpec<T>,
    rng: &mut R,
) -> ConditionalSample<T> {
    let (d_lo, d_hi) = spec.noise_range(c);
    let values: Vec<T> = (d_lo..=d_hi).map(|_| m.sample(rng)).collect();
    let slab = NoiseSlab { lo: d_lo, values };
    let sums = window_sums_from_noises(c, spec, &slab);
    sample_from_sums(spec, &sums, T::one())
}

/// Precomputed saddlepoint tilt for one window spec.
struct WindowTilt<T> {
    theta: T,
    /// `n(θε - ψ_n(θ))`, so the weight is `exp(-exponent - θ(S_n - nε))`.
    exponent: T,
    level: T,
}

impl<T: Real> WindowTilt<T> {
    fn build(m: &NoiseModel<T>, c: &CoefficientSeq<T>, spec: &WindowSpec<T>) -> Result<Self> {
        let r = solve_theta_n(m, c, spec.n, spec.eps)?;
        Ok(WindowTilt {
            theta: r.theta_n,
            exponent: r.exponent,
            level: T::lit(spec.n as f64) * spec.eps,
        })
    }

    /// Tilt argument for noise index `d`: `θ_n c_{n,d}`, zero off support.
    fn tilt(&self, c: &CoefficientSeq<T>, n: i64, d: i64) -> T {
        self.theta * c.s_n_coefficient_raw(n, d)
    }
}

/// Partial sums of the importance-sampling estimate of `P(E_0)`; merges
/// associatively across chunks.
#[derive(Debug, Clone, Copy)]
pub struct P0Accum<T> {
    pub sum_w1: T,
    pub sum_w1_sq: T,
    pub sum_w: T,
    pub sum_w_sq: T,
    /// Σ of `S_n/n` across draws (tilt diagnostic).
    pub sum_mean: T,
    pub n: u64,
}

impl<T: Real> P0Accum<T> {
    pub fn zero() -> Self {
        P0Accum {
            sum_w1: T::zero(),
            sum_w1_sq: T::zero(),
            sum_w: T::zero(),
            sum_w_sq: T::zero(),
            sum_mean: T::zero(),
            n: 0,
        }
    }

    pub fn merge(&mut self, o: &P0Accum<T>) {
        self.sum_w1 += o.sum_w1;
        self.sum_w1_sq += o.sum_w1_sq;
        self.sum_w += o.sum_w;
        self.sum_w_sq += o.sum_w_sq;
        self.sum_mean += o.sum_mean;
        self.n += o.n;
    }

    /// The estimate `mean(w·1)`, its standard error, and the weight ESS.
    pub fn estimate(&self) -> Estimate<T> {
        let n = T::lit(self.n as f64);
        let value = self.sum_w1 / n;
        let var = (self.sum_w1_sq / n - value * value).max(T::zero());
        let ess = if self.sum_w_sq > T::zero() {
            self.sum_w * self.sum_w / self.sum_w_sq
        } else {
            T::zero()
        };
        Estimate { value, stderr: (var / n).sqrt(), n_samples: self.n, ess }
    }

    /// Mean of `S_n/n` across the tilted draws.
    pub fn tilted_window_mean(&self) -> T {
        self.sum_mean / T::lit(self.n as f64)
    }
}

fn p0_chunk<T: Real, R: Rng + ?Sized>(
    m: &NoiseModel<T>,
    c: &CoefficientSeq<T>,
    spec: &WindowSpec<T>,
    theta_zero: bool,
    count: u64,
    rng: &mut R,
) -> Result<P0Accum<T>> {
    let tilt = if theta_zero {
        WindowTilt {
            theta: T::zero(),
            exponent: T::zero(),
            level: T::lit(spec.n as f64) * spec.eps,
        }
    } else {
        WindowTilt::build(m, c, spec)?
    };
    let n = spec.n;
    let (s_lo, s_hi) = c.s_n_support(n);
    let nf = T::lit(n as f64);
    let mut acc = P0Accum::zero();
    for _ in 0..count {
        // Only the noises S_n loads are needed for the probability.
        let mut s_n = T::zero();
        for d in s_lo..=s_hi {
            let cd = c.s_n_coefficient_raw(n, d);
            if cd.is_zero() {
                continue;
            }
            let z = m.sample_tilted(tilt.theta * cd, rng);
            s_n += cd * z;
        }
        let w = (-(tilt.exponent + tilt.theta * (s_n - tilt.level))).exp();
        let hit = s_n >= tilt.level;
        let w1 = if hit { w } else { T::zero() };
        acc.sum_w1 += w1;
        acc.sum_w1_sq += w1 * w1;
        acc.sum_w += w;
        acc.sum_w_sq += w * w;
        acc.sum_mean += s_n / nf;
        acc.n += 1;
    }
    Ok(acc)
}

/// One chunk of the tilted `P(E_0)` estimator: partial sums for `count`
/// draws from `rng`. Chunks merge associatively in a fixed order, which is
/// what makes parallel runs reproducible.
pub fn estimate_p_e0_accum<T: Real, R: Rng + ?Sized>(
    m: &NoiseModel<T>,
    c: &CoefficientSeq<T>,
    spec: &WindowSpec<T>,
    count: u64,
    rng: &mut R,
) -> Result<P0Accum<T>> {
    p0_chunk(m, c, spec, false, count, rng)
}

/// Importance-sampling estimate of `P(E_0)` under the saddlepoint tilt.
pub fn estimate_p_e0_mc<T: Real, R: Rng + ?Sized>(
    m: &NoiseModel<T>,
    c: &CoefficientSeq<T>,
    spec: &WindowSpec<T>,
    n_samples: u64,
    rng: &mut R,
) -> Result<Estimate<T>> {
    if n_samples < 1 {
        return Err(Error::Precondition("n_samples must be >= 1".into()));
    }
    Ok(p0_chunk(m, c, spec, false, n_samples, rng)?.estimate())
}

/// Naive (untilted) Monte Carlo estimate of `P(E_0)`; the unbiasedness
/// oracle for the tilted estimator on easy events.
pub fn estimate_p_e0_naive<T: Real, R: Rng + ?Sized>(
    m: &NoiseModel<T>,
    c: &CoefficientSeq<T>,
    spec: &WindowSpec<T>,
    n_samples: u64,
    rng: &mut R,
) -> Result<Estimate<T>> {
    if n_samples < 1 {
        return Err(Error::Precondition("n_samples must be >= 1".into()));
    }
    Ok(p0_chunk(m, c, spec, true, n_samples, rng)?.estimate())
}

/// One overshoot observation attached to a lag.
#[derive(Debug, Clone, Copy)]
pub struct OvershootRow<T> {
    pub lag: i64,
    pub value: T,
    pub weight: T,
}

/// Empirical conditional law from rejection sampling.
#[derive(Debug, Clone)]
pub struct RejectionLaw<T> {
    pub law: PatternLaw<T>,
    /// Multinomial standard error per pattern.
    pub stderr: Vec<T>,
    pub overshoots: Vec<OvershootRow<T>>,
    pub acceptance_rate: T,
    pub n_accepted: u64,
    pub n_draws: u64,
}

/// Conditional law given the lag-0 event by plain rejection.
///
/// Simulates windows until `n_accepted_target` draws with the lag-0 event
/// have been kept or `max_draws` spent; errors only if nothing was accepted.
/// At most `overshoot_cap` overshoot rows are collected.
pub fn conditional_law_rejection<T: Real, R: Rng + ?Sized>(
    m: &NoiseModel<T>,
    c: &CoefficientSeq<T>,
    spec: &WindowSpec<T>,
    n_accepted_target: u64,
    max_draws: u64,
    overshoot_cap: usize,
    rng: &mut R,
) -> Result<RejectionLaw<T>> {
    if n_accepted_target < 1 || max_draws < 1 {
        return Err(Error::Precondition("targets must be >= 1".into()));
    }
    let mut patterns = PatternAccum::new(spec.k_minus, spec.k_plus)?;
    let mut overshoots = Vec::new();
    let mut n_accepted = 0u64;
    let mut n_draws = 0u64;
    while n_accepted < n_accepted_target && n_draws < max_draws {
        let s = simulate_window(m, c, spec, rng);
        n_draws += 1;
        if !s.indicators[spec.k_minus] {
            continue;
        }
        n_accepted += 1;
        patterns.add(s.pattern(spec), T::one());
        if overshoots.len() + spec.n_lags() <= overshoot_cap {
            for (off, &v) in s.overshoots.iter().enumerate() {
                overshoots.push(OvershootRow {
                    lag: off as i64 - spec.k_minus as i64,
                    value: v,
                    weight: T::one(),
                });
            }
        }
    }
    if n_accepted == 0 {
        return Err(Error::RejectionExhausted(format!("0 accepted in {n_draws} draws")));
    }
    let (law, _) = patterns.law_with_stderr()?;
    let na = T::lit(n_accepted as f64);
    let stderr = law
        .probs()
        .iter()
        .map(|&p| (p * (T::one() - p) / na).max(T::zero()).sqrt())
        .collect();
    Ok(RejectionLaw {
        law,
        stderr,
        overshoots,
        acceptance_rate: na / T::lit(n_draws as f64),
        n_accepted,
        n_draws,
    })
}

/// Associatively mergeable partial state of the tilted conditional law.
#[derive(Debug, Clone)]
pub struct TiltedLawAccum<T> {
    patterns: PatternAccum<T>,
    overshoots: Vec<OvershootRow<T>>,
    overshoot_cap: usize,
    n_samples: u64,
}

impl<T: Real> TiltedLawAccum<T> {
    pub fn merge(&mut self, other: &TiltedLawAccum<T>) -> Result<()> {
        self.patterns.merge(&other.patterns)?;
        self.n_samples += other.n_samples;
        for row in &other.overshoots {
            if self.overshoots.len() >= self.overshoot_cap {
                break;
            }
            self.overshoots.push(*row);
        }
        Ok(())
    }

    /// Finalize into the ratio-estimated law.
    pub fn finish(self) -> Result<TiltedLaw<T>> {
        let ess = self.patterns.ess();
        let accepted_weight = self.patterns.total_weight();
        let n_accepted = self.patterns.total_count();
        let (law, stderr) = self.patterns.law_with_stderr()?;
        Ok(TiltedLaw {
            law,
            stderr,
            overshoots: self.overshoots,
            ess,
            n_samples: self.n_samples,
            n_accepted,
            accepted_weight,
        })
    }
}

/// Weighted empirical conditional law from the tilted sampler.
#[derive(Debug, Clone)]
pub struct TiltedLaw<T> {
    pub law: PatternLaw<T>,
    /// Delta-method standard error per pattern.
    pub stderr: Vec<T>,
    pub overshoots: Vec<OvershootRow<T>>,
    /// `(Σw)²/Σw²` over the draws that hit the conditioning event.
    pub ess: T,
    pub n_samples: u64,
    pub n_accepted: u64,
    pub accepted_weight: T,
}

/// One chunk of the tilted conditional-law estimator.
///
/// Every noise `S_n` loads is drawn from its tilted law; the extra noises
/// the lag windows need are drawn untilted (their window-sum coefficient is
/// zero, so the weight does not involve them).
pub fn conditional_law_tilted_accum<T: Real, R: Rng + ?Sized>(
    m: &NoiseModel<T>,
    c: &CoefficientSeq<T>,
    spec: &WindowSpec<T>,
    count: u64,
    overshoot_cap: usize,
    rng: &mut R,
) -> Result<TiltedLawAccum<T>> {
    let tilt = WindowTilt::build(m, c, spec)?;
    let (d_lo, d_hi) = spec.noise_range(c);
    let mut acc = TiltedLawAccum {
        patterns: PatternAccum::new(spec.k_minus, spec.k_plus)?,
        overshoots: Vec::new(),
        overshoot_cap,
        n_samples: 0,
    };
    let mut values = vec![T::zero(); (d_hi - d_lo + 1) as usize];
    for _ in 0..count {
        for (off, v) in values.iter_mut().enumerate() {
            let d = d_lo + off as i64;
            *v = m.sample_tilted(tilt.tilt(c, spec.n, d), rng);
        }
        let slab = NoiseSlab { lo: d_lo, values };
        let sums = window_sums_from_noises(c, spec, &slab);
        values = slab.values;
        let s_n = sums[spec.k_minus];
        let w = (-(tilt.exponent + tilt.theta * (s_n - tilt.level))).exp();
        let sample = sample_from_sums(spec, &sums, w);
        acc.n_samples += 1;
        if !sample.indicators[spec.k_minus] {
            continue;
        }
        acc.patterns.add(sample.pattern(spec), w);
        if acc.overshoots.len() + spec.n_lags() <= overshoot_cap {
            for (off, &v) in sample.overshoots.iter().enumerate() {
                acc.overshoots.push(OvershootRow {
                    lag: off as i64 - spec.k_minus as i64,
                    value: v,
                    weight: w,
                });
            }
        }
    }
    Ok(acc)
}

/// Conditional law given the lag-0 event by exponential tilting, as a
/// self-normalized ratio estimate with its conditioned-weight ESS.
pub fn conditional_law_tilted<T: Real, R: Rng + ?Sized>(
    m: &NoiseModel<T>,
    c: &CoefficientSeq<T>,
    spec: &WindowSpec<T>,
    n_samples: u64,
    overshoot_cap: usize,
    rng: &mut R,
) -> Result<TiltedLaw<T>> {
    if n_samples < 1 {
        return Err(Error::Precondition("n_samples must be >= 1".into()));
    }
    conditional_law_tilted_accum(m, c, spec, n_samples, overshoot_cap, rng)?.finish()
}
