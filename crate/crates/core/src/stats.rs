//! Estimation utilities shared by the Monte Carlo modules.

use rand::Rng;

use crate::error::{Error, Result};
use crate::real::Real;

/// Exact total variation over binary patterns is limited to this many lags.
pub const MAX_PATTERN_LAGS: usize = 12;

/// A Monte Carlo estimate with its standard error and effective sample size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate<T> {
    pub value: T,
    pub stderr: T,
    pub n_samples: u64,
    /// `(Σw)²/Σw²`; equals `n_samples` for unweighted samples.
    pub ess: T,
}

/// Self-normalized weighted mean with delta-method standard error.
///
/// `value = Σ w x / Σ w`, `stderr² = Σ w²(x - value)² / (Σ w)²`,
/// `ess = (Σ w)²/Σ w²`. With unit weights this reduces to the ordinary
/// sample mean with `sd/√n` (population normalization).
pub fn weighted_mean_ci<T: Real>(samples: &[T], weights: &[T]) -> Result<Estimate<T>> {
    if samples.is_empty() {
        return Err(Error::EmptyInput("weighted_mean_ci samples"));
    }
    if samples.len() != weights.len() {
        return Err(Error::LengthMismatch(format!(
            "{} samples vs {} weights",
            samples.len(),
            weights.len()
        )));
    }
    let mut w_sum = T::zero();
    let mut w2_sum = T::zero();
    let mut wx_sum = T::zero();
    for (&x, &w) in samples.iter().zip(weights) {
        if !(w.is_finite() && w > T::zero()) {
            return Err(Error::InvalidParameter(format!(
                "weights must be positive reals, got {w}"
            )));
        }
        w_sum += w;
        w2_sum += w * w;
        wx_sum += w * x;
    }
    let value = wx_sum / w_sum;
    let mut dev = T::zero();
    for (&x, &w) in samples.iter().zip(weights) {
        let d = x - value;
        dev += w * w * d * d;
    }
    Ok(Estimate {
        value,
        stderr: dev.sqrt() / w_sum,
        n_samples: samples.len() as u64,
        ess: w_sum * w_sum / w2_sum,
    })
}

/// Mean and standard error of unweighted samples.
pub fn mean_ci<T: Real>(samples: &[T]) -> Result<Estimate<T>> {
    if samples.is_empty() {
        return Err(Error::EmptyInput("mean_ci samples"));
    }
    let n = T::of_usize(samples.len());
    let mean = samples.iter().cloned().sum::<T>() / n;
    let var = samples.iter().map(|&x| (x - mean) * (x - mean)).sum::<T>() / n;
    Ok(Estimate {
        value: mean,
        stderr: (var / n).sqrt(),
        n_samples: samples.len() as u64,
        ess: n,
    })
}

/// A probability law over occurrence patterns of the lags
/// `j ∈ [-k_minus, -1] ∪ [1, k_plus]` (lag 0 is the conditioning event and
/// carries no bit). Bit `b < k_minus` is lag `j = b - k_minus`; bit
/// `b ≥ k_minus` is lag `j = b - k_minus + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct PatternLaw<T> {
    k_minus: usize,
    k_plus: usize,
    probs: Vec<T>,
}

/// Bit position of lag `j` in a pattern; `j` must be nonzero and in window.
pub fn lag_bit(k_minus: usize, k_plus: usize, j: i64) -> usize {
    debug_assert!(j != 0 && j >= -(k_minus as i64) && j <= k_plus as i64);
    if j < 0 {
        (j + k_minus as i64) as usize
    } else {
        k_minus + (j - 1) as usize
    }
}

impl<T: Real> PatternLaw<T> {
    pub fn from_probs(k_minus: usize, k_plus: usize, probs: Vec<T>) -> Result<Self> {
        check_lags(k_minus, k_plus)?;
        if probs.len() != 1 << (k_minus + k_plus) {
            return Err(Error::LengthMismatch(format!(
                "pattern law needs {} entries, got {}",
                1usize << (k_minus + k_plus),
                probs.len()
            )));
        }
        Ok(PatternLaw { k_minus, k_plus, probs })
    }

    pub fn k_minus(&self) -> usize {
        self.k_minus
    }

    pub fn k_plus(&self) -> usize {
        self.k_plus
    }

    pub fn probs(&self) -> &[T] {
        &self.probs
    }

    /// Probability of one pattern (bits as in [`lag_bit`]).
    pub fn prob(&self, pattern: u32) -> T {
        self.probs[pattern as usize]
    }

    /// The law of the index-reflected patterns (lag j swapped with -j).
    /// Requires a symmetric window.
    pub fn reflected(&self) -> Result<Self> {
        if self.k_minus != self.k_plus {
            return Err(Error::WindowMismatch(format!(
                "reflection needs k_minus == k_plus, got {} and {}",
                self.k_minus, self.k_plus
            )));
        }
        let k = self.k_minus;
        let nbits = 2 * k;
        let mut probs = vec![T::zero(); self.probs.len()];
        for (pat, &p) in self.probs.iter().enumerate() {
            let mut rpat = 0usize;
            for b in 0..nbits {
                if pat >> b & 1 == 1 {
                    let j = if b < k { b as i64 - k as i64 } else { (b - k) as i64 + 1 };
                    rpat |= 1 << lag_bit(k, k, -j);
                }
            }
            probs[rpat] = p;
        }
        Ok(PatternLaw { k_minus: k, k_plus: k, probs })
    }
}

fn check_lags(k_minus: usize, k_plus: usize) -> Result<()> {
    let lags = k_minus + k_plus;
    if lags > MAX_PATTERN_LAGS {
        return Err(Error::PatternSpaceTooLarge(lags));
    }
    Ok(())
}

/// Accumulator of weighted pattern occurrences; partial accumulators merge
/// associatively, which is what the worker pools rely on.
#[derive(Debug, Clone)]
pub struct PatternAccum<T> {
    k_minus: usize,
    k_plus: usize,
    w_sum: Vec<T>,
    w2_sum: Vec<T>,
    count: Vec<u64>,
}

impl<T: Real> PatternAccum<T> {
    pub fn new(k_minus: usize, k_plus: usize) -> Result<Self> {
        check_lags(k_minus, k_plus)?;
        let size = 1usize << (k_minus + k_plus);
        Ok(PatternAccum {
            k_minus,
            k_plus,
            w_sum: vec![T::zero(); size],
            w2_sum: vec![T::zero(); size],
            count: vec![0; size],
        })
    }

    pub fn add(&mut self, pattern: u32, weight: T) {
        let i = pattern as usize;
        self.w_sum[i] += weight;
        self.w2_sum[i] += weight * weight;
        self.count[i] += 1;
    }

    pub fn merge(&mut self, other: &PatternAccum<T>) -> Result<()> {
        if self.k_minus != other.k_minus || self.k_plus != other.k_plus {
            return Err(Error::WindowMismatch(format!(
                "({}, {}) vs ({}, {})",
                self.k_minus, self.k_plus, other.k_minus, other.k_plus
            )));
        }
        for i in 0..self.w_sum.len() {
            self.w_sum[i] += other.w_sum[i];
            self.w2_sum[i] += other.w2_sum[i];
            self.count[i] += other.count[i];
        }
        Ok(())
    }

    pub fn total_weight(&self) -> T {
        self.w_sum.iter().cloned().sum()
    }

    pub fn total_count(&self) -> u64 {
        self.count.iter().sum()
    }

    /// `(Σw)²/Σw²` over every added weight.
    pub fn ess(&self) -> T {
        let w: T = self.w_sum.iter().cloned().sum();
        let w2: T = self.w2_sum.iter().cloned().sum();
        if w2 > T::zero() {
            w * w / w2
        } else {
            T::zero()
        }
    }

    /// Normalized law, plus a delta-method standard error per pattern.
    pub fn law_with_stderr(&self) -> Result<(PatternLaw<T>, Vec<T>)> {
        let w: T = self.w_sum.iter().cloned().sum();
        if !(w > T::zero()) {
            return Err(Error::NoAcceptedMass("pattern accumulator holds zero weight".into()));
        }
        let w2: T = self.w2_sum.iter().cloned().sum();
        let probs: Vec<T> = self.w_sum.iter().map(|&x| x / w).collect();
        // se² of p̂_k = Σ wᵢ 1_k / Σ w: Σ wᵢ²(1_k - p)² / (Σw)²
        //           = (w2_k (1 - 2p) + p² Σw²) / (Σw)².
        let stderr: Vec<T> = probs
            .iter()
            .zip(&self.w2_sum)
            .map(|(&p, &w2k)| {
                let var = (w2k * (T::one() - (p + p)) + p * p * w2).max(T::zero());
                var.sqrt() / w
            })
            .collect();
        Ok((PatternLaw { k_minus: self.k_minus, k_plus: self.k_plus, probs }, stderr))
    }

    pub fn law(&self) -> Result<PatternLaw<T>> {
        Ok(self.law_with_stderr()?.0)
    }

    pub fn k_minus(&self) -> usize {
        self.k_minus
    }

    pub fn k_plus(&self) -> usize {
        self.k_plus
    }

    pub fn weight_sums(&self) -> &[T] {
        &self.w_sum
    }

    pub fn counts(&self) -> &[u64] {
        &self.count
    }
}

/// Total variation distance `½ Σ |p_a - p_b|` between two pattern laws on
/// the same lag window.
pub fn tv_distance<T: Real>(a: &PatternLaw<T>, b: &PatternLaw<T>) -> Result<T> {
    if a.k_minus != b.k_minus || a.k_plus != b.k_plus {
        return Err(Error::WindowMismatch(format!(
            "({}, {}) vs ({}, {})",
            a.k_minus, a.k_plus, b.k_minus, b.k_plus
        )));
    }
    let half = T::lit(0.5);
    Ok(a.probs.iter().zip(&b.probs).map(|(&x, &y)| (x - y).abs()).sum::<T>() * half)
}

/// Multinomial-bootstrap standard error of the TV distance between two
/// estimated laws, treating each side as `ess` effective multinomial draws.
pub fn tv_distance_bootstrap_se<T: Real, R: Rng + ?Sized>(
    a: &PatternLaw<T>,
    ess_a: T,
    b: &PatternLaw<T>,
    ess_b: T,
    replicates: usize,
    rng: &mut R,
) -> Result<T> {
    let resample = |law: &PatternLaw<T>, ess: T, rng: &mut R| -> PatternLaw<T> {
        // Normal perturbation of each cell count at multinomial scale.
        let mut probs: Vec<T> = law
            .probs
            .iter()
            .map(|&p| {
                let sd = (p * (T::one() - p) / ess).max(T::zero()).sqrt();
                (p + sd * T::std_normal(rng)).max(T::zero())
            })
            .collect();
        let total: T = probs.iter().cloned().sum();
        if total > T::zero() {
            for p in &mut probs {
                *p /= total;
            }
        }
        PatternLaw { k_minus: law.k_minus, k_plus: law.k_plus, probs }
    };
    let mut draws = Vec::with_capacity(replicates);
    for _ in 0..replicates {
        let la = resample(a, ess_a, rng);
        let lb = resample(b, ess_b, rng);
        draws.push(tv_distance(&la, &lb)?);
    }
    let n = T::of_usize(replicates);
    let mean = draws.iter().cloned().sum::<T>() / n;
    let var = draws.iter().map(|&x| (x - mean) * (x - mean)).sum::<T>() / n;
    Ok(var.sqrt())
}

/// Two-sample Kolmogorov-Smirnov statistic: the sup-distance between the
/// empirical CDFs.
pub fn ks_distance<T: Real>(a: &[T], b: &[T]) -> Result<T> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyInput("ks_distance samples"));
    }
    let mut xa = a.to_vec();
    let mut xb = b.to_vec();
    xa.sort_by(|x, y| x.partial_cmp(y).expect("non-NaN samples"));
    xb.sort_by(|x, y| x.partial_cmp(y).expect("non-NaN samples"));
    let (na, nb) = (T::of_usize(xa.len()), T::of_usize(xb.len()));
    let (mut i, mut j) = (0usize, 0usize);
    let mut d = T::zero();
    while i < xa.len() && j < xb.len() {
        let x = xa[i].min(xb[j]);
        while i < xa.len() && xa[i] <= x {
            i += 1;
        }
        while j < xb.len() && xb[j] <= x {
            j += 1;
        }
        let fa = T::of_usize(i) / na;
        let fb = T::of_usize(j) / nb;
        d = d.max((fa - fb).abs());
    }
    Ok(d)
}
