//! Finite-support coefficient sequences and their partial-sum functionals.
//!
//! A sequence holds `a_i` for `i` in `[window_lo, window_hi]` (zero outside)
//! with total sum `A > 0`. Restricting to finite support makes every series
//! the formulas consume a finite sum; users with infinite tails truncate to
//! tolerance before constructing a sequence.
//!
//! Notation used throughout the crate, all of it computed here:
//! `A = A⁻ + A⁺` with `A⁻ = Σ_{i<0} a_i`, `A⁺ = Σ_{i≥0} a_i`;
//! `Ā = Σ |a_i|`; the saturating partial sums `A_n⁺ = Σ_{j=0..n} a_j`,
//! `A_n⁻ = Σ_{j=1..n} a_{-j}`; and the window-sum coefficient
//! `c_{n,j} = Σ_{i=0..n-1} a_{i-j}`, the weight of noise `Z_j` in
//! `S_n = Σ_{i=0..n-1} X_i`.

use crate::error::{Error, Result};
use crate::real::Real;

/// The four sums `(A, A⁻, A⁺, Ā)` of a coefficient sequence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sums<T> {
    pub total: T,
    pub minus: T,
    pub plus: T,
    pub abs: T,
}

#[derive(Debug, Clone)]
pub struct CoefficientSeq<T> {
    window_lo: i64,
    values: Vec<T>,
    sums: Sums<T>,
    max_abs: T,
    /// prefix_plus[k] = A_k⁺ for k = 0 ..= max(window_hi, 0).
    prefix_plus: Vec<T>,
    /// prefix_minus[k] = A_k⁻ for k = 0 ..= max(-window_lo, 0).
    prefix_minus: Vec<T>,
}

impl<T: Real> CoefficientSeq<T> {
    /// Build from `a_{window_lo}, ..., a_{window_lo + values.len() - 1}`.
    ///
    /// Rejects empty or all-zero sequences and any sequence with total sum
    /// `A ≤ 0`. For `A < 0`, negate both the sequence and the noise to land
    /// in the supported sign convention (for asymmetric noise this changes
    /// the noise law, not just its sign).
    pub fn new(window_lo: i64, values: Vec<T>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyInput("coefficient sequence"));
        }
        for &v in &values {
            if !v.is_finite() {
                return Err(Error::NonFinite { what: "coefficient", value: format!("{v}") });
            }
        }
        if values.iter().all(|v| v.is_zero()) {
            return Err(Error::InvalidParameter(
                "coefficient sequence must have at least one nonzero tap".into(),
            ));
        }
        let window_hi = window_lo + values.len() as i64 - 1;
        let at = |i: i64| -> T {
            if i < window_lo || i > window_hi {
                T::zero()
            } else {
                values[(i - window_lo) as usize]
            }
        };
        let mut minus = T::zero();
        let mut plus = T::zero();
        let mut abs = T::zero();
        let mut max_abs = T::zero();
        for (k, &v) in values.iter().enumerate() {
            let i = window_lo + k as i64;
            if i < 0 {
                minus += v;
            } else {
                plus += v;
            }
            abs += v.abs();
            max_abs = max_abs.max(v.abs());
        }
        let total = minus + plus;
        if total <= T::zero() {
            return Err(Error::InvalidParameter(if total < T::zero() {
                format!(
                    "total coefficient sum A = {total} is negative; negate the sequence \
                     (and the noise, if asymmetric) to obtain A > 0"
                )
            } else {
                "total coefficient sum A must be nonzero and positive".into()
            }));
        }
        let mut prefix_plus = Vec::new();
        if window_hi >= 0 {
            let mut acc = T::zero();
            for k in 0..=window_hi {
                acc += at(k);
                prefix_plus.push(acc);
            }
        }
        let mut prefix_minus = vec![T::zero()];
        if window_lo < 0 {
            let mut acc = T::zero();
            for k in 1..=(-window_lo) {
                acc += at(-k);
                prefix_minus.push(acc);
            }
        }
        Ok(CoefficientSeq {
            window_lo,
            values,
            sums: Sums { total, minus, plus, abs },
            max_abs,
            prefix_plus,
            prefix_minus,
        })
    }

    pub fn window_lo(&self) -> i64 {
        self.window_lo
    }

    pub fn window_hi(&self) -> i64 {
        self.window_lo + self.values.len() as i64 - 1
    }

    /// `a_i`, zero outside the support window.
    pub fn value(&self, i: i64) -> T {
        if i < self.window_lo || i > self.window_hi() {
            T::zero()
        } else {
            self.values[(i - self.window_lo) as usize]
        }
    }

    /// `(A, A⁻, A⁺, Ā)`.
    pub fn sums(&self) -> Sums<T> {
        self.sums
    }

    /// Largest |a_i|; sets the scale of solver brackets.
    pub fn max_abs(&self) -> T {
        self.max_abs
    }

    /// `A_n⁺ = Σ_{j=0..n} a_j`, saturating at `A⁺` past the window.
    pub fn partial_plus(&self, n: i64) -> Result<T> {
        if n < 0 {
            return Err(Error::Precondition(format!("partial sums need n >= 0, got {n}")));
        }
        Ok(self.partial_plus_raw(n))
    }

    /// `A_n⁻ = Σ_{j=1..n} a_{-j}` (empty sum 0 at n = 0), saturating at `A⁻`.
    pub fn partial_minus(&self, n: i64) -> Result<T> {
        if n < 0 {
            return Err(Error::Precondition(format!("partial sums need n >= 0, got {n}")));
        }
        Ok(self.partial_minus_raw(n))
    }

    #[inline]
    pub(crate) fn partial_plus_raw(&self, n: i64) -> T {
        debug_assert!(n >= 0);
        if self.prefix_plus.is_empty() {
            return T::zero();
        }
        let idx = n.min(self.prefix_plus.len() as i64 - 1);
        self.prefix_plus[idx as usize]
    }

    #[inline]
    pub(crate) fn partial_minus_raw(&self, n: i64) -> T {
        debug_assert!(n >= 0);
        let idx = n.min(self.prefix_minus.len() as i64 - 1);
        self.prefix_minus[idx as usize]
    }

    /// Coefficient `c_{n,j}` of noise `Z_j` in the window sum `S_n`.
    ///
    /// Piecewise in partial sums: `A⁺_{n-1-j} + A⁻_j` on `0 ≤ j ≤ n-1`,
    /// `A⁻_j − A⁻_{j-n}` on `j ≥ n`, and `A⁺_{|j|+n-1} − A⁺_{|j|-1}` on
    /// `j ≤ -1`; all three agree with the direct sum `Σ_{i=0..n-1} a_{i-j}`.
    pub fn s_n_coefficient(&self, n: i64, j: i64) -> Result<T> {
        if n < 1 {
            return Err(Error::Precondition(format!("window length n must be >= 1, got {n}")));
        }
        Ok(self.s_n_coefficient_raw(n, j))
    }

    #[inline]
    pub(crate) fn s_n_coefficient_raw(&self, n: i64, j: i64) -> T {
        debug_assert!(n >= 1);
        if j >= n {
            self.partial_minus_raw(j) - self.partial_minus_raw(j - n)
        } else if j >= 0 {
            self.partial_plus_raw(n - 1 - j) + self.partial_minus_raw(j)
        } else {
            let jp = -j;
            self.partial_plus_raw(jp + n - 1) - self.partial_plus_raw(jp - 1)
        }
    }

    /// Index range outside which `c_{n,j}` vanishes: `[-window_hi, n-1-window_lo]`.
    pub fn s_n_support(&self, n: i64) -> (i64, i64) {
        debug_assert!(n >= 1);
        (-self.window_hi(), n - 1 - self.window_lo)
    }
}
