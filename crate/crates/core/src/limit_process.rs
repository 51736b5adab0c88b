//! Exact sampling of the limiting cluster process.
//!
//! Conditionally on a window exceedance at lag 0, the indicator process of
//! nearby exceedances converges (as the window length grows) to
//!
//! ```text
//! V_j = 1(T* ≥ Σ_{i=0..j-1} (U_i⁻ - U_i⁺))   for j ≥ 1,
//! V_j = 1(T* ≥ Σ_{i=j..-1} (U_i⁺ - U_i⁻))   for j ≤ -1,
//! ```
//!
//! where `T*` is exponential with rate `τ(ε)/A`, independent of a single
//! two-sided family of tilted noises `Z_d^±` with the index-dependent tilts
//! of [`tilt_parameter`], and `U_i^± = Σ_k a_k Z_{i-k}^±`. The crossing sums
//! drift upward, so `V_j` eventually sticks at 0 in both directions; the
//! cluster sizes are `D^± = Σ V_j` over each side.
//!
//! A draw walks each side until the crossing sum clears `T*` by a safety
//! margin chosen from the walk's level-crossing decay exponent (the positive
//! root `γ` of `log E e^{-γ(U⁻-U⁺)} = 0` for the asymptotic step law), so
//! that missing a later `V_j = 1` has probability at most `tail_delta`.
//!
//! The module also samples the limiting overshoot process, its
//! exponential image `Y` together with the time-change identity
//! `E[H(t·B^j Y) 1(Y_{-j} > 1/t)] = t^{τ/A} E[H(Y) 1(Y_j > t)]`
//! (`(B^j Y)_k = Y_{k-j}`), the i.i.d. random-walk specialization, and the
//! rescaled crossing process used by the small-`ε` diagnostics.

use rand::Rng;

use crate::coefficients::CoefficientSeq;
use crate::error::{Error, Result};
use crate::noise::NoiseModel;
use crate::real::Real;
use crate::saddlepoint::{check_overshoot_level, solve_tau};
use crate::stats::{lag_bit, mean_ci, Estimate};

/// Which member of the two-sided tilted family `Z^±` a tilt refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Minus,
    Plus,
}

/// Tilt argument of the tilted noise `Z_j^±`.
///
/// With partial sums `A_n^±` of the coefficients and `τ = τ(ε)`:
/// minus side: `τ(A⁺ - A⁺_{|j|-1})/A` for `j ≤ -1`, `τ(A⁺ + A⁻_j)/A` for
/// `j ≥ 0`; plus side: `τ(A⁺_{|j|-1} + A⁻)/A` for `j ≤ -1`,
/// `τ(A⁻ - A⁻_j)/A` for `j ≥ 0`.
pub fn tilt_parameter<T: Real>(c: &CoefficientSeq<T>, tau_eps: T, side: Side, j: i64) -> T {
    let s = c.sums();
    let a = s.total;
    match side {
        Side::Minus => {
            if j >= 0 {
                tau_eps * (s.plus + c.partial_minus_raw(j)) / a
            } else {
                tau_eps * (s.plus - c.partial_plus_raw(-j - 1)) / a
            }
        }
        Side::Plus => {
            if j >= 0 {
                tau_eps * (s.minus - c.partial_minus_raw(j)) / a
            } else {
                tau_eps * (c.partial_plus_raw(-j - 1) + s.minus) / a
            }
        }
    }
}

/// Horizon and recording controls for cluster draws.
#[derive(Debug, Clone, Copy)]
pub struct LimitOptions<T> {
    /// Hard cap on the walked lag range per side; hitting it flags the draw.
    pub j_max: u64,
    /// Bound on the probability that a terminated side would still have
    /// produced another `V_j = 1`.
    pub tail_delta: T,
    /// Lags `[-K, K]` on which `V` and `U^±` are recorded in the draw.
    pub record_window: usize,
}

impl<T: Real> Default for LimitOptions<T> {
    fn default() -> Self {
        LimitOptions { j_max: 1_000_000, tail_delta: T::lit(1e-6), record_window: 5 }
    }
}

/// One realization of the limiting cluster objects.
#[derive(Debug, Clone)]
pub struct LimitDraw<T> {
    /// The exponential level `T*`.
    pub t_star: T,
    /// `U_i⁻` on `[-K, K]` (index 0 is lag `-K`).
    pub u_minus: Vec<T>,
    /// `U_i⁺` on `[-K, K]`.
    pub u_plus: Vec<T>,
    /// `V_j` for `j = -1, ..., -K` (index 0 is lag `-1`).
    pub v_minus: Vec<bool>,
    /// `V_j` for `j = 1, ..., K` (index 0 is lag `1`).
    pub v_plus: Vec<bool>,
    /// Backward cluster size `Σ_{j≤-1} V_j` (lower bound if truncated).
    pub d_minus: u64,
    /// Forward cluster size `Σ_{j≥1} V_j` (lower bound if truncated).
    pub d_plus: u64,
    /// True when a side hit `j_max` before clearing the stopping margin.
    pub truncated: bool,
}

impl<T: Real> LimitDraw<T> {
    pub fn record_window(&self) -> usize {
        self.v_plus.len()
    }

    /// `V_j` for a recorded nonzero lag.
    pub fn v(&self, j: i64) -> bool {
        debug_assert!(j != 0 && j.unsigned_abs() as usize <= self.record_window());
        if j < 0 {
            self.v_minus[(-j - 1) as usize]
        } else {
            self.v_plus[(j - 1) as usize]
        }
    }

    /// `U_i^∓` for a recorded lag.
    pub fn u(&self, side: Side, i: i64) -> T {
        let k = self.record_window() as i64;
        debug_assert!(i.abs() <= k);
        let idx = (i + k) as usize;
        match side {
            Side::Minus => self.u_minus[idx],
            Side::Plus => self.u_plus[idx],
        }
    }

    /// Bit pattern of the recorded `V` window, in the layout of
    /// [`crate::stats::PatternLaw`].
    pub fn pattern(&self, k_minus: usize, k_plus: usize) -> u32 {
        debug_assert!(k_minus <= self.record_window() && k_plus <= self.record_window());
        let mut bits = 0u32;
        for j in 1..=k_minus as i64 {
            if self.v(-j) {
                bits |= 1 << lag_bit(k_minus, k_plus, -j);
            }
        }
        for j in 1..=k_plus as i64 {
            if self.v(j) {
                bits |= 1 << lag_bit(k_minus, k_plus, j);
            }
        }
        bits
    }
}

/// Lazily drawn two-sided noise family, memoized per index so that forward
/// and backward walks (and any window extension) reuse the same draws.
struct NoiseCache<T> {
    minus_pos: Vec<Option<T>>,
    minus_neg: Vec<Option<T>>,
    plus_pos: Vec<Option<T>>,
    plus_neg: Vec<Option<T>>,
}

impl<T: Real> NoiseCache<T> {
    fn new() -> Self {
        NoiseCache {
            minus_pos: Vec::new(),
            minus_neg: Vec::new(),
            plus_pos: Vec::new(),
            plus_neg: Vec::new(),
        }
    }

    #[inline]
    fn get<R: Rng + ?Sized>(
        &mut self,
        side: Side,
        d: i64,
        m: &NoiseModel<T>,
        c: &CoefficientSeq<T>,
        tau: T,
        rng: &mut R,
    ) -> T {
        let slot = match (side, d >= 0) {
            (Side::Minus, true) => (&mut self.minus_pos, d as usize),
            (Side::Minus, false) => (&mut self.minus_neg, (-d - 1) as usize),
            (Side::Plus, true) => (&mut self.plus_pos, d as usize),
            (Side::Plus, false) => (&mut self.plus_neg, (-d - 1) as usize),
        };
        let (vec, idx) = slot;
        if idx >= vec.len() {
            vec.resize(idx + 1, None);
        }
        if let Some(z) = vec[idx] {
            return z;
        }
        let z = m.sample_tilted(tilt_parameter(c, tau, side, d), rng);
        vec[idx] = Some(z);
        z
    }
}

/// Prepared sampler of the limiting cluster process for one
/// `(noise, coefficients, ε)` instance.
pub struct LimitSampler<'a, T> {
    noise: &'a NoiseModel<T>,
    coeffs: &'a CoefficientSeq<T>,
    eps: T,
    tau: T,
    /// `τ(ε)/A`: the rate of `T*` and the tail exponent of `W = e^{T*}`.
    rate: T,
    /// Level-crossing decay exponent of the asymptotic walk, if positive.
    gamma: Option<T>,
    opts: LimitOptions<T>,
}

impl<'a, T: Real> LimitSampler<'a, T> {
    pub fn new(
        noise: &'a NoiseModel<T>,
        coeffs: &'a CoefficientSeq<T>,
        eps: T,
        opts: LimitOptions<T>,
    ) -> Result<Self> {
        check_overshoot_level(noise, coeffs, eps)?;
        if !(opts.tail_delta > T::zero() && opts.tail_delta < T::one()) {
            return Err(Error::Precondition(format!(
                "tail_delta must lie in (0, 1), got {}",
                opts.tail_delta
            )));
        }
        if opts.j_max < 1 {
            return Err(Error::Precondition("j_max must be >= 1".into()));
        }
        let tau = solve_tau(noise, coeffs, eps)?;
        let rate = tau / coeffs.sums().total;
        let gamma = solve_lundberg(noise, coeffs, tau);
        Ok(LimitSampler { noise, coeffs, eps, tau, rate, gamma, opts })
    }

    pub fn tau_eps(&self) -> T {
        self.tau
    }

    /// Rate of `T*`, i.e. `τ(ε)/A`.
    pub fn rate(&self) -> T {
        self.rate
    }

    pub fn eps(&self) -> T {
        self.eps
    }

    /// The walk's level-crossing decay exponent, when it exists.
    pub fn lundberg_exponent(&self) -> Option<T> {
        self.gamma
    }

    pub fn options(&self) -> LimitOptions<T> {
        self.opts
    }

    fn margin(&self) -> T {
        match self.gamma {
            Some(g) => -self.opts.tail_delta.ln() / g,
            None => T::infinity(),
        }
    }

    #[inline]
    fn u<R: Rng + ?Sized>(&self, side: Side, i: i64, cache: &mut NoiseCache<T>, rng: &mut R) -> T {
        let mut acc = T::zero();
        for k in self.coeffs.window_lo()..=self.coeffs.window_hi() {
            let a = self.coeffs.value(k);
            if a.is_zero() {
                continue;
            }
            acc += a * cache.get(side, i - k, self.noise, self.coeffs, self.tau, rng);
        }
        acc
    }

    /// One draw of the cluster objects: `T*`, the recorded `U`/`V` window,
    /// the cluster sizes, and the truncation flag.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> LimitDraw<T> {
        let t_star = T::std_exp(rng) / self.rate;
        let stop_level = t_star + self.margin();
        let k = self.opts.record_window;
        let ki = k as i64;
        let mut cache = NoiseCache::new();
        let mut u_minus = vec![T::zero(); 2 * k + 1];
        let mut u_plus = vec![T::zero(); 2 * k + 1];
        let mut v_plus = vec![false; k];
        let mut v_minus = vec![false; k];
        let mut truncated = false;

        // Forward: V_j = 1(T* ≥ Σ_{i=0..j-1}(U_i⁻ - U_i⁺)).
        let mut s = T::zero();
        let mut d_plus = 0u64;
        let mut j: i64 = 1;
        loop {
            let i = j - 1;
            let um = self.u(Side::Minus, i, &mut cache, rng);
            let up = self.u(Side::Plus, i, &mut cache, rng);
            if i <= ki {
                u_minus[(i + ki) as usize] = um;
                u_plus[(i + ki) as usize] = up;
            }
            s += um - up;
            let v = t_star >= s;
            if v {
                d_plus += 1;
            }
            if j <= ki {
                v_plus[(j - 1) as usize] = v;
            }
            if j as u64 >= self.opts.j_max {
                truncated = true;
                break;
            }
            if s > stop_level && j > ki {
                break;
            }
            j += 1;
        }

        // Backward: V_j = 1(T* ≥ Σ_{i=j..-1}(U_i⁺ - U_i⁻)).
        let mut s = T::zero();
        let mut d_minus = 0u64;
        let mut j: i64 = -1;
        loop {
            let um = self.u(Side::Minus, j, &mut cache, rng);
            let up = self.u(Side::Plus, j, &mut cache, rng);
            if j >= -ki {
                u_minus[(j + ki) as usize] = um;
                u_plus[(j + ki) as usize] = up;
            }
            s += up - um;
            let v = t_star >= s;
            if v {
                d_minus += 1;
            }
            if j >= -ki {
                v_minus[(-j - 1) as usize] = v;
            }
            if (-j) as u64 >= self.opts.j_max {
                truncated = true;
                break;
            }
            if s > stop_level && j <= -ki {
                break;
            }
            j -= 1;
        }

        LimitDraw { t_star, u_minus, u_plus, v_minus, v_plus, d_minus, d_plus, truncated }
    }

    /// Exact-window draw: `T*`, forward crossing sums for `j = 1..=k`,
    /// backward crossing sums for `j = -1..=-k`, and `U^±` on `[-k, k]`,
    /// with no termination rule.
    fn window_draw<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> WindowDraw<T> {
        let t_star = T::std_exp(rng) / self.rate;
        let ki = k as i64;
        let mut cache = NoiseCache::new();
        let mut u_minus = vec![T::zero(); 2 * k + 1];
        let mut u_plus = vec![T::zero(); 2 * k + 1];
        let mut fwd = vec![T::zero(); k];
        let mut bwd = vec![T::zero(); k];
        let mut s = T::zero();
        for j in 1..=ki {
            let i = j - 1;
            let um = self.u(Side::Minus, i, &mut cache, rng);
            let up = self.u(Side::Plus, i, &mut cache, rng);
            u_minus[(i + ki) as usize] = um;
            u_plus[(i + ki) as usize] = up;
            s += um - up;
            fwd[(j - 1) as usize] = s;
        }
        if k > 0 {
            let um = self.u(Side::Minus, ki, &mut cache, rng);
            let up = self.u(Side::Plus, ki, &mut cache, rng);
            u_minus[(2 * k) as usize] = um;
            u_plus[(2 * k) as usize] = up;
        }
        let mut s = T::zero();
        for j in 1..=ki {
            let um = self.u(Side::Minus, -j, &mut cache, rng);
            let up = self.u(Side::Plus, -j, &mut cache, rng);
            u_minus[(ki - j) as usize] = um;
            u_plus[(ki - j) as usize] = up;
            s += up - um;
            bwd[(j - 1) as usize] = s;
        }
        WindowDraw { t_star, fwd, bwd, u_minus, u_plus }
    }

    /// One draw of the limiting overshoot process on lags `[-k, k]`:
    /// `T*` at lag 0, `T* - (crossing sum)` elsewhere.
    pub fn overshoot_limit<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> Vec<T> {
        self.window_draw(k, rng).overshoots()
    }

    /// One draw of `Y`: the exponential of the overshoot process.
    pub fn sample_y<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> YDraw<T> {
        let w = self.window_draw(k, rng);
        let y = w.overshoots().iter().map(|&o| o.exp()).collect();
        YDraw { t_star: w.t_star, y, window: k }
    }

    /// Monte Carlo estimates of both sides of the time-change identity
    /// for the registered functional `h` at shift `j` and scale `t > 0`:
    /// left `E[H(t·B^j Y) 1(Y_{-j} > 1/t)]`, right
    /// `t^{τ/A} E[H(Y) 1(Y_j > t)]`, from independent sample sets.
    pub fn check_time_change<R: Rng + ?Sized>(
        &self,
        h: &HFunctional<T>,
        j: i64,
        t: T,
        n_samples: u64,
        rng: &mut R,
    ) -> Result<(Estimate<T>, Estimate<T>)> {
        h.validate()?;
        if !(t > T::zero() && t.is_finite()) {
            return Err(Error::Precondition(format!("time-change scale t must be > 0, got {t}")));
        }
        if n_samples < 1 {
            return Err(Error::Precondition("n_samples must be >= 1".into()));
        }
        let bound = h.bound() + T::lit(1e-9);
        let coords = h.coords();
        // Left side reads Y at c - j (c in the functional's window) and -j.
        let k_lhs = coords
            .iter()
            .map(|&c| (c - j).unsigned_abs())
            .chain(std::iter::once(j.unsigned_abs()))
            .max()
            .unwrap() as usize;
        let inv_t = T::one() / t;
        let mut lhs_vals = Vec::with_capacity(n_samples as usize);
        for _ in 0..n_samples {
            let yd = self.sample_y(k_lhs, rng);
            let hv = h.eval(|c| t * yd.y(c - j));
            if hv.abs() > bound {
                return Err(Error::FunctionalBoundExceeded(format!(
                    "|H| = {} above declared bound {}",
                    hv.abs(),
                    h.bound()
                )));
            }
            let ind = yd.y(-j) > inv_t;
            lhs_vals.push(if ind { hv } else { T::zero() });
        }
        let k_rhs = coords
            .iter()
            .map(|&c| c.unsigned_abs())
            .chain(std::iter::once(j.unsigned_abs()))
            .max()
            .unwrap() as usize;
        let scale = t.powf(self.rate);
        let mut rhs_vals = Vec::with_capacity(n_samples as usize);
        for _ in 0..n_samples {
            let yd = self.sample_y(k_rhs, rng);
            let hv = h.eval(|c| yd.y(c));
            if hv.abs() > bound {
                return Err(Error::FunctionalBoundExceeded(format!(
                    "|H| = {} above declared bound {}",
                    hv.abs(),
                    h.bound()
                )));
            }
            let ind = yd.y(j) > t;
            rhs_vals.push(if ind { hv * scale } else { T::zero() });
        }
        Ok((mean_ci(&lhs_vals)?, mean_ci(&rhs_vals)?))
    }

    /// The exact branch of the time-change identity: `H ≡ 1`, `j = 0`,
    /// `t ≥ 1`. Both sides equal 1 analytically because `W = e^{T*}` has
    /// the exact tail `P(W > t) = t^{-τ/A}` on `t ≥ 1`:
    /// left `P(Y_0 > 1/t) = 1`, right `t^{τ/A} P(Y_0 > t)`.
    pub fn time_change_pareto_exact(&self, t: T) -> Result<(T, T)> {
        if !(t >= T::one()) {
            return Err(Error::Precondition(format!(
                "the exact branch needs t >= 1, got {t}"
            )));
        }
        let lhs = T::one();
        let rhs = t.powf(self.rate) * t.powf(-self.rate);
        Ok((lhs, rhs))
    }

    /// One path of the rescaled crossing processes on a time grid:
    /// forward `(τ/A) Σ_{i=0..⌊t/ε²⌋} (U_i⁻ - U_i⁺)` and backward
    /// `(τ/A) Σ_{i=-⌊t/ε²⌋..-1} (U_i⁺ - U_i⁻)`.
    pub fn crossing_process_scaled<R: Rng + ?Sized>(
        &self,
        t_grid: &[T],
        rng: &mut R,
    ) -> Result<CrossingPath<T>> {
        if t_grid.is_empty() {
            return Err(Error::EmptyInput("crossing process time grid"));
        }
        for w in t_grid.windows(2) {
            if !(w[0] <= w[1]) {
                return Err(Error::Precondition("time grid must be nondecreasing".into()));
            }
        }
        if t_grid[0] < T::zero() {
            return Err(Error::Precondition("time grid must be nonnegative".into()));
        }
        let eps_sq = self.eps * self.eps;
        let idx: Vec<i64> = t_grid
            .iter()
            .map(|&t| (t / eps_sq).floor().to_f64().expect("grid index") as i64)
            .collect();
        let scale = self.rate;
        let mut cache = NoiseCache::new();
        let max_m = *idx.last().unwrap();

        let mut plus = vec![T::zero(); t_grid.len()];
        let mut s = T::zero();
        let mut g = 0usize;
        for i in 0..=max_m {
            s += scale
                * (self.u(Side::Minus, i, &mut cache, rng)
                    - self.u(Side::Plus, i, &mut cache, rng));
            while g < idx.len() && idx[g] == i {
                plus[g] = s;
                g += 1;
            }
        }

        // Backward sum over i in [-m, -1]: zero terms at m = 0.
        let mut minus = vec![T::zero(); t_grid.len()];
        let mut s = T::zero();
        let mut walked = 0i64;
        for (g, &m) in idx.iter().enumerate() {
            while walked < m {
                walked += 1;
                let i = -walked;
                s += scale
                    * (self.u(Side::Plus, i, &mut cache, rng)
                        - self.u(Side::Minus, i, &mut cache, rng));
            }
            minus[g] = s;
        }
        Ok(CrossingPath { plus, minus })
    }

    /// Analytic mean of the forward step `U_i⁻ - U_i⁺` from the tilted
    /// means of the contributing noises.
    pub fn forward_step_mean(&self, i: i64) -> T {
        let mut acc = T::zero();
        for k in self.coeffs.window_lo()..=self.coeffs.window_hi() {
            let a = self.coeffs.value(k);
            if a.is_zero() {
                continue;
            }
            let tm = self.noise.cgf_d1_raw(tilt_parameter(self.coeffs, self.tau, Side::Minus, i - k));
            let tp = self.noise.cgf_d1_raw(tilt_parameter(self.coeffs, self.tau, Side::Plus, i - k));
            acc += a * (tm - tp);
        }
        acc
    }
}

/// Exact-window walk output.
struct WindowDraw<T> {
    t_star: T,
    /// Forward crossing sums for `j = 1..=k`.
    fwd: Vec<T>,
    /// Backward crossing sums for `j = -1..=-k`.
    bwd: Vec<T>,
    #[allow(dead_code)]
    u_minus: Vec<T>,
    #[allow(dead_code)]
    u_plus: Vec<T>,
}

impl<T: Real> WindowDraw<T> {
    /// Overshoot process on `[-k, k]`: `T*` at 0, `T* -` crossing sums.
    fn overshoots(&self) -> Vec<T> {
        let k = self.fwd.len();
        let mut out = Vec::with_capacity(2 * k + 1);
        for j in (1..=k).rev() {
            out.push(self.t_star - self.bwd[j - 1]);
        }
        out.push(self.t_star);
        for j in 1..=k {
            out.push(self.t_star - self.fwd[j - 1]);
        }
        out
    }
}

/// One draw of the exponentiated overshoot process `Y` on `[-k, k]`.
#[derive(Debug, Clone)]
pub struct YDraw<T> {
    pub t_star: T,
    y: Vec<T>,
    window: usize,
}

impl<T: Real> YDraw<T> {
    /// `Y_j`; `Y_0 = e^{T*} > 1`.
    pub fn y(&self, j: i64) -> T {
        debug_assert!(j.unsigned_abs() as usize <= self.window);
        self.y[(j + self.window as i64) as usize]
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn values(&self) -> &[T] {
        &self.y
    }
}

/// The registered family of bounded functionals for the time-change check:
/// constants, coordinate threshold indicators, and capped coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HFunctional<T> {
    /// `H ≡ 1`.
    One,
    /// `H(y) = 1(y_coord > level)`.
    IndicatorAbove { coord: i64, level: T },
    /// `H(y) = min(y_coord, cap)`.
    ClippedCoord { coord: i64, cap: T },
}

impl<T: Real> HFunctional<T> {
    pub fn validate(&self) -> Result<()> {
        match *self {
            HFunctional::One => Ok(()),
            HFunctional::IndicatorAbove { level, .. } => {
                if level.is_finite() {
                    Ok(())
                } else {
                    Err(Error::NonFinite { what: "indicator level", value: format!("{level}") })
                }
            }
            HFunctional::ClippedCoord { cap, .. } => {
                if cap.is_finite() && cap > T::zero() {
                    Ok(())
                } else {
                    Err(Error::FunctionalBoundExceeded(format!(
                        "clipped coordinate needs a finite positive cap, got {cap}"
                    )))
                }
            }
        }
    }

    /// Declared bound on `|H|`.
    pub fn bound(&self) -> T {
        match *self {
            HFunctional::One | HFunctional::IndicatorAbove { .. } => T::one(),
            HFunctional::ClippedCoord { cap, .. } => cap,
        }
    }

    /// Coordinates the functional reads.
    pub fn coords(&self) -> Vec<i64> {
        match *self {
            HFunctional::One => vec![],
            HFunctional::IndicatorAbove { coord, .. } | HFunctional::ClippedCoord { coord, .. } => {
                vec![coord]
            }
        }
    }

    pub fn eval(&self, get: impl Fn(i64) -> T) -> T {
        match *self {
            HFunctional::One => T::one(),
            HFunctional::IndicatorAbove { coord, level } => {
                if get(coord) > level {
                    T::one()
                } else {
                    T::zero()
                }
            }
            HFunctional::ClippedCoord { coord, cap } => get(coord).min(cap),
        }
    }
}

impl<T: Real> std::fmt::Display for HFunctional<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match *self {
            HFunctional::One => write!(f, "1"),
            HFunctional::IndicatorAbove { coord, level } => write!(f, "1(Y_{coord} > {level})"),
            HFunctional::ClippedCoord { coord, cap } => write!(f, "min(Y_{coord}, {cap})"),
        }
    }
}

/// One path of the rescaled crossing processes on the requested grid.
#[derive(Debug, Clone)]
pub struct CrossingPath<T> {
    pub plus: Vec<T>,
    pub minus: Vec<T>,
}

/// Positive root of `log E e^{-γ S} = 0` for the asymptotic step
/// `S = Σ_k a_k (Z'_k - Z''_k)` with `Z' ~ G_τ`, `Z'' ~ G` all independent:
/// `f(γ) = Σ_k [φ(τ - γ a_k) - φ(τ) + φ(γ a_k)]`. Returns `None` when the
/// root is below 1e-8 or cannot be bracketed (vanishing drift).
fn solve_lundberg<T: Real>(m: &NoiseModel<T>, c: &CoefficientSeq<T>, tau: T) -> Option<T> {
    let f = |g: T| -> T {
        let mut acc = T::zero();
        for k in c.window_lo()..=c.window_hi() {
            let a = c.value(k);
            if a.is_zero() {
                continue;
            }
            acc += m.cgf_raw(tau - g * a) - m.cgf_raw(tau) + m.cgf_raw(g * a);
        }
        acc
    };
    let lo0 = T::lit(1e-8);
    if !(f(lo0) < T::zero()) {
        return None;
    }
    let mut hi = tau.max(T::lit(1e-3));
    let mut found = false;
    for _ in 0..60 {
        let v = f(hi);
        if !v.is_finite() {
            return None;
        }
        if v >= T::zero() {
            found = true;
            break;
        }
        hi = hi * T::lit(2.0);
    }
    if !found {
        return None;
    }
    // Plain bisection; the margin only needs a few digits of γ.
    let (mut lo, mut hi) = (lo0, hi);
    for _ in 0..100 {
        let mid = (lo + hi) * T::lit(0.5);
        if f(mid) < T::zero() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let g = (lo + hi) * T::lit(0.5);
    if g < T::lit(1e-8) {
        None
    } else {
        Some(g)
    }
}

/// Prepared sampler of the i.i.d. specialization: for the single-tap
/// sequence the forward and backward crossing sums are independent random
/// walks with step `A - B`, `A ~ G_{τ(ε)}`, `B ~ G` independent.
pub struct IidClusterSampler<'a, T> {
    noise: &'a NoiseModel<T>,
    tau: T,
    gamma: Option<T>,
    opts: LimitOptions<T>,
}

impl<'a, T: Real> IidClusterSampler<'a, T> {
    pub fn new(noise: &'a NoiseModel<T>, eps: T, opts: LimitOptions<T>) -> Result<Self> {
        let unit = CoefficientSeq::new(0, vec![T::one()])?;
        check_overshoot_level(noise, &unit, eps)?;
        let tau = solve_tau(noise, &unit, eps)?;
        let gamma = solve_lundberg(noise, &unit, tau);
        Ok(IidClusterSampler { noise, tau, gamma, opts })
    }

    pub fn tau_eps(&self) -> T {
        self.tau
    }

    /// Mean of one walk step, `φ'(τ(ε))`.
    pub fn step_mean(&self) -> T {
        self.noise.cgf_d1_raw(self.tau)
    }

    /// Draw with the level forced to a given value (boundary diagnostics).
    pub fn sample_with_level<R: Rng + ?Sized>(&self, t_star: T, rng: &mut R) -> LimitDraw<T> {
        self.walk(t_star, rng)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> LimitDraw<T> {
        let t_star = T::std_exp(rng) / self.tau;
        self.walk(t_star, rng)
    }

    fn walk<R: Rng + ?Sized>(&self, t_star: T, rng: &mut R) -> LimitDraw<T> {
        let margin = match self.gamma {
            Some(g) => -self.opts.tail_delta.ln() / g,
            None => T::infinity(),
        };
        let stop_level = t_star + margin;
        let k = self.opts.record_window;
        let ki = k as i64;
        let mut u_minus = vec![T::zero(); 2 * k + 1];
        let mut u_plus = vec![T::zero(); 2 * k + 1];
        let mut v_plus = vec![false; k];
        let mut v_minus = vec![false; k];
        let mut truncated = false;

        // Forward walk: tilted minus untilted.
        let mut s = T::zero();
        let mut d_plus = 0u64;
        let mut j: i64 = 1;
        loop {
            let a = self.noise.sample_tilted(self.tau, rng);
            let b = self.noise.sample(rng);
            if j - 1 <= ki {
                u_minus[(j - 1 + ki) as usize] = a;
                u_plus[(j - 1 + ki) as usize] = b;
            }
            s += a - b;
            let v = t_star >= s;
            if v {
                d_plus += 1;
            }
            if j <= ki {
                v_plus[(j - 1) as usize] = v;
            }
            if j as u64 >= self.opts.j_max {
                truncated = true;
                break;
            }
            if s > stop_level && j > ki {
                break;
            }
            j += 1;
        }

        // Backward walk: the plus-side noises are the tilted ones here.
        let mut s = T::zero();
        let mut d_minus = 0u64;
        let mut j: i64 = -1;
        loop {
            let a = self.noise.sample_tilted(self.tau, rng);
            let b = self.noise.sample(rng);
            if j >= -ki {
                u_plus[(j + ki) as usize] = a;
                u_minus[(j + ki) as usize] = b;
            }
            s += a - b;
            let v = t_star >= s;
            if v {
                d_minus += 1;
            }
            if j >= -ki {
                v_minus[(-j - 1) as usize] = v;
            }
            if (-j) as u64 >= self.opts.j_max {
                truncated = true;
                break;
            }
            if s > stop_level && j <= -ki {
                break;
            }
            j -= 1;
        }

        LimitDraw { t_star, u_minus, u_plus, v_minus, v_plus, d_minus, d_plus, truncated }
    }
}

/// One draw of the i.i.d. specialization (single-tap coefficients).
pub fn sample_v_iid<T: Real, R: Rng + ?Sized>(
    m: &NoiseModel<T>,
    eps: T,
    opts: LimitOptions<T>,
    rng: &mut R,
) -> Result<LimitDraw<T>> {
    Ok(IidClusterSampler::new(m, eps, opts)?.sample(rng))
}
