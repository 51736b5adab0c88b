//! Rare-event toolkit for short-memory moving average processes.
//!
//! A stationary sequence `X_n = Σ_i a_i Z_{n-i}` driven by i.i.d. zero-mean
//! noise with an everywhere-finite moment generating function exhibits
//! clustering of its exceedance events: when one length-`n` window averages
//! above a level `ε`, nearby windows tend to do so too. This crate provides
//! the pieces needed to compute and simulate that behaviour:
//!
//! * [`noise`] — noise families with exact cumulant generating functions and
//!   exact exponentially tilted samplers;
//! * [`coefficients`] — finite-support coefficient sequences and their
//!   partial-sum functionals;
//! * [`saddlepoint`] — the non-logarithmic tail approximation of
//!   `P(S_n ≥ nε)` with its tilt roots;
//! * [`mc_conditional`] — path simulation and conditional-law estimation
//!   given an exceedance, by rejection and by importance sampling;
//! * [`limit_process`] — exact sampling of the limiting cluster process and
//!   its overshoot / time-change identities;
//! * [`brownian_limit`] — the small-`ε` Brownian occupation-time limit of the
//!   cluster sizes, by simulation and by quadrature;
//! * [`stats`] — shared estimation utilities (weighted means, total
//!   variation and Kolmogorov-Smirnov distances).
//!
//! All numeric kernels are generic over the scalar type via [`real::Real`]
//! (`f32` or `f64`); concrete `f64` aliases live at the crate root.

pub mod brownian_limit;
pub mod coefficients;
pub mod error;
pub mod limit_process;
pub mod mc_conditional;
pub mod noise;
pub mod real;
pub mod rng;
pub mod root;
pub mod saddlepoint;
pub mod special;
pub mod stats;

pub use error::{Error, Result};
pub use real::Real;
pub use rng::{derive_stream, RandomStream};

#[cfg(test)]
pub(crate) mod test_support {
    use crate::coefficients::CoefficientSeq;
    use crate::noise::NoiseModel;

    /// Test battery: name, noise, coefficients, admissible overshoot level.
    pub fn models() -> Vec<(&'static str, NoiseModel<f64>, CoefficientSeq<f64>, f64)> {
        vec![
            (
                "iid-gaussian",
                NoiseModel::gaussian(1.0).unwrap(),
                CoefficientSeq::new(0, vec![1.0]).unwrap(),
                0.3,
            ),
            (
                "two-tap-uniform",
                NoiseModel::centered_uniform(1.0).unwrap(),
                CoefficientSeq::new(0, vec![0.5, 0.5]).unwrap(),
                0.3,
            ),
            (
                "three-tap-gaussian",
                NoiseModel::gaussian(1.0).unwrap(),
                CoefficientSeq::new(-1, vec![0.25, 0.5, 0.25]).unwrap(),
                0.3,
            ),
            (
                "mixed-sign-mixture",
                NoiseModel::gaussian_mixture(&[0.3, 0.7], &[-1.0, 1.0], &[0.5, 1.0]).unwrap(),
                CoefficientSeq::new(0, vec![1.0, -0.5]).unwrap(),
                0.25,
            ),
        ]
    }
}

/// Concrete `f64` aliases for the main domain types.
pub type NoiseModel64 = noise::NoiseModel<f64>;
pub type CoefficientSeq64 = coefficients::CoefficientSeq<f64>;

pub type WindowSpec64 = mc_conditional::WindowSpec<f64>;
pub type SaddlepointResult64 = saddlepoint::SaddlepointResult<f64>;
pub type LimitDraw64 = limit_process::LimitDraw<f64>;

pub type Estimate64 = stats::Estimate<f64>;
