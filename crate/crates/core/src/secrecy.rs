//! Per-user secrecy-rate lower bound and secrecy energy efficiency.
//!
//! Each user treats every other user as a potential eavesdropper. The
//! computable lower bound on user k's secrecy rate is
//!
//! R_{s,k} = ½log₂((1 + Σᵢ aₖ(hₖᵀwᵢ)²)/(1 + Σ_{i≠k} bₖ(hₖᵀwᵢ)²))
//!           − ½log₂(1 + Σ_{i≠k} bᵢ(hᵢᵀwₖ)²),
//!
//! with aₖ = 2^{2h_d}/(2πe·σ̄ₖ²) and bₖ = σ_d²/σ̄ₖ². The bound is kept
//! unclipped here (the design problems force R_{s,k} ≥ λₖ ≥ 0 anyway and a
//! [·]⁺ would break the difference-of-convex structure); a clipped accessor
//! is provided for reporting.

use nalgebra::{DMatrix, DVector};

use crate::geometry::ChannelMatrix;
use crate::power::{total_power, DrivePolicy, PowerModel, Precoder};

/// Zero-mean data symbol law on [−1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolDistribution {
    /// Differential entropy h_d in bits.
    pub diff_entropy_bits: f64,
    /// Symbol variance σ_d².
    pub variance: f64,
}

impl SymbolDistribution {
    /// Symbols uniform over [−1, 1]: h_d = 1 bit, σ_d² = 1/3.
    pub fn uniform() -> Self {
        Self {
            diff_entropy_bits: 1.0,
            variance: 1.0 / 3.0,
        }
    }
}

/// Per-user link coefficients aₖ, bₖ of the secrecy-rate bound.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkCoefficients {
    pub a: DVector<f64>,
    pub b: DVector<f64>,
}

/// aₖ = 2^{2h_d}/(2πe·σ̄ₖ²), bₖ = σ_d²/σ̄ₖ².
pub fn link_coefficients(channel: &ChannelMatrix, dist: &SymbolDistribution) -> LinkCoefficients {
    let two_pi_e = 2.0 * std::f64::consts::PI * std::f64::consts::E;
    let pow = 2f64.powf(2.0 * dist.diff_entropy_bits);
    let a = channel
        .noise_vars_effective
        .map(|s2| pow / (two_pi_e * s2));
    let b = channel.noise_vars_effective.map(|s2| dist.variance / s2);
    LinkCoefficients { a, b }
}

/// Secrecy-rate lower bound of user `k` in bits/s/Hz; may be negative.
pub fn secrecy_rate(
    w: &Precoder,
    channel: &ChannelMatrix,
    coeffs: &LinkCoefficients,
    k: usize,
) -> f64 {
    let n_users = channel.n_users();
    let hk = channel.gains.row(k);
    let mut signal = 0.0;
    let mut interference = 0.0;
    for i in 0..n_users {
        let g = (hk * w.w.column(i))[(0, 0)];
        signal += coeffs.a[k] * g * g;
        if i != k {
            interference += coeffs.b[k] * g * g;
        }
    }
    let mut leakage = 0.0;
    for i in 0..n_users {
        if i == k {
            continue;
        }
        let g = (channel.gains.row(i) * w.w.column(k))[(0, 0)];
        leakage += coeffs.b[i] * g * g;
    }
    0.5 * ((1.0 + signal) / (1.0 + interference)).log2() - 0.5 * (1.0 + leakage).log2()
}

/// The bound clipped at zero, for reporting only.
pub fn secrecy_rate_clipped(
    w: &Precoder,
    channel: &ChannelMatrix,
    coeffs: &LinkCoefficients,
    k: usize,
) -> f64 {
    secrecy_rate(w, channel, coeffs, k).max(0.0)
}

/// Secrecy sum-rate Σₖ R_{s,k}; this is also the Dinkelbach numerator.
pub fn sum_secrecy_rate(w: &Precoder, channel: &ChannelMatrix, coeffs: &LinkCoefficients) -> f64 {
    (0..channel.n_users())
        .map(|k| secrecy_rate(w, channel, coeffs, k))
        .sum()
}

/// Per-user rates as a vector.
pub fn secrecy_rates(w: &Precoder, channel: &ChannelMatrix, coeffs: &LinkCoefficients) -> DVector<f64> {
    DVector::from_fn(channel.n_users(), |k, _| secrecy_rate(w, channel, coeffs, k))
}

/// Secrecy energy efficiency Σₖ R_{s,k} / P_total in bits/s/Hz/W.
pub fn see(
    w: &Precoder,
    channel: &ChannelMatrix,
    coeffs: &LinkCoefficients,
    policy: &DrivePolicy,
    model: &PowerModel,
) -> f64 {
    sum_secrecy_rate(w, channel, coeffs) / total_power(w, policy, model)
}

/// Unit-noise rewrite of the link: rows ĥₖ = hₖ/σ̄ₖ with âₖ = aₖσ̄ₖ² and
/// b̂ₖ = bₖσ̄ₖ², so every rate term aₖ(hₖᵀw)² equals âₖ(ĥₖᵀw)². The solvers
/// operate on this form to keep the conic data well-scaled.
#[derive(Debug, Clone)]
pub(crate) struct NormalizedLinks {
    /// K × N_T matrix of normalized rows.
    pub h: DMatrix<f64>,
    pub a: DVector<f64>,
    pub b: DVector<f64>,
}

impl NormalizedLinks {
    pub fn new(channel: &ChannelMatrix, coeffs: &LinkCoefficients) -> Self {
        let mut h = channel.gains.clone();
        let mut a = coeffs.a.clone();
        let mut b = coeffs.b.clone();
        for k in 0..channel.n_users() {
            let s2 = channel.noise_vars_effective[k];
            let s = s2.sqrt();
            for n in 0..channel.n_luminaries() {
                h[(k, n)] /= s;
            }
            a[k] *= s2;
            b[k] *= s2;
        }
        Self { h, a, b }
    }

    pub fn n_users(&self) -> usize {
        self.h.nrows()
    }

    pub fn n_leds(&self) -> usize {
        self.h.ncols()
    }

    pub fn row(&self, k: usize) -> DVector<f64> {
        self.h.row(k).transpose()
    }
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------
