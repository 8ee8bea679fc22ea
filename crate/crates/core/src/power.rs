//! Drive-current bookkeeping and total power consumption.
//!
//! The LED drive current xₙ = sₙ + Iₙ^DC must stay in [0, I_max], which for
//! symbols bounded by |d| ≤ 1 reduces to the per-LED row constraint
//! Σₖ |wₙₖ| ≤ min(Iₙ^DC, I_max − Iₙ^DC). Total consumed power is
//! P_total = Σₙ U_LED·Iₙ^DC + P_circuitry + ξ·Tr(WWᵀ).

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum PowerError {
    #[error("dc bias component {0} outside [0, i_max]")]
    BiasOutOfRange(usize),
    #[error("precoder contains non-finite entries")]
    NonFinitePrecoder,
}

/// Linear precoder W (N_T × K); column k serves user k.
#[derive(Debug, Clone, PartialEq)]
pub struct Precoder {
    pub w: DMatrix<f64>,
}

impl Precoder {
    pub fn new(w: DMatrix<f64>) -> Result<Self, PowerError> {
        if w.iter().any(|v| !v.is_finite()) {
            return Err(PowerError::NonFinitePrecoder);
        }
        Ok(Self { w })
    }

    pub fn zeros(n_leds: usize, n_users: usize) -> Self {
        Self {
            w: DMatrix::zeros(n_leds, n_users),
        }
    }

    pub fn n_leds(&self) -> usize {
        self.w.nrows()
    }

    pub fn n_users(&self) -> usize {
        self.w.ncols()
    }

    /// Column wₖ of the precoder.
    pub fn user_column(&self, k: usize) -> DVector<f64> {
        self.w.column(k).into_owned()
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.w.iter().map(|v| v * v).sum()
    }
}

/// DC bias vector and maximum drive current.
#[derive(Debug, Clone, PartialEq)]
pub struct DrivePolicy {
    pub dc_bias: DVector<f64>,
    pub i_max: f64,
}

impl DrivePolicy {
    pub fn new(dc_bias: DVector<f64>, i_max: f64) -> Result<Self, PowerError> {
        for (n, &b) in dc_bias.iter().enumerate() {
            if !(0.0..=i_max).contains(&b) {
                return Err(PowerError::BiasOutOfRange(n));
            }
        }
        Ok(Self { dc_bias, i_max })
    }

    /// Equal bias on every LED with symmetric headroom (I_max = 2·I^DC), so
    /// the modulation bound equals the bias itself.
    pub fn uniform_symmetric(n_leds: usize, dc_bias: f64) -> Self {
        Self {
            dc_bias: DVector::from_element(n_leds, dc_bias),
            i_max: 2.0 * dc_bias,
        }
    }

    pub fn n_leds(&self) -> usize {
        self.dc_bias.len()
    }

    /// Modulation headroom of LED `n`: min(Iₙ^DC, I_max − Iₙ^DC).
    pub fn amplitude_bound(&self, n: usize) -> f64 {
        self.dc_bias[n].min(self.i_max - self.dc_bias[n])
    }

    pub fn amplitude_bounds(&self) -> DVector<f64> {
        DVector::from_fn(self.n_leds(), |n, _| self.amplitude_bound(n))
    }
}

/// Fixed power model: circuitry draw, LED forward voltage, and the
/// equivalent AC resistance ξ = r·σ_d² that scales Tr(WWᵀ).
#[derive(Debug, Clone, PartialEq)]
pub struct PowerModel {
    pub circuitry_power: f64,
    pub led_forward_voltage: f64,
    pub equiv_resistance: f64,
}

impl Default for PowerModel {
    fn default() -> Self {
        Self {
            circuitry_power: 8.0,
            led_forward_voltage: 3.0,
            equiv_resistance: 3.0,
        }
    }
}

impl PowerModel {
    /// DC power Σₙ U_LED·Iₙ^DC + P_circuitry, independent of the precoder.
    pub fn dc_power(&self, policy: &DrivePolicy) -> f64 {
        self.led_forward_voltage * policy.dc_bias.sum() + self.circuitry_power
    }
}

/// True iff every LED row satisfies Σₖ|wₙₖ| ≤ min(Iₙ^DC, I_max − Iₙ^DC) + tol.
pub fn row_l1_feasible(w: &Precoder, policy: &DrivePolicy, tol: f64) -> bool {
    assert_eq!(w.n_leds(), policy.n_leds());
    (0..w.n_leds()).all(|n| {
        let row_sum: f64 = w.w.row(n).iter().map(|v| v.abs()).sum();
        row_sum <= policy.amplitude_bound(n) + tol
    })
}

/// Total consumed power P_DC + ξ·Tr(WWᵀ) in watts.
pub fn total_power(w: &Precoder, policy: &DrivePolicy, model: &PowerModel) -> f64 {
    model.dc_power(policy) + model.equiv_resistance * w.frobenius_sq()
}

/// dBm → watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// watts → dBm.
pub fn watts_to_dbm(watts: f64) -> f64 {
    10.0 * watts.log10() + 30.0
}

/// DC bias current that emits the given per-luminary optical power:
/// I^DC = P̄ˢ/η.
pub fn dc_bias_for_optical_power(power_dbm: f64, conversion_factor: f64) -> f64 {
    dbm_to_watts(power_dbm) / conversion_factor
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn amplitude_bound_cases() {
        let p = DrivePolicy::new(DVector::from_element(1, 0.5), 1.0).unwrap();
        assert_eq!(p.amplitude_bound(0), 0.5);
        let p = DrivePolicy::new(DVector::from_element(1, 0.0), 1.0).unwrap();
        assert_eq!(p.amplitude_bound(0), 0.0);
        let p = DrivePolicy::new(DVector::from_element(1, 1.0), 1.0).unwrap();
        assert_eq!(p.amplitude_bound(0), 0.0);
    }

    #[test]
    fn thirty_dbm_gives_half_amp_bias() {
        assert_relative_eq!(dbm_to_watts(30.0), 1.0, epsilon = 1e-12);
        assert_relative_eq!(dc_bias_for_optical_power(30.0, 2.0), 0.5, epsilon = 1e-12);
        assert_relative_eq!(watts_to_dbm(1.0), 30.0, epsilon = 1e-12);
    }

    #[test]
    fn policy_rejects_out_of_range_bias() {
        assert_eq!(
            DrivePolicy::new(DVector::from_vec(vec![0.5, 1.5]), 1.0).unwrap_err(),
            PowerError::BiasOutOfRange(1)
        );
    }

    #[test]
    fn row_l1_boundary_inclusive() {
        let policy = DrivePolicy::uniform_symmetric(1, 0.5);
        let w = Precoder::new(DMatrix::from_row_slice(1, 2, &[0.25, 0.25])).unwrap();
        assert!(row_l1_feasible(&w, &policy, 0.0));
        let w = Precoder::new(DMatrix::from_row_slice(1, 2, &[0.3, 0.3])).unwrap();
        assert!(!row_l1_feasible(&w, &policy, 0.0));
        assert!(row_l1_feasible(&Precoder::zeros(1, 2), &policy, 0.0));
    }

    #[test]
    fn total_power_cases() {
        let model = PowerModel::default();
        let policy = DrivePolicy::uniform_symmetric(4, 0.5);
        let w0 = Precoder::zeros(4, 3);
        assert_relative_eq!(total_power(&w0, &policy, &model), 14.0, epsilon = 1e-12);

        // xi * Tr(WW^T) = 3 * 2 adds 6 W
        let mut w = Precoder::zeros(4, 3);
        w.w[(0, 0)] = 1.0;
        w.w[(1, 1)] = 1.0;
        assert_relative_eq!(total_power(&w, &policy, &model), 20.0, epsilon = 1e-12);

        let free = PowerModel {
            equiv_resistance: 0.0,
            ..PowerModel::default()
        };
        assert_relative_eq!(
            total_power(&w, &policy, &free),
            total_power(&w0, &policy, &free),
            epsilon = 1e-12
        );
    }

    #[test]
    fn total_power_sign_invariant_and_monotone() {
        let model = PowerModel::default();
        let policy = DrivePolicy::uniform_symmetric(3, 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let w = DMatrix::from_fn(3, 2, |_, _| rng.gen::<f64>() - 0.5);
            let pw = total_power(&Precoder::new(w.clone()).unwrap(), &policy, &model);
            let neg = total_power(&Precoder::new(-w.clone()).unwrap(), &policy, &model);
            assert_relative_eq!(pw, neg, epsilon = 1e-12);
            let bigger = total_power(&Precoder::new(w.map(|v| 1.5 * v)).unwrap(), &policy, &model);
            assert!(bigger >= pw);
        }
    }

    #[test]
    fn trace_identity_matches_column_norms() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let w = Precoder::new(DMatrix::from_fn(4, 3, |_, _| rng.gen::<f64>() - 0.5)).unwrap();
        let trace = (&w.w * w.w.transpose()).trace();
        let cols: f64 = (0..3).map(|k| w.user_column(k).norm_squared()).sum();
        assert_relative_eq!(trace, cols, epsilon = 1e-12);
        assert_relative_eq!(trace, w.frobenius_sq(), epsilon = 1e-12);
    }

    #[test]
    fn row_l1_implies_drive_current_bounds() {
        // extreme symbols d in {-1, 1}^K keep 0 <= s_n + I_n <= I_max
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let policy = DrivePolicy::new(DVector::from_vec(vec![0.4, 0.6, 0.5]), 1.0).unwrap();
        for _ in 0..50 {
            let mut w = DMatrix::from_fn(3, 2, |_, _| rng.gen::<f64>() - 0.5);
            // scale each row within its bound
            for n in 0..3 {
                let sum: f64 = w.row(n).iter().map(|v| v.abs()).sum();
                let bound = policy.amplitude_bound(n);
                if sum > 0.0 {
                    let scale = rng.gen::<f64>() * bound / sum;
                    for k in 0..2 {
                        w[(n, k)] *= scale;
                    }
                }
            }
            let w = Precoder::new(w).unwrap();
            assert!(row_l1_feasible(&w, &policy, 1e-12));
            for signs in 0..4u32 {
                let d = DVector::from_fn(2, |k, _| if signs >> k & 1 == 1 { 1.0 } else { -1.0 });
                let s = &w.w * &d;
                for n in 0..3 {
                    let x = s[n] + policy.dc_bias[n];
                    assert!(x >= -1e-9 && x <= policy.i_max + 1e-9);
                }
            }
        }
    }
}
