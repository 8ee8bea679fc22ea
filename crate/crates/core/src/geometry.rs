//! Indoor Lambertian line-of-sight channel model.
//!
//! Builds the room scene (LED luminaries on the ceiling, photodiode users on
//! a horizontal plane), evaluates the LoS optical channel gain between every
//! luminary/user pair, and computes the signal-dependent receiver noise
//! variance (shot + ambient + pre-amplifier terms).
//!
//! Conventions: luminaries point straight down, receivers straight up by
//! default, the coordinate origin is the center of the floor, and angles are
//! degrees at the API boundary (radians internally).

use nalgebra::{DMatrix, DVector, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Elementary charge in coulombs (2019 SI exact value).
pub const ELEMENTARY_CHARGE: f64 = 1.602176634e-19;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("half-intensity semi-angle must lie in (0, 90) degrees, got {0}")]
    SemiangleOutOfRange(f64),
    #[error("user {0} has no line-of-sight link to any luminary")]
    NoLineOfSight(usize),
    #[error("invalid scene: {0}")]
    InvalidScene(String),
}

// ---------------------------------------------------------------------------
// Scene types
// ---------------------------------------------------------------------------

/// A ceiling LED luminary: beam shape, electro-optical conversion, position.
#[derive(Debug, Clone, PartialEq)]
pub struct LuminaryParams {
    /// Semi-angle at half illuminance in degrees (half of the beam angle).
    pub semiangle_half_deg: f64,
    /// LED conversion factor in watts per ampere.
    pub conversion_factor: f64,
    /// Position in meters; luminaries emit straight down.
    pub position: Vector3<f64>,
}

impl LuminaryParams {
    /// A typical white LED luminary (120° beam, 2 W/A) at `position`.
    pub fn at(position: Vector3<f64>) -> Self {
        Self {
            semiangle_half_deg: 60.0,
            conversion_factor: 2.0,
            position,
        }
    }
}

/// A photodiode receiver: optics, responsivity, position and orientation.
#[derive(Debug, Clone, PartialEq)]
pub struct ReceiverParams {
    /// Photodiode active area in m².
    pub active_area: f64,
    /// Optical field of view in degrees.
    pub fov_deg: f64,
    /// Optical filter gain (unitless).
    pub filter_gain: f64,
    /// Refractive index of the concentrator.
    pub refractive_index: f64,
    /// Photodiode responsivity in A/W.
    pub responsivity: f64,
    /// Position in meters.
    pub position: Vector3<f64>,
    /// Unit normal of the detector; straight up unless tilted.
    pub orientation: Vector3<f64>,
}

impl ReceiverParams {
    /// A typical PIN photodiode receiver (1 cm², 60° FOV, 0.54 A/W) at `position`.
    pub fn at(position: Vector3<f64>) -> Self {
        Self {
            active_area: 1e-4,
            fov_deg: 60.0,
            filter_gain: 1.0,
            refractive_index: 1.5,
            responsivity: 0.54,
            position,
            orientation: Vector3::new(0.0, 0.0, 1.0),
        }
    }
}

/// Receiver noise model parameters for the shot/ambient/pre-amp variance.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseParams {
    /// Modulation bandwidth in Hz.
    pub bandwidth: f64,
    /// Elementary charge in coulombs.
    pub elementary_charge: f64,
    /// Ambient light photocurrent in A/(m²·Sr).
    pub ambient_photocurrent: f64,
    /// Pre-amplifier noise current density in A/√Hz.
    pub preamp_density: f64,
}

impl Default for NoiseParams {
    fn default() -> Self {
        Self {
            bandwidth: 20e6,
            elementary_charge: ELEMENTARY_CHARGE,
            ambient_photocurrent: 10.93,
            preamp_density: 5e-12,
        }
    }
}

/// The physical configuration: room, luminaries, users, noise model.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub room_dims: Vector3<f64>,
    pub luminaries: Vec<LuminaryParams>,
    pub users: Vec<ReceiverParams>,
    pub noise: NoiseParams,
}

impl Scene {
    /// Validates positions, plane placement and dimensions.
    ///
    /// Requires at least as many luminaries as users, all positions inside
    /// the room, all users on one horizontal plane, and a common conversion
    /// factor across luminaries (the noise normalization assumes one η).
    pub fn new(
        room_dims: Vector3<f64>,
        luminaries: Vec<LuminaryParams>,
        users: Vec<ReceiverParams>,
        noise: NoiseParams,
    ) -> Result<Self, GeometryError> {
        if users.is_empty() {
            return Err(GeometryError::InvalidScene("need at least one user".into()));
        }
        if luminaries.len() < users.len() {
            return Err(GeometryError::InvalidScene(format!(
                "need at least as many luminaries as users ({} < {})",
                luminaries.len(),
                users.len()
            )));
        }
        let inside = |p: &Vector3<f64>| {
            p.x.abs() <= room_dims.x / 2.0 + 1e-9
                && p.y.abs() <= room_dims.y / 2.0 + 1e-9
                && p.z >= -1e-9
                && p.z <= room_dims.z + 1e-9
        };
        for (i, l) in luminaries.iter().enumerate() {
            if !inside(&l.position) {
                return Err(GeometryError::InvalidScene(format!(
                    "luminary {i} outside room"
                )));
            }
            if l.semiangle_half_deg <= 0.0 || l.semiangle_half_deg >= 90.0 {
                return Err(GeometryError::SemiangleOutOfRange(l.semiangle_half_deg));
            }
            if (l.conversion_factor - luminaries[0].conversion_factor).abs() > 1e-12 {
                return Err(GeometryError::InvalidScene(
                    "luminaries must share one conversion factor".into(),
                ));
            }
        }
        let z0 = users[0].position.z;
        for (i, u) in users.iter().enumerate() {
            if !inside(&u.position) {
                return Err(GeometryError::InvalidScene(format!("user {i} outside room")));
            }
            if (u.position.z - z0).abs() > 1e-9 {
                return Err(GeometryError::InvalidScene(
                    "users must share one receiver plane".into(),
                ));
            }
        }
        Ok(Self {
            room_dims,
            luminaries,
            users,
            noise,
        })
    }

    pub fn n_luminaries(&self) -> usize {
        self.luminaries.len()
    }

    pub fn n_users(&self) -> usize {
        self.users.len()
    }
}

/// LoS gains and effective (amplitude-normalized) noise variances.
///
/// `gains[(k, n)]` is the unitless optical gain between luminary `n` and user
/// `k`. `noise_vars_effective[k]` is σ̄ₖ² = σₖ²/(γη)², the receiver noise
/// variance referred back to the drive-current domain.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMatrix {
    pub gains: DMatrix<f64>,
    pub noise_vars_effective: DVector<f64>,
}

impl ChannelMatrix {
    pub fn n_users(&self) -> usize {
        self.gains.nrows()
    }

    pub fn n_luminaries(&self) -> usize {
        self.gains.ncols()
    }

    /// Channel row of user `k` as a column vector hₖ.
    pub fn user_row(&self, k: usize) -> DVector<f64> {
        self.gains.row(k).transpose()
    }
}

// ---------------------------------------------------------------------------
// Channel evaluation
// ---------------------------------------------------------------------------

/// Order of Lambertian emission: l = −ln 2 / ln(cos Θ½).
///
/// A 60° semi-angle (120° beam) gives exactly l = 1.
pub fn lambertian_order(semiangle_half_deg: f64) -> Result<f64, GeometryError> {
    if semiangle_half_deg <= 0.0 || semiangle_half_deg >= 90.0 {
        return Err(GeometryError::SemiangleOutOfRange(semiangle_half_deg));
    }
    Ok(lambertian_order_unchecked(semiangle_half_deg))
}

fn lambertian_order_unchecked(semiangle_half_deg: f64) -> f64 {
    -std::f64::consts::LN_2 / semiangle_half_deg.to_radians().cos().ln()
}

/// Lambertian emission intensity L(φ) = (l+1)/(2π) · cosˡ(φ), per steradian.
pub fn emission_intensity(irradiance_deg: f64, order: f64) -> f64 {
    let c = irradiance_deg.to_radians().cos();
    (order + 1.0) / (2.0 * std::f64::consts::PI) * c.powf(order)
}

/// Optical concentrator gain: κ²/sin²(Ψ) inside the field of view, else 0.
pub fn concentrator_gain(incidence_deg: f64, fov_deg: f64, refractive_index: f64) -> f64 {
    if incidence_deg > fov_deg {
        return 0.0;
    }
    let s = fov_deg.to_radians().sin();
    refractive_index * refractive_index / (s * s)
}

/// LoS channel gain h between one luminary and one receiver.
///
/// h = (A_r/t²) · L(φ) · T_s · g(ψ) · cos(ψ) when the incidence angle ψ is
/// within the receiver FOV, else 0. The irradiance angle φ is measured from
/// the luminary's downward normal, ψ from the receiver orientation.
pub fn channel_gain(luminary: &LuminaryParams, receiver: &ReceiverParams) -> f64 {
    let v = receiver.position - luminary.position;
    let t2 = v.norm_squared();
    if t2 <= 0.0 {
        return 0.0;
    }
    let t = t2.sqrt();
    // cos φ against the downward normal (0,0,-1); cos ψ against the receiver
    // normal along the reversed ray.
    let cos_irr = -v.z / t;
    let cos_inc = (-v).dot(&receiver.orientation) / t;
    if cos_irr <= 0.0 || cos_inc <= 0.0 {
        return 0.0;
    }
    let cos_fov = receiver.fov_deg.to_radians().cos();
    if cos_inc < cos_fov {
        return 0.0;
    }
    let order = lambertian_order_unchecked(luminary.semiangle_half_deg);
    let lambertian =
        (order + 1.0) / (2.0 * std::f64::consts::PI) * cos_irr.powf(order);
    let sin_fov = receiver.fov_deg.to_radians().sin();
    let conc = receiver.refractive_index * receiver.refractive_index / (sin_fov * sin_fov);
    receiver.active_area / t2 * lambertian * receiver.filter_gain * conc * cos_inc
}

/// Builds the full channel matrix and effective noise variances.
///
/// The per-user noise variance follows the shot + ambient + pre-amp model
///
/// σₖ² = 2γe·P̄ₖʳ·B + 4πe·A_r·γ·χ_amb·(1−cos Ψ)·B + i_amp²·B,
///
/// with received power P̄ₖʳ = η·hₖᵀ·I^DC, then σ̄ₖ² = σₖ²/(γη)².
pub fn build_channel(scene: &Scene, dc_bias: &DVector<f64>) -> Result<ChannelMatrix, GeometryError> {
    let k_users = scene.n_users();
    let n_leds = scene.n_luminaries();
    assert_eq!(dc_bias.len(), n_leds, "dc bias length must match luminary count");
    assert!(dc_bias.iter().all(|&i| i >= 0.0), "dc bias must be nonnegative");

    let mut gains = DMatrix::zeros(k_users, n_leds);
    for k in 0..k_users {
        for n in 0..n_leds {
            gains[(k, n)] = channel_gain(&scene.luminaries[n], &scene.users[k]);
        }
        if gains.row(k).iter().all(|&g| g == 0.0) {
            return Err(GeometryError::NoLineOfSight(k));
        }
    }

    let eta = scene.luminaries[0].conversion_factor;
    let mut noise_vars = DVector::zeros(k_users);
    for k in 0..k_users {
        let user = &scene.users[k];
        let received = eta * gains.row(k).transpose().dot(dc_bias);
        let sigma2 = noise_variance(received, user, &scene.noise);
        let gamma_eta = user.responsivity * eta;
        noise_vars[k] = sigma2 / (gamma_eta * gamma_eta);
    }
    Ok(ChannelMatrix {
        gains,
        noise_vars_effective: noise_vars,
    })
}

/// Receiver noise variance σₖ² in A² for a given received optical power.
pub fn noise_variance(received_power: f64, user: &ReceiverParams, noise: &NoiseParams) -> f64 {
    let shot = 2.0 * user.responsivity * noise.elementary_charge * received_power * noise.bandwidth;
    let ambient = 4.0
        * std::f64::consts::PI
        * noise.elementary_charge
        * user.active_area
        * user.responsivity
        * noise.ambient_photocurrent
        * (1.0 - user.fov_deg.to_radians().cos())
        * noise.bandwidth;
    let preamp = noise.preamp_density * noise.preamp_density * noise.bandwidth;
    shot + ambient + preamp
}

// ---------------------------------------------------------------------------
// Layouts and user placement
// ---------------------------------------------------------------------------

/// Ceiling luminary layouts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LedLayout {
    Grid2x2,
    Grid2x3,
    Grid3x3,
}

impl LedLayout {
    pub fn n_luminaries(&self) -> usize {
        match self {
            LedLayout::Grid2x2 => 4,
            LedLayout::Grid2x3 => 6,
            LedLayout::Grid3x3 => 9,
        }
    }
}

/// Luminary positions for a layout, centered on the room.
///
/// The 2×2 layout places luminaries at (±√2·L/5, ±√2·W/5) so the canonical
/// 5 m × 5 m room yields exactly (±√2, ±√2). The 2×3 and 3×3 layouts are
/// uniform grids at side-length fractions {1/4, 3/4} and {1/6, 1/2, 5/6}.
pub fn led_layout(kind: LedLayout, room_dims: &Vector3<f64>, height: f64) -> Vec<Vector3<f64>> {
    let (lx, ly) = (room_dims.x, room_dims.y);
    let s2 = std::f64::consts::SQRT_2;
    let xs2 = |frac: &[f64]| frac.iter().map(|f| f * lx).collect::<Vec<_>>();
    let ys2 = |frac: &[f64]| frac.iter().map(|f| f * ly).collect::<Vec<_>>();
    let (xs, ys) = match kind {
        LedLayout::Grid2x2 => (xs2(&[-s2 / 5.0, s2 / 5.0]), ys2(&[-s2 / 5.0, s2 / 5.0])),
        LedLayout::Grid2x3 => (xs2(&[-0.25, 0.25]), ys2(&[-1.0 / 3.0, 0.0, 1.0 / 3.0])),
        LedLayout::Grid3x3 => (
            xs2(&[-1.0 / 3.0, 0.0, 1.0 / 3.0]),
            ys2(&[-1.0 / 3.0, 0.0, 1.0 / 3.0]),
        ),
    };
    let mut positions = Vec::with_capacity(xs.len() * ys.len());
    for &y in &ys {
        for &x in &xs {
            positions.push(Vector3::new(x, y, height));
        }
    }
    positions
}

/// Samples `k` user positions i.i.d. uniform over the floor rectangle at the
/// receiver height. Deterministic for a fixed seed.
pub fn sample_users(rng_seed: u64, k: usize, room_dims: &Vector3<f64>, height: f64) -> Vec<Vector3<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    (0..k)
        .map(|_| {
            let x = (rng.gen::<f64>() - 0.5) * room_dims.x;
            let y = (rng.gen::<f64>() - 0.5) * room_dims.y;
            Vector3::new(x, y, height)
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------
