//! Physical description of a DFRC deployment: arrays, subcarriers, users,
//! clutter, targets and constraint levels.
//!
//! All powers are linear and all angles are radians here; dB and degrees
//! only appear in [`config`].

pub mod config;
pub mod generator;

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;

use num_complex::Complex64;

use crate::linalg::{CMatrix, CVector};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Uniform linear array.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArrayGeometry {
    pub num_elements: usize,
    /// Element spacing in meters.
    pub element_spacing: f64,
}

impl ArrayGeometry {
    pub fn new(num_elements: usize, element_spacing: f64) -> Self {
        Self {
            num_elements,
            element_spacing,
        }
    }

    /// Half-wavelength spacing at the highest subcarrier frequency.
    pub fn half_wavelength(num_elements: usize, max_frequency: f64) -> Self {
        Self::new(num_elements, SPEED_OF_LIGHT / (2.0 * max_frequency))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Subcarrier {
    /// Center frequency in Hz.
    pub center_frequency: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PathKind {
    Direct,
    Indirect,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UserPath {
    pub kind: PathKind,
    /// Angle at the transmitter, radians.
    pub angle_departure: f64,
    /// Angle at the user array, radians.
    pub angle_arrival: f64,
    /// `|β|²` for the direct path, `σ²_β` for an indirect one.
    pub power: f64,
}

/// How the user receive filter fixes the Rician factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum KappaMode {
    /// Pick the better of the line-of-sight and scattered filters.
    #[default]
    Auto,
    ForceDirect,
    ForceIndirect,
}

#[derive(Debug, Clone, PartialEq)]
pub struct User {
    pub array: ArrayGeometry,
    pub paths: Vec<UserPath>,
    /// Noise power per subcarrier.
    pub noise_power: Vec<f64>,
    /// Error-rate target per subcarrier, in (0, 1/2).
    pub error_target: Vec<f64>,
    pub kappa_mode: KappaMode,
}

impl User {
    pub fn direct_path(&self) -> Option<&UserPath> {
        self.paths
            .iter()
            .find(|p| p.kind == PathKind::Direct && p.power > 0.0)
    }

    pub fn indirect_paths(&self) -> impl Iterator<Item = &UserPath> {
        self.paths.iter().filter(|p| p.kind == PathKind::Indirect)
    }

    pub fn num_indirect(&self) -> usize {
        self.indirect_paths().count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClutterScatterer {
    pub angle: f64,
    /// Scatterer power per subcarrier.
    pub power: Vec<f64>,
}

/// A transmit-beampattern cap `Δ_k(ξ) ≤ level · N_t · P`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProtectedDirection {
    pub subcarrier: usize,
    pub angle: f64,
    /// Relative level δ in [0, 1].
    pub level: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub tx_array: ArrayGeometry,
    pub radar_rx_array: ArrayGeometry,
    pub subcarriers: Vec<Subcarrier>,
    pub num_slots: usize,
    pub constellation_size: usize,
    /// Average transmit power budget, linear (W).
    pub power_budget: f64,
    pub users: Vec<User>,
    pub clutter: Vec<ClutterScatterer>,
    /// Inspected direction per subcarrier.
    pub target_direction: Vec<f64>,
    /// Target response variance per subcarrier.
    pub target_power: Vec<f64>,
    /// Radar receiver noise per subcarrier.
    pub radar_noise: Vec<f64>,
    pub protected: Vec<ProtectedDirection>,
}

impl Scenario {
    pub fn num_subcarriers(&self) -> usize {
        self.subcarriers.len()
    }

    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    pub fn frequency(&self, k: usize) -> f64 {
        self.subcarriers[k].center_frequency
    }

    /// Complex length of one subcarrier's code vector, `T · N_t`.
    pub fn code_len(&self) -> usize {
        self.num_slots * self.tx_array.num_elements
    }

    /// Protected directions on subcarrier `k`.
    pub fn protected_on(&self, k: usize) -> impl Iterator<Item = &ProtectedDirection> {
        self.protected.iter().filter(move |p| p.subcarrier == k)
    }

    /// Set every clutter power on every subcarrier from a signal-to-clutter ratio.
    pub fn calibrate_clutter(&mut self, scr: f64) {
        let j = self.clutter.len();
        if j == 0 {
            return;
        }
        for k in 0..self.num_subcarriers() {
            let p = scr_calibrate(scr, self.target_power[k], j);
            for c in &mut self.clutter {
                c.power[k] = p;
            }
        }
    }

    /// Sets every user's error target on every subcarrier.
    pub fn set_error_target(&mut self, epsilon: f64) {
        for u in &mut self.users {
            u.error_target.iter_mut().for_each(|e| *e = epsilon);
        }
    }

    /// Sets every protected-direction level.
    pub fn set_protection_level(&mut self, delta: f64) {
        self.protected.iter_mut().for_each(|p| p.level = delta);
    }
}

/// Steering vector with entries `exp(−j 2π (f b / c) sin(angle) n)`.
pub fn steering(array: &ArrayGeometry, freq: f64, angle: f64) -> CVector {
    let phase = -2.0 * PI * freq * array.element_spacing / SPEED_OF_LIGHT * angle.sin();
    CVector::from_fn(array.num_elements, |n, _| {
        Complex64::from_polar(1.0, phase * n as f64)
    })
}

/// `I_T ⊗ g sᵀ`, of size `(T·N_rx) × (T·N_tx)`.
pub fn g_matrix(rx_steer: &CVector, tx_steer: &CVector, num_slots: usize) -> CMatrix {
    let block = rx_steer * tx_steer.transpose();
    crate::linalg::block_diag_repeat(&block, num_slots)
}

/// Per-scatterer clutter power giving the requested signal-to-clutter ratio
/// with `num_clutter` equal-strength scatterers.
pub fn scr_calibrate(scr: f64, target_power: f64, num_clutter: usize) -> f64 {
    assert!(num_clutter >= 1, "at least one clutter scatterer required");
    assert!(scr > 0.0, "signal-to-clutter ratio must be positive");
    target_power / (scr * num_clutter as f64)
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// One invariant violation, with a path to the offending field.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub path: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

fn angle_ok(a: f64) -> bool {
    a.is_finite() && a > -FRAC_PI_2 && a < FRAC_PI_2
}

fn same_angle(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12
}

/// Collects every invariant violation in a scenario. Never aborts.
pub fn validate(s: &Scenario) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |path: String, message: &str| {
        out.push(Violation {
            path,
            message: message.to_string(),
        })
    };
    let k_count = s.subcarriers.len();

    for (name, arr) in [("tx_array", &s.tx_array), ("radar_rx_array", &s.radar_rx_array)] {
        if arr.num_elements < 1 {
            push(format!("{name}.num_elements"), "must be at least 1");
        }
        if !(arr.element_spacing > 0.0 && arr.element_spacing.is_finite()) {
            push(format!("{name}.element_spacing"), "must be positive");
        }
    }
    if k_count == 0 {
        push("subcarriers".into(), "at least one subcarrier required");
    }
    for (k, sc) in s.subcarriers.iter().enumerate() {
        if !(sc.center_frequency > 0.0 && sc.center_frequency.is_finite()) {
            push(format!("subcarriers[{k}].center_frequency"), "must be positive");
        }
    }
    if s.num_slots < 2 {
        push(
            "num_slots".into(),
            "at least two slots required for differential detection",
        );
    }
    if s.constellation_size < 2 {
        push("constellation_size".into(), "must be at least 2");
    }
    if !(s.power_budget > 0.0 && s.power_budget.is_finite()) {
        push("power_budget".into(), "must be positive");
    }

    let per_k = [
        ("target_direction", &s.target_direction),
        ("target_power", &s.target_power),
        ("radar_noise", &s.radar_noise),
    ];
    for (name, v) in per_k {
        if v.len() != k_count {
            push(name.into(), "must have one entry per subcarrier");
        }
    }
    for (k, &a) in s.target_direction.iter().enumerate() {
        if !angle_ok(a) {
            push(format!("target_direction[{k}]"), "angle outside (-90°, 90°)");
        }
    }
    for (k, &p) in s.target_power.iter().enumerate() {
        if !(p > 0.0 && p.is_finite()) {
            push(format!("target_power[{k}]"), "must be positive");
        }
    }
    for (k, &p) in s.radar_noise.iter().enumerate() {
        if !(p > 0.0 && p.is_finite()) {
            push(format!("radar_noise[{k}]"), "must be positive");
        }
    }

    for (j, c) in s.clutter.iter().enumerate() {
        if !angle_ok(c.angle) {
            push(format!("clutter[{j}].angle"), "angle outside (-90°, 90°)");
        }
        if c.power.len() != k_count {
            push(format!("clutter[{j}].power"), "must have one entry per subcarrier");
        }
        for (k, &p) in c.power.iter().enumerate() {
            if !(p >= 0.0 && p.is_finite()) {
                push(format!("clutter[{j}].power[{k}]"), "must be non-negative");
            }
        }
        if s.target_direction.iter().any(|&t| same_angle(t, c.angle)) {
            push(
                format!("clutter[{j}].angle"),
                "clutter coincides with target direction",
            );
        }
    }

    for (m, u) in s.users.iter().enumerate() {
        if u.array.num_elements < 1 {
            push(format!("users[{m}].array.num_elements"), "must be at least 1");
        }
        if !(u.array.element_spacing > 0.0 && u.array.element_spacing.is_finite()) {
            push(format!("users[{m}].array.element_spacing"), "must be positive");
        }
        if u.paths.is_empty() {
            push(format!("users[{m}].paths"), "at least one path required");
        }
        if u.paths.iter().filter(|p| p.kind == PathKind::Direct).count() > 1 {
            push(format!("users[{m}].paths"), "at most one direct path allowed");
        }
        for (q, p) in u.paths.iter().enumerate() {
            if !angle_ok(p.angle_departure) {
                push(
                    format!("users[{m}].paths[{q}].angle_departure"),
                    "angle outside (-90°, 90°)",
                );
            }
            if !angle_ok(p.angle_arrival) {
                push(
                    format!("users[{m}].paths[{q}].angle_arrival"),
                    "angle outside (-90°, 90°)",
                );
            }
            let ok = match p.kind {
                PathKind::Direct => p.power > 0.0,
                PathKind::Indirect => p.power >= 0.0,
            };
            if !(ok && p.power.is_finite()) {
                push(
                    format!("users[{m}].paths[{q}].power"),
                    "direct power must be positive, indirect non-negative",
                );
            }
        }
        if u.noise_power.len() != k_count {
            push(
                format!("users[{m}].noise_power"),
                "must have one entry per subcarrier",
            );
        }
        for (k, &p) in u.noise_power.iter().enumerate() {
            if !(p > 0.0 && p.is_finite()) {
                push(format!("users[{m}].noise_power[{k}]"), "must be positive");
            }
        }
        if u.error_target.len() != k_count {
            push(
                format!("users[{m}].error_target"),
                "must have one entry per subcarrier",
            );
        }
        for (k, &e) in u.error_target.iter().enumerate() {
            if !(e > 0.0 && e < 0.5) {
                push(
                    format!("users[{m}].error_target[{k}]"),
                    "error_target outside (0, 1/2)",
                );
            }
        }
        match u.kappa_mode {
            KappaMode::ForceDirect if u.direct_path().is_none() => push(
                format!("users[{m}].kappa_mode"),
                "force-direct requires a direct path",
            ),
            KappaMode::ForceIndirect if u.num_indirect() == 0 => push(
                format!("users[{m}].kappa_mode"),
                "force-indirect requires an indirect path",
            ),
            _ => {}
        }
    }

    for (l, p) in s.protected.iter().enumerate() {
        if p.subcarrier >= k_count {
            push(
                format!("protected[{l}].subcarrier"),
                "subcarrier index out of range",
            );
        }
        if !(0.0..=1.0).contains(&p.level) {
            push(format!("protected[{l}].level"), "level outside [0, 1]");
        }
        if !angle_ok(p.angle) {
            push(format!("protected[{l}].angle"), "angle outside (-90°, 90°)");
        }
        if let Some(&t) = s.target_direction.get(p.subcarrier) {
            if same_angle(t, p.angle) {
                push(
                    format!("protected[{l}].angle"),
                    "protected direction coincides with target direction",
                );
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::numerical_rank;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn half_wave_pair() -> ArrayGeometry {
        // f·b/c = 1/2 at f = 1 Hz
        ArrayGeometry::new(2, SPEED_OF_LIGHT / 2.0)
    }

    #[test]
    fn broadside_steering_is_all_ones() {
        let s = steering(&ArrayGeometry::new(5, 0.07), 2e9, 0.0);
        for z in s.iter() {
            assert!((z - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn endfire_half_wave_steering() {
        let s = steering(&half_wave_pair(), 1.0, FRAC_PI_2);
        assert!((s[0] - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        assert!((s[1] - Complex64::from_polar(1.0, -PI)).norm() < 1e-12);
    }

    #[test]
    fn steering_unit_modulus_and_conjugate_symmetry() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let arr = ArrayGeometry::new(7, 0.074);
        for _ in 0..50 {
            let a = rng.random_range(-1.5..1.5);
            let s = steering(&arr, 2.0003e9, a);
            let sm = steering(&arr, 2.0003e9, -a);
            for n in 0..7 {
                assert!((s[n].norm() - 1.0).abs() < 1e-14);
                assert!((s[n].conj() - sm[n]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn g_matrix_shapes() {
        let g = CVector::from_vec(vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, 1.0)]);
        let s = CVector::from_vec(vec![
            Complex64::new(1.0, 0.0),
            Complex64::new(2.0, 0.0),
            Complex64::new(3.0, 0.0),
        ]);
        let one = g_matrix(&g, &s, 1);
        assert_eq!(one, &g * s.transpose());

        let e = |n: usize| {
            let mut v = CVector::zeros(n);
            v[0] = Complex64::new(1.0, 0.0);
            v
        };
        let two = g_matrix(&e(3), &e(4), 2);
        assert_eq!(two.shape(), (6, 8));
        let nonzero: Vec<_> = two
            .iter()
            .enumerate()
            .filter(|(_, z)| z.norm() > 0.0)
            .map(|(i, _)| (i % 6, i / 6))
            .collect();
        assert_eq!(nonzero, vec![(0, 0), (3, 4)]);
    }

    #[test]
    fn g_matrix_rank_equals_slots() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let rnd = |rng: &mut ChaCha8Rng, n| {
            CVector::from_fn(n, |_, _| {
                Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
            })
        };
        for t in 1..4 {
            let g = rnd(&mut rng, 3);
            let s = rnd(&mut rng, 5);
            let m = g_matrix(&g, &s, t);
            let cols = crate::linalg::columns(&m);
            assert_eq!(numerical_rank(&cols, 1e-10), t);
        }
    }

    #[test]
    fn g_matrix_acts_blockwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let rnd = |rng: &mut ChaCha8Rng, n| {
            CVector::from_fn(n, |_, _| {
                Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
            })
        };
        let g = rnd(&mut rng, 3);
        let s = rnd(&mut rng, 4);
        let x = rnd(&mut rng, 4);
        let t = 3;
        let stacked = CVector::from_fn(4 * t, |i, _| x[i % 4]);
        let y = g_matrix(&g, &s, t) * stacked;
        let block = &g * (s.transpose() * &x)[(0, 0)];
        for i in 0..3 * t {
            assert!((y[i] - block[i % 3]).norm() < 1e-12);
        }
    }

    #[test]
    fn scr_examples() {
        assert_eq!(scr_calibrate(1.0, 4.0, 4), 1.0);
        let p = scr_calibrate(db_to_linear(-20.0), 1e-16, 4);
        assert!((p - 2.5e-15).abs() < 1e-27);
        assert!((scr_calibrate(0.5, 3.0, 1) - 6.0).abs() < 1e-15);
    }

    #[test]
    fn scr_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        for _ in 0..100 {
            let scr: f64 = rng.random_range(0.001..1000.0);
            let eta: f64 = rng.random_range(1e-18..1e-12);
            let j = rng.random_range(1..8usize);
            let p = scr_calibrate(scr, eta, j);
            let back = eta / (p * j as f64);
            assert!((back - scr).abs() <= 1e-12 * scr);
        }
    }

    #[test]
    fn table_one_validates() {
        let s = generator::InstanceGenerator::default().instantiate(1);
        assert!(validate(&s).is_empty(), "{:?}", validate(&s));
    }

    #[test]
    fn validate_reports_error_target() {
        let mut s = generator::InstanceGenerator::default().instantiate(1);
        s.users[0].error_target[0] = 0.7;
        let v = validate(&s);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].path, "users[0].error_target[0]");
        assert!(v[0].message.contains("error_target outside (0, 1/2)"));
    }

    #[test]
    fn validate_reports_clutter_on_target() {
        let mut s = generator::InstanceGenerator::default().instantiate(2);
        s.clutter[1].angle = s.target_direction[2];
        let v = validate(&s);
        assert!(v
            .iter()
            .any(|x| x.path == "clutter[1].angle"
                && x.message == "clutter coincides with target direction"));
    }

    #[test]
    fn validate_collects_many() {
        let mut s = generator::InstanceGenerator::default().instantiate(3);
        s.num_slots = 1;
        s.protected[0].level = 1.5;
        s.radar_noise[0] = -1.0;
        let v = validate(&s);
        assert!(v.len() >= 3);
    }
}
