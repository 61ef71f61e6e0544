//! Communication link: Rician parameters, SNR, DPSK error probability,
//! SNR thresholds and the `Υ` matrices used by the code update.

use std::f64::consts::PI;

use thiserror::Error;

use crate::linalg::{CVector, HermitianMatrix};
use crate::model::{PathChannel, UserChannel};
use crate::scenario::PathKind;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CommError {
    #[error("receive filter has zero norm")]
    ZeroFilter,
    #[error("degenerate link: no power received on any path")]
    DegenerateLink,
    #[error("error target {0} outside (0, 1/2)")]
    ErrorTarget(f64),
    #[error("constellation size {0} must be at least 2")]
    Constellation(usize),
}

/// Rician shape factor; `Infinite` is pure line of sight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Kappa {
    Finite(f64),
    Infinite,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RicianParams {
    pub nu: f64,
    pub kappa: Kappa,
}

/// Which paths a receive filter exploits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum LinkMode {
    /// Indirect paths zero-forced, `κ = ∞`.
    Direct,
    /// Direct path zero-forced, `κ = 0`.
    Indirect,
}

impl LinkMode {
    pub fn uses(self, kind: PathKind) -> bool {
        matches!(
            (self, kind),
            (LinkMode::Direct, PathKind::Direct) | (LinkMode::Indirect, PathKind::Indirect)
        )
    }

    pub fn kappa(self) -> Kappa {
        match self {
            LinkMode::Direct => Kappa::Infinite,
            LinkMode::Indirect => Kappa::Finite(0.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnrThreshold {
    pub rho: f64,
    pub mode: LinkMode,
}

/// `power · |wᴴ G u|²` for one path.
pub fn path_power(p: &PathChannel, u: &CVector, w: &CVector) -> f64 {
    p.power * w.dotc(&(&p.g * u)).norm_sqr()
}

pub fn rician_params(u: &CVector, w: &CVector, ch: &UserChannel) -> Result<RicianParams, CommError> {
    let direct: f64 = ch
        .paths
        .iter()
        .filter(|p| p.kind == PathKind::Direct)
        .map(|p| path_power(p, u, w))
        .sum();
    let indirect: f64 = ch.indirect().map(|p| path_power(p, u, w)).sum();
    let nu = direct + indirect;
    if nu == 0.0 {
        return Err(CommError::DegenerateLink);
    }
    let kappa = if indirect == 0.0 {
        Kappa::Infinite
    } else {
        Kappa::Finite(direct / indirect)
    };
    Ok(RicianParams { nu, kappa })
}

/// All-path SNR `ν / (σ²_z ‖w‖²)`.
pub fn snr(u: &CVector, w: &CVector, ch: &UserChannel) -> Result<f64, CommError> {
    let wn = w.norm_squared();
    if wn == 0.0 {
        return Err(CommError::ZeroFilter);
    }
    let nu: f64 = ch.paths.iter().map(|p| path_power(p, u, w)).sum();
    Ok(nu / (ch.noise * wn))
}

/// SNR counting only the paths used by `mode`.
pub fn mode_snr(u: &CVector, w: &CVector, ch: &UserChannel, mode: LinkMode) -> Result<f64, CommError> {
    let wn = w.norm_squared();
    if wn == 0.0 {
        return Err(CommError::ZeroFilter);
    }
    let nu: f64 = ch
        .paths
        .iter()
        .filter(|p| mode.uses(p.kind))
        .map(|p| path_power(p, u, w))
        .sum();
    Ok(nu / (ch.noise * wn))
}

/// Binary DPSK error probability over a Rician channel.
pub fn error_prob_d2(kappa: Kappa, snr: f64) -> f64 {
    match kappa {
        Kappa::Infinite => 0.5 * (-snr).exp(),
        Kappa::Finite(k) => {
            if k + snr == 0.0 {
                return 0.5;
            }
            (1.0 + k) / (2.0 * (1.0 + k + snr)) * (-k * snr / (k + snr)).exp()
        }
    }
}

/// Gaussian tail `Q(x)`.
pub fn q_function(x: f64) -> f64 {
    0.5 * libm::erfc(x / std::f64::consts::SQRT_2)
}

/// `Q⁻¹(p)` for `p ∈ (0, 1)` by bisection to an absolute width of 1e-12.
pub fn q_inverse(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "Q⁻¹ needs p in (0, 1)");
    let (mut lo, mut hi) = (-40.0f64, 40.0f64);
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if q_function(mid) > p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Minimum SNR meeting the error target `epsilon` in the given mode.
///
/// For `D = 2` the closed-form error expressions are inverted exactly; for
/// `D > 2` the nearest-neighbour approximation (direct) and the Rayleigh
/// upper bound (indirect) are inverted.
pub fn rho_threshold(epsilon: f64, mode: LinkMode, d: usize) -> Result<SnrThreshold, CommError> {
    if !(epsilon > 0.0 && epsilon < 0.5) {
        return Err(CommError::ErrorTarget(epsilon));
    }
    if d < 2 {
        return Err(CommError::Constellation(d));
    }
    let rho = if d == 2 {
        match mode {
            LinkMode::Direct => (1.0 / (2.0 * epsilon)).ln(),
            LinkMode::Indirect => 1.0 / (2.0 * epsilon) - 1.0,
        }
    } else {
        let s2 = (PI / d as f64).sin().powi(2);
        match mode {
            LinkMode::Direct => q_inverse(epsilon / 2.0).powi(2) / s2,
            LinkMode::Indirect => {
                let c = (2.0 * PI - 2.0 * PI / d as f64 + (2.0 * PI / d as f64).sin()) / (2.0 * PI);
                c / (epsilon * s2)
            }
        }
    };
    Ok(SnrThreshold { rho, mode })
}

/// Error probability in a pure mode, matching [`rho_threshold`]'s model.
pub fn mode_error_prob(snr: f64, mode: LinkMode, d: usize) -> f64 {
    if d == 2 {
        return error_prob_d2(mode.kappa(), snr);
    }
    let s2 = (PI / d as f64).sin().powi(2);
    match mode {
        LinkMode::Direct => 2.0 * q_function((snr * s2).sqrt()),
        LinkMode::Indirect => {
            let c = (2.0 * PI - 2.0 * PI / d as f64 + (2.0 * PI / d as f64).sin()) / (2.0 * PI);
            (c / (snr * s2)).min(1.0)
        }
    }
}

fn upsilon_from(ch: &UserChannel, w: &CVector, keep: impl Fn(PathKind) -> bool) -> HermitianMatrix {
    let n = ch.paths.first().map_or(0, |p| p.g.ncols());
    let mut out = HermitianMatrix::zeros(n);
    let wn = w.norm_squared();
    if wn == 0.0 {
        return out;
    }
    for p in ch.paths.iter().filter(|p| keep(p.kind)) {
        // Gᴴ w wᴴ G = (Gᴴ w)(Gᴴ w)ᴴ
        let v = p.g.ad_mul(w);
        out.add_outer(&v, p.power / (ch.noise * wn));
    }
    out
}

/// `Υ` with `uᴴ Υ u = SNR(u, w)` over all paths.
pub fn upsilon_matrix(ch: &UserChannel, w: &CVector) -> HermitianMatrix {
    upsilon_from(ch, w, |_| true)
}

/// `Υ` restricted to the paths used by `mode`.
pub fn upsilon_for_mode(ch: &UserChannel, w: &CVector, mode: LinkMode) -> HermitianMatrix {
    upsilon_from(ch, w, |k| mode.uses(k))
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::linalg::{max_eigpair, min_eigenvalue, numerical_rank, EIG_DEFAULT_TOL};
    use crate::scenario::generator::InstanceGenerator;
    use crate::scenario::{ArrayGeometry, KappaMode, Scenario, User, UserPath};
    use num_complex::Complex64;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn rand_cvec(rng: &mut ChaCha8Rng, n: usize) -> CVector {
        CVector::from_fn(n, |_, _| {
            Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        })
    }

    fn scenario_with_user(paths: Vec<UserPath>) -> Scenario {
        let mut s = InstanceGenerator::default().instantiate(7);
        s.users = vec![User {
            array: ArrayGeometry::half_wavelength(4, 2.0003e9),
            paths,
            noise_power: vec![1e-15; 4],
            error_target: vec![1e-3; 4],
            kappa_mode: KappaMode::Auto,
        }];
        s
    }

    fn path(kind: PathKind, dep: f64, arr: f64, power: f64) -> UserPath {
        UserPath {
            kind,
            angle_departure: dep,
            angle_arrival: arr,
            power,
        }
    }

    #[test]
    fn kappa_conventions() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = scenario_with_user(vec![path(PathKind::Direct, 0.3, -0.2, 1e-13)]);
        let ch = UserChannel::new(&s, 0, 0);
        let u = rand_cvec(&mut rng, 22);
        let w = rand_cvec(&mut rng, 8);
        assert_eq!(rician_params(&u, &w, &ch).unwrap().kappa, Kappa::Infinite);

        let s = scenario_with_user(vec![
            path(PathKind::Direct, 0.3, -0.2, 1e-13),
            path(PathKind::Indirect, -0.5, 0.4, 5e-14),
        ]);
        let ch = UserChannel::new(&s, 1, 0);
        // Zero-force the direct path: w ⟂ G_0 u.
        let d = &ch.paths[0].g * &u;
        let mut w2 = rand_cvec(&mut rng, 8);
        let c = d.dotc(&w2) / d.norm_squared();
        w2 -= &d * c;
        let rp = rician_params(&u, &w2, &ch).unwrap();
        assert!(matches!(rp.kappa, Kappa::Finite(k) if k < 1e-20));

        // ν term by term.
        let rp = rician_params(&u, &w, &ch).unwrap();
        let t0 = 1e-13 * w.dotc(&(&ch.paths[0].g * &u)).norm_sqr();
        let t1 = 5e-14 * w.dotc(&(&ch.paths[1].g * &u)).norm_sqr();
        assert!((rp.nu - (t0 + t1)).abs() <= 1e-12 * rp.nu);
        assert!(matches!(rp.kappa, Kappa::Finite(k) if (k - t0 / t1).abs() <= 1e-12 * k));
    }

    #[test]
    fn snr_scale_invariance_and_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = InstanceGenerator::default().instantiate(3);
        let ch = UserChannel::new(&s, 2, 3);
        let u = rand_cvec(&mut rng, 22);
        let w = rand_cvec(&mut rng, 8);
        let a = snr(&u, &w, &ch).unwrap();
        let b = snr(&u, &w.scale(10.0), &ch).unwrap();
        assert!((a - b).abs() <= 1e-12 * a);
        let nu: f64 = ch
            .paths
            .iter()
            .map(|p| p.power * w.dotc(&(&p.g * &u)).norm_sqr())
            .sum();
        assert!((a - nu / (ch.noise * w.norm_squared())).abs() <= 1e-12 * a);
        assert_eq!(snr(&u, &CVector::zeros(8), &ch), Err(CommError::ZeroFilter));
    }

    #[test]
    fn error_probability_examples() {
        assert_eq!(error_prob_d2(Kappa::Finite(0.0), 0.0), 0.5);
        assert!((error_prob_d2(Kappa::Finite(0.0), 1.0) - 0.25).abs() < 1e-15);
        assert!((error_prob_d2(Kappa::Infinite, 5f64.ln()) - 0.1).abs() < 1e-15);
        // Large κ approaches the line-of-sight expression.
        let s = 3.0;
        assert!((error_prob_d2(Kappa::Finite(1e9), s) - 0.5 * (-s).exp()).abs() < 1e-8);
    }

    #[test]
    fn error_probability_monotone() {
        let kappas = [0.0, 0.1, 1.0, 10.0, 100.0];
        let snrs: Vec<f64> = (0..60).map(|i| 0.01 * 1.2f64.powi(i)).collect();
        for &k in &kappas {
            for w in snrs.windows(2) {
                assert!(error_prob_d2(Kappa::Finite(k), w[1]) < error_prob_d2(Kappa::Finite(k), w[0]));
            }
        }
        // In κ the decrease only holds above unit SNR.
        for &s in snrs.iter().filter(|&&s| s > 1.0) {
            for w in kappas.windows(2) {
                assert!(error_prob_d2(Kappa::Finite(w[1]), s) < error_prob_d2(Kappa::Finite(w[0]), s));
            }
            assert!(error_prob_d2(Kappa::Infinite, s) < error_prob_d2(Kappa::Finite(100.0), s));
        }
    }

    #[test]
    fn error_probability_grows_with_kappa_below_unit_snr() {
        let s = 0.5;
        assert!(error_prob_d2(Kappa::Finite(10.0), s) > error_prob_d2(Kappa::Finite(1.0), s));
    }

    #[test]
    fn threshold_examples() {
        let r = rho_threshold(0.5 * (-10f64).exp(), LinkMode::Direct, 2).unwrap();
        assert!((r.rho - 10.0).abs() < 1e-12);
        let r = rho_threshold(0.25, LinkMode::Indirect, 2).unwrap();
        assert!((r.rho - 1.0).abs() < 1e-15);
        let d = rho_threshold(1e-5, LinkMode::Direct, 2).unwrap().rho;
        let i = rho_threshold(1e-5, LinkMode::Indirect, 2).unwrap().rho;
        assert!((d - 10.819778284410283).abs() < 1e-12);
        assert!((i - 49_999.0).abs() < 1e-9);
        assert!((10.0 * d.log10() - 10.3).abs() < 0.05);
        assert!((10.0 * i.log10() - 47.0).abs() < 0.05);
        assert!(rho_threshold(0.7, LinkMode::Direct, 2).is_err());
        assert!(rho_threshold(0.0, LinkMode::Direct, 2).is_err());
    }

    #[test]
    fn threshold_round_trip() {
        for &eps in &[0.4, 0.1, 1e-2, 3e-3, 1e-5, 1e-9] {
            for mode in [LinkMode::Direct, LinkMode::Indirect] {
                let rho = rho_threshold(eps, mode, 2).unwrap().rho;
                let e = error_prob_d2(mode.kappa(), rho);
                assert!((e - eps).abs() <= 1e-10 * eps, "{mode:?} {eps}");
            }
        }
        for d in [4usize, 8, 16] {
            for &eps in &[1e-2, 1e-4, 1e-6] {
                for mode in [LinkMode::Direct, LinkMode::Indirect] {
                    let rho = rho_threshold(eps, mode, d).unwrap().rho;
                    let e = mode_error_prob(rho, mode, d);
                    assert!((e - eps).abs() <= 1e-9 * eps, "D={d} {mode:?} {eps}");
                }
            }
        }
    }

    #[test]
    fn q_inverse_accuracy() {
        assert!(q_inverse(0.5).abs() < 1e-11);
        assert!((q_inverse(q_function(2.5)) - 2.5).abs() < 1e-11);
        assert!((q_function(1.0) - 0.158_655_253_931_457_05).abs() < 1e-15);
    }

    #[test]
    fn upsilon_identity_psd_and_scale() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let s = InstanceGenerator::default().instantiate(5);
        for (k, m) in [(0, 0), (1, 2), (3, 3)] {
            let ch = UserChannel::new(&s, k, m);
            let w = rand_cvec(&mut rng, 8);
            let y = upsilon_matrix(&ch, &w);
            for _ in 0..100 {
                let u = rand_cvec(&mut rng, 22);
                let a = y.quad_form(&u);
                let b = snr(&u, &w, &ch).unwrap();
                assert!((a - b).abs() <= 1e-10 * b);
            }
            let lmin = min_eigenvalue(&y, EIG_DEFAULT_TOL).unwrap();
            let norm = max_eigpair(&y, EIG_DEFAULT_TOL).unwrap().value;
            assert!(lmin >= -1e-10 * norm);
            let y2 = upsilon_matrix(&ch, &w.scale(7.5));
            assert!((y2.as_matrix() - y.as_matrix()).norm() <= 1e-12 * y.frobenius_norm());
        }
    }

    #[test]
    fn upsilon_rank_one_for_single_direct_path() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let s = scenario_with_user(vec![path(PathKind::Direct, 0.1, 0.2, 1e-13)]);
        let ch = UserChannel::new(&s, 0, 0);
        let u = rand_cvec(&mut rng, 22);
        let w = &ch.paths[0].g * &u;
        let y = upsilon_matrix(&ch, &w);
        let cols = crate::linalg::columns(y.as_matrix());
        assert_eq!(numerical_rank(&cols, 1e-8), 1);
    }
}
