//! Radar link: SINR, clutter-plus-noise covariance, the closed-form receive
//! filter, beampatterns and the `Ψ` matrices used by the code update.

use thiserror::Error;

use crate::linalg::{solve_hpd, CMatrix, CVector, HermitianMatrix, LinalgError};
use crate::model::RadarChannel;
use crate::scenario::{steering, ArrayGeometry};

/// Angle grid used for exported beampatterns: 721 points over ±90°.
pub const BEAMPATTERN_POINTS: usize = 721;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RadarError {
    #[error("receive filter has zero norm")]
    ZeroFilter,
    #[error("clutter-plus-noise covariance is not positive definite: {0}")]
    Covariance(#[from] LinalgError),
}

/// Radar SINR `σ²_η |wᴴG(ψ)u|² / (Σ σ²_α |wᴴG_j u|² + σ²_z ‖w‖²)`.
pub fn sinr(u: &CVector, w: &CVector, ch: &RadarChannel) -> Result<f64, RadarError> {
    let wn = w.norm_squared();
    if wn == 0.0 {
        return Err(RadarError::ZeroFilter);
    }
    let signal = ch.target_power * w.dotc(&(&ch.target * u)).norm_sqr();
    let clutter: f64 = ch
        .clutter
        .iter()
        .map(|(g, p)| p * w.dotc(&(g * u)).norm_sqr())
        .sum();
    Ok(signal / (clutter + ch.noise * wn))
}

/// `Φ(u) = Σ σ²_α G_j u uᴴ G_jᴴ + σ²_z I`.
pub fn phi(u: &CVector, ch: &RadarChannel) -> HermitianMatrix {
    let mut out = HermitianMatrix::identity(ch.rx_len()).scaled(ch.noise);
    for (g, p) in &ch.clutter {
        out.add_outer(&(g * u), *p);
    }
    out
}

/// SINR-optimal filter `w = Φ⁻¹ G(ψ) u`.
pub fn optimal_radar_filter(u: &CVector, ch: &RadarChannel) -> Result<CVector, RadarError> {
    Ok(solve_hpd(&phi(u, ch), &(&ch.target * u))?)
}

/// The SINR achieved by [`optimal_radar_filter`]: `σ²_η uᴴGᴴΦ⁻¹Gu`.
pub fn sinr_upper_bound(u: &CVector, ch: &RadarChannel) -> Result<f64, RadarError> {
    let gu = &ch.target * u;
    let w = solve_hpd(&phi(u, ch), &gu)?;
    Ok(ch.target_power * gu.dotc(&w).re)
}

/// `Ψ₁ = σ²_η Gᴴ w wᴴ G` and `Ψ₂ = Σ σ²_α G_jᴴ w wᴴ G_j`.
pub fn psi_matrices(w: &CVector, ch: &RadarChannel) -> (HermitianMatrix, HermitianMatrix) {
    let n = ch.target.ncols();
    let mut psi1 = HermitianMatrix::zeros(n);
    psi1.add_outer(&ch.target.ad_mul(w), ch.target_power);
    let mut psi2 = HermitianMatrix::zeros(n);
    for (g, p) in &ch.clutter {
        psi2.add_outer(&g.ad_mul(w), *p);
    }
    (psi1, psi2)
}

/// Radiated power `‖sᵀ(ξ) U‖² / T` towards `angle` for code `u = vec(U)`.
pub fn transmit_beampattern(u: &CVector, tx: &ArrayGeometry, frequency: f64, angle: f64) -> f64 {
    let s = steering(tx, frequency, angle);
    let n = tx.num_elements;
    let t = u.len() / n;
    (0..t)
        .map(|i| s.dot(&u.rows(i * n, n)).norm_sqr())
        .sum::<f64>()
        / t as f64
}

/// Receive power `‖Wᴴ g(ξ)‖² / T` of a filter `w = vec(W)`, `W` being
/// `N_r × T`.
pub fn receive_beampattern(w: &CVector, rx: &ArrayGeometry, frequency: f64, angle: f64) -> f64 {
    let g = steering(rx, frequency, angle);
    let n = rx.num_elements;
    let t = w.len() / n;
    (0..t).map(|i| w.rows(i * n, n).dotc(&g).norm_sqr()).sum::<f64>() / t as f64
}

/// Same as [`receive_beampattern`] for a filter given in matrix form.
pub fn receive_beampattern_matrix(w: &CMatrix, rx: &ArrayGeometry, frequency: f64, angle: f64) -> f64 {
    let g = steering(rx, frequency, angle);
    w.ad_mul(&g).norm_squared() / w.ncols() as f64
}

/// The export grid, in degrees.
pub fn beampattern_grid_deg() -> Vec<f64> {
    (0..BEAMPATTERN_POINTS)
        .map(|i| -90.0 + 180.0 * i as f64 / (BEAMPATTERN_POINTS - 1) as f64)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::commlink::tests::rand_cvec;
    use crate::linalg::{max_eigpair, min_eigenvalue, unvec, EIG_DEFAULT_TOL};
    use crate::scenario::generator::InstanceGenerator;
    use num_complex::Complex64;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn channel(seed: u64, k: usize) -> (crate::scenario::Scenario, RadarChannel) {
        let s = InstanceGenerator::default().instantiate(seed);
        let ch = RadarChannel::new(&s, k);
        (s, ch)
    }

    #[test]
    fn sinr_matches_term_by_term() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (_, ch) = channel(1, 0);
        let u = rand_cvec(&mut rng, 22);
        let w = rand_cvec(&mut rng, 8);
        let num = ch.target_power * (w.adjoint() * &ch.target * &u)[(0, 0)].norm_sqr();
        let mut den = ch.noise * w.norm_squared();
        for (g, p) in &ch.clutter {
            den += p * (w.adjoint() * g * &u)[(0, 0)].norm_sqr();
        }
        let got = sinr(&u, &w, &ch).unwrap();
        assert!((got - num / den).abs() <= 1e-12 * got);
        // Phase of u and scale of w do not matter.
        let u2 = &u * Complex64::from_polar(1.0, 0.7);
        assert!((sinr(&u2, &w.scale(3.0), &ch).unwrap() - got).abs() <= 1e-12 * got);
        assert_eq!(sinr(&u, &CVector::zeros(8), &ch), Err(RadarError::ZeroFilter));
    }

    #[test]
    fn sinr_without_clutter_and_orthogonal_filter() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (_, mut ch) = channel(2, 1);
        ch.clutter.clear();
        let u = rand_cvec(&mut rng, 22);
        let w = rand_cvec(&mut rng, 8);
        let expect = ch.target_power * w.dotc(&(&ch.target * &u)).norm_sqr() / (ch.noise * w.norm_squared());
        assert!((sinr(&u, &w, &ch).unwrap() - expect).abs() <= 1e-12 * expect);
        let d = &ch.target * &u;
        let mut wo = w.clone();
        let c = d.dotc(&wo) / d.norm_squared();
        wo -= &d * c;
        assert!(sinr(&u, &wo, &ch).unwrap() <= 1e-20 * expect);
        // Without clutter the optimal filter is matched.
        let w = optimal_radar_filter(&u, &ch).unwrap();
        let cos = w.dotc(&d).norm() / (w.norm() * d.norm());
        assert!((cos - 1.0).abs() < 1e-12);
        assert_eq!(psi_matrices(&w, &ch).1.frobenius_norm(), 0.0);
    }

    #[test]
    fn phi_structure() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (_, ch) = channel(3, 2);
        let p0 = phi(&CVector::zeros(22), &ch);
        let eye = CMatrix::identity(8, 8).scale(ch.noise);
        assert!((p0.as_matrix() - &eye).norm() == 0.0);
        for _ in 0..10 {
            let u = rand_cvec(&mut rng, 22);
            let p = phi(&u, &ch);
            let lmin = min_eigenvalue(&p, EIG_DEFAULT_TOL).unwrap();
            let lmax = max_eigpair(&p, EIG_DEFAULT_TOL).unwrap().value;
            assert!(lmin >= ch.noise - 1e-10 * lmax, "{lmin} vs {}", ch.noise);
        }
    }

    #[test]
    fn optimal_filter_dominates_and_meets_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for k in 0..4 {
            let (_, ch) = channel(4, k);
            let u = rand_cvec(&mut rng, 22);
            let w = optimal_radar_filter(&u, &ch).unwrap();
            let best = sinr(&u, &w, &ch).unwrap();
            let bound = sinr_upper_bound(&u, &ch).unwrap();
            assert!((best - bound).abs() <= 1e-8 * bound);
            for _ in 0..1000 {
                let wr = rand_cvec(&mut rng, 8);
                assert!(best + 1e-9 * best.max(1.0) >= sinr(&u, &wr, &ch).unwrap());
            }
        }
    }

    #[test]
    fn psi_identity_and_trace() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (_, ch) = channel(5, 3);
        let w = rand_cvec(&mut rng, 8);
        let (p1, p2) = psi_matrices(&w, &ch);
        for _ in 0..100 {
            let u = rand_cvec(&mut rng, 22);
            let via = p1.quad_form(&u) / (p2.quad_form(&u) + ch.noise * w.norm_squared());
            let direct = sinr(&u, &w, &ch).unwrap();
            assert!((via - direct).abs() <= 1e-10 * direct);
        }
        let tr = p1.as_matrix().trace().re;
        let expect = ch.target_power * ch.target.ad_mul(&w).norm_squared();
        assert!((tr - expect).abs() <= 1e-12 * expect);
        for p in [&p1, &p2] {
            let n = max_eigpair(p, EIG_DEFAULT_TOL).unwrap().value;
            assert!(min_eigenvalue(p, EIG_DEFAULT_TOL).unwrap() >= -1e-10 * n);
        }
    }

    #[test]
    fn transmit_beampattern_full_power_towards_one_direction() {
        let s = InstanceGenerator::default().instantiate(6);
        let f = s.frequency(0);
        let nt = s.tx_array.num_elements;
        let t = s.num_slots;
        let xi = 0.4;
        let sv = steering(&s.tx_array, f, xi).conjugate();
        // ‖u‖²/T = 𝒫 with all power on one subcarrier.
        let scale = (s.power_budget / nt as f64).sqrt();
        let mut u = CVector::zeros(nt * t);
        for i in 0..t {
            u.rows_mut(i * nt, nt).copy_from(&sv.scale(scale));
        }
        let d = transmit_beampattern(&u, &s.tx_array, f, xi);
        let cap = nt as f64 * s.power_budget;
        assert!((d - cap).abs() <= 1e-12 * cap);
        assert_eq!(transmit_beampattern(&CVector::zeros(nt * t), &s.tx_array, f, xi), 0.0);
    }

    #[test]
    fn beampatterns_two_routes() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let s = InstanceGenerator::default().instantiate(7);
        let f = s.frequency(1);
        let u = rand_cvec(&mut rng, 22);
        for &a in &[-1.0, 0.0, 0.3] {
            let sv = steering(&s.tx_array, f, a);
            let um = unvec(&u, 11, 2);
            let direct = (sv.transpose() * &um).norm_squared() / 2.0;
            assert!((transmit_beampattern(&u, &s.tx_array, f, a) - direct).abs() <= 1e-12 * direct);
            let w = rand_cvec(&mut rng, 8);
            let wm = unvec(&w, 4, 2);
            let r1 = receive_beampattern(&w, &s.radar_rx_array, f, a);
            let r2 = receive_beampattern_matrix(&wm, &s.radar_rx_array, f, a);
            assert!((r1 - r2).abs() <= 1e-12 * r2);
        }
        assert_eq!(receive_beampattern(&CVector::zeros(8), &s.radar_rx_array, f, 0.1), 0.0);
    }

    #[test]
    fn matched_receive_filter_peaks_at_its_direction() {
        let s = InstanceGenerator::default().instantiate(8);
        let f = s.frequency(0);
        let xi0 = 20f64.to_radians();
        let g = steering(&s.radar_rx_array, f, xi0);
        let mut w = CVector::zeros(8);
        w.rows_mut(0, 4).copy_from(&g);
        w.rows_mut(4, 4).copy_from(&g);
        let w = w.unscale(w.norm());
        let at = receive_beampattern(&w, &s.radar_rx_array, f, xi0);
        for deg in beampattern_grid_deg() {
            assert!(receive_beampattern(&w, &s.radar_rx_array, f, deg.to_radians()) <= at * (1.0 + 1e-12));
        }
    }

    #[test]
    fn grid_has_quarter_degree_steps() {
        let g = beampattern_grid_deg();
        assert_eq!(g.len(), 721);
        assert_eq!(g[0], -90.0);
        assert_eq!(g[720], 90.0);
        assert!((g[1] - g[0] - 0.25).abs() < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn beampattern_never_exceeds_cap(seed in 0u64..10_000, frac in 0.01f64..1.0) {
            let s = InstanceGenerator::default().instantiate(seed % 7);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let u = rand_cvec(&mut rng, 22);
            let u = u.scale((frac * s.power_budget * 2.0).sqrt() / u.norm());
            let cap = 11.0 * s.power_budget;
            for k in 0..4 {
                let f = s.frequency(k);
                for i in 0..=180 {
                    let a = (-90.0 + i as f64).to_radians();
                    prop_assert!(transmit_beampattern(&u, &s.tx_array, f, a) <= cap * (1.0 + 1e-9));
                }
            }
        }
    }
}
