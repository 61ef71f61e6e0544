//! User receive-filter update: the `Ξ` matrices, the two zero-forcing
//! candidates (direct-only with `κ = ∞`, indirect-only with `κ = 0`),
//! candidate selection and the feasibility screens for the SNR constraint.

use log::debug;
use thiserror::Error;

use crate::commlink::{mode_error_prob, mode_snr, rho_threshold, CommError, LinkMode};
use crate::cvxsolver::{lift_matrix, unlift_vector};
use crate::linalg::{
    block_diag_repeat, max_eigpair, numerical_rank, projector_complement, CMatrix, CVector,
    HermitianMatrix, EIG_DEFAULT_TOL, RANK_TOL,
};
use crate::model::UserChannel;
use crate::scenario::{KappaMode, PathKind};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum UserFilterError {
    #[error("no receive mode is available for this user")]
    NoCandidate,
    #[error(transparent)]
    Comm(#[from] CommError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterCandidate {
    /// Unit-norm filter.
    pub w: CVector,
    pub mode: LinkMode,
    pub achieved_snr: f64,
    pub rho: f64,
    pub error_prob: f64,
    pub feasible: bool,
}

/// `Ξ = Σ power/σ²_z · G u uᴴ Gᴴ`, so `wᴴΞw = ν(u, w)/σ²_z`.
pub fn xi_matrix(ch: &UserChannel, u: &CVector) -> HermitianMatrix {
    let mut xi = HermitianMatrix::zeros(ch.rx_len());
    for p in &ch.paths {
        xi.add_outer(&(&p.g * u), p.power / ch.noise);
    }
    xi
}

/// `Πᵈ`: complement of the indirect receive steering vectors (identity if
/// there are none).
pub fn direct_projector(ch: &UserChannel) -> HermitianMatrix {
    let v: Vec<CVector> = ch.indirect().map(|p| p.rx_steer.clone()).collect();
    projector_complement(ch.num_rx, &v, RANK_TOL).expect("steering dims match")
}

/// `Πⁱ`: complement of the direct receive steering vector (identity if the
/// direct path is absent).
pub fn indirect_projector(ch: &UserChannel) -> HermitianMatrix {
    let v: Vec<CVector> = ch.direct().map(|p| p.rx_steer.clone()).into_iter().collect();
    projector_complement(ch.num_rx, &v, RANK_TOL).expect("steering dims match")
}

pub fn projector(ch: &UserChannel, mode: LinkMode) -> HermitianMatrix {
    match mode {
        LinkMode::Direct => direct_projector(ch),
        LinkMode::Indirect => indirect_projector(ch),
    }
}

/// `(I_T ⊗ Π) Ξ (I_T ⊗ Π)`.
pub fn projected_xi(ch: &UserChannel, u: &CVector, mode: LinkMode) -> HermitianMatrix {
    let big = HermitianMatrix::symmetrized(block_diag_repeat(projector(ch, mode).as_matrix(), ch.num_slots));
    xi_matrix(ch, u).congruence(&big)
}

/// Modes that can be served on this link, honouring a forced mode.
pub fn available_modes(ch: &UserChannel) -> Vec<LinkMode> {
    let has_direct = ch.direct().is_some();
    let indirect: Vec<CVector> = ch
        .indirect()
        .filter(|p| p.power > 0.0)
        .map(|p| p.rx_steer.clone())
        .collect();
    let mut modes = Vec::new();
    if has_direct {
        // Zero-forcing the indirect paths needs a non-trivial complement.
        if numerical_rank(&indirect, RANK_TOL) < ch.num_rx {
            modes.push(LinkMode::Direct);
        } else {
            debug!("direct mode unavailable: indirect paths span the receive space");
        }
    }
    if !indirect.is_empty() && (!has_direct || ch.num_rx >= 2) {
        modes.push(LinkMode::Indirect);
    }
    match ch.kappa_mode {
        KappaMode::Auto => modes,
        KappaMode::ForceDirect => modes.into_iter().filter(|m| *m == LinkMode::Direct).collect(),
        KappaMode::ForceIndirect => modes.into_iter().filter(|m| *m == LinkMode::Indirect).collect(),
    }
}

/// Top eigenpair, falling back to a dense real symmetric eigensolver when
/// power iteration stalls on a near-degenerate spectrum.
fn top_eigpair(h: &HermitianMatrix) -> (f64, CVector) {
    match max_eigpair(h, EIG_DEFAULT_TOL) {
        Ok(e) => (e.value, e.vector),
        Err(_) => {
            let eig = lift_matrix(h.as_matrix()).symmetric_eigen();
            let i = eig.eigenvalues.imax();
            let v = unlift_vector(&eig.eigenvectors.column(i).into_owned());
            let n = v.norm();
            (eig.eigenvalues[i], v.unscale(n))
        }
    }
}

fn candidate(ch: &UserChannel, u: &CVector, mode: LinkMode, d: usize) -> Result<FilterCandidate, UserFilterError> {
    let m = projected_xi(ch, u, mode);
    let (_, mut w) = top_eigpair(&m);
    if m.frobenius_norm() == 0.0 {
        // No signal reaches this mode; any filter in the subspace will do.
        let big = block_diag_repeat(projector(ch, mode).as_matrix(), ch.num_slots);
        w = (0..w.len())
            .map(|j| big.column(j).into_owned())
            .max_by(|a, b| a.norm().total_cmp(&b.norm()))
            .expect("non-empty");
        w.unscale_mut(w.norm());
    }
    let snr = mode_snr(u, &w, ch, mode)?;
    let rho = rho_threshold(ch.error_target, mode, d)?.rho;
    Ok(FilterCandidate {
        error_prob: mode_error_prob(snr, mode, d),
        feasible: snr >= rho,
        achieved_snr: snr,
        rho,
        w,
        mode,
    })
}

/// The best filter in each available mode for code `u`.
pub fn filter_candidates(ch: &UserChannel, u: &CVector, d: usize) -> Result<Vec<FilterCandidate>, UserFilterError> {
    let modes = available_modes(ch);
    if modes.is_empty() {
        return Err(UserFilterError::NoCandidate);
    }
    modes.into_iter().map(|m| candidate(ch, u, m, d)).collect()
}

/// Lower error probability among feasible candidates (direct wins ties);
/// with none feasible, the largest `SNR/ρ` ratio, still flagged infeasible.
pub fn select_filter(candidates: &[FilterCandidate]) -> FilterCandidate {
    assert!(!candidates.is_empty(), "select_filter needs candidates");
    let rank = |c: &FilterCandidate| match c.mode {
        LinkMode::Direct => 0,
        LinkMode::Indirect => 1,
    };
    let feasible: Vec<&FilterCandidate> = candidates.iter().filter(|c| c.feasible).collect();
    if !feasible.is_empty() {
        return (*feasible
            .iter()
            .min_by(|a, b| a.error_prob.total_cmp(&b.error_prob).then(rank(a).cmp(&rank(b))))
            .unwrap())
        .clone();
    }
    candidates
        .iter()
        .max_by(|a, b| {
            (a.achieved_snr / a.rho)
                .total_cmp(&(b.achieved_snr / b.rho))
                .then(rank(b).cmp(&rank(a)))
        })
        .unwrap()
        .clone()
}

/// `‖Uᴴ s*‖²` for a transmit steering vector.
fn steered_energy(u_mat: &CMatrix, tx: &CVector) -> f64 {
    u_mat.ad_mul(&tx.conjugate()).norm_squared()
}

/// Per-path terms `power/σ² · gᴴΠg · ‖Uᴴs*‖²` of the paths used by `mode`.
pub fn path_terms(ch: &UserChannel, u_mat: &CMatrix, mode: LinkMode) -> Vec<f64> {
    let pi = projector(ch, mode);
    ch.paths
        .iter()
        .filter(|p| mode.uses(p.kind))
        .map(|p| p.power / ch.noise * pi.quad_form(&p.rx_steer) * steered_energy(u_mat, &p.tx_steer))
        .collect()
}

/// Necessary condition for the SNR constraint: the code must radiate
/// towards the departure direction(s) the mode relies on.
pub fn c3_necessary(ch: &UserChannel, u_mat: &CMatrix, mode: LinkMode) -> bool {
    let scale = u_mat.norm_squared() * ch.paths.first().map_or(0.0, |p| p.tx_steer.norm_squared());
    let threshold = 1e-24 * scale;
    let energies = ch
        .paths
        .iter()
        .filter(|p| mode.uses(p.kind) && (p.kind == PathKind::Indirect || p.power > 0.0))
        .map(|p| steered_energy(u_mat, &p.tx_steer));
    match mode {
        LinkMode::Direct => energies.take(1).any(|e| e > threshold),
        LinkMode::Indirect => energies.fold(0.0, f64::max) > threshold,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sufficiency {
    Pass,
    /// Bound not met, or the rank hypothesis fails.
    Inconclusive,
}

/// Sufficient condition: with `rank U = N_t`,
/// `λ_min(UUᴴ) ≥ ρ σ²/N_t / max_q(power_q gᴴΠg)` guarantees the mode's
/// best filter meets `ρ`.
pub fn c3_sufficient(ch: &UserChannel, u_mat: &CMatrix, rho: f64, mode: LinkMode) -> Sufficiency {
    let nt = u_mat.nrows();
    let gram = HermitianMatrix::symmetrized(u_mat * u_mat.adjoint());
    let eig = lift_matrix(gram.as_matrix()).symmetric_eigenvalues();
    let lmin = eig.min();
    let lmax = eig.max();
    if u_mat.ncols() < nt || lmin <= RANK_TOL * lmax {
        return Sufficiency::Inconclusive;
    }
    let pi = projector(ch, mode);
    let best = ch
        .paths
        .iter()
        .filter(|p| mode.uses(p.kind))
        .map(|p| p.power * pi.quad_form(&p.rx_steer))
        .fold(0.0, f64::max);
    if best > 0.0 && lmin >= rho * ch.noise / nt as f64 / best {
        Sufficiency::Pass
    } else {
        Sufficiency::Inconclusive
    }
}
