//! Transmit-code block update.
//!
//! Around the current codes `ũ_k` (with radar and user filters fixed) the
//! SNR constraints are replaced by their tangent planes (C3R) and the SINR
//! epigraph by a convex restriction in `(u_k, x_k)` (C5R). The restricted
//! problem, with the power budget (C1) and beampattern caps (C2), is solved
//! in real coordinates by the barrier solver. Non-concave merits are handled
//! by maximizing their concave minorizer, re-centred `mm_inner_steps` times.
//!
//! Variables are normalized: `u_k = σ B_k ζ_k` with `σ = √(𝒫T)` (so C1 reads
//! `Σ‖ζ_k‖² ≤ 1`) and `x_k = x̃_k y_k`. Every constraint is divided by its
//! natural scale so values near the expansion point are O(1).

use log::{debug, trace};
use thiserror::Error;

use crate::commlink::{mode_snr, upsilon_for_mode, CommError};
use crate::cvxsolver::{
    lift_matrix, lift_vector, phase_one, solve, unlift_vector, Constraint, ConvexProgram, Embedded,
    QuadTerm, SolveError, SolverOptions,
};
use crate::linalg::{CMatrix, CVector, HermitianMatrix};
use crate::merit::{MeritFunction, RMatrix, RVector, SmoothOracle};
use crate::model::{ChannelSet, DesignPoint};
use crate::radarlink::{psi_matrices, sinr, RadarError};

/// Relative slack when rechecking the original constraints.
pub const FEASIBILITY_TOL: f64 = 1e-8;
const START_SHRINK: f64 = 1e-3;
const INTERIOR_MARGIN: f64 = 1e-5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CodeUpdateError {
    #[error(transparent)]
    Radar(#[from] RadarError),
    #[error(transparent)]
    Comm(#[from] CommError),
    #[error("restricted problem rejected its own expansion point: {0}")]
    Restriction(SolveError),
}

/// Tangent-plane restriction `2Re{ũᴴΥu} − ũᴴΥũ ≥ ρ` of `uᴴΥu ≥ ρ`.
#[derive(Debug, Clone, PartialEq)]
pub struct C3Restriction {
    /// `Υ ũ`.
    pub grad: CVector,
    /// `ũᴴ Υ ũ`, the SNR at the expansion point.
    pub offset: f64,
    pub rho: f64,
}

impl C3Restriction {
    pub fn lhs(&self, u: &CVector) -> f64 {
        2.0 * self.grad.dotc(u).re - self.offset
    }

    pub fn holds(&self, u: &CVector) -> bool {
        self.lhs(u) >= self.rho
    }
}

/// Convex restriction of `x ≤ uᴴΨ₁u / (uᴴΨ₂u + σ²‖w‖²)`.
#[derive(Debug, Clone, PartialEq)]
pub enum C5Restriction {
    /// `(2/x̃)Re{ũᴴΨ₁u} − (x/x̃²)ũᴴΨ₁ũ ≥ uᴴΨ₂u + σ²‖w‖²`.
    Tangent {
        /// `Ψ₁ ũ`.
        psi1_u: CVector,
        /// `ũᴴΨ₁ũ`.
        s1: f64,
        x_tilde: f64,
        psi2: HermitianMatrix,
        noise_term: f64,
    },
    /// `x̃ = 0`: the auxiliary is pinned to zero.
    PinZero,
}

impl C5Restriction {
    /// Left-hand side (linear in `(u, x)`); `None` for the pin.
    pub fn lhs(&self, u: &CVector, x: f64) -> Option<f64> {
        match self {
            C5Restriction::Tangent { psi1_u, s1, x_tilde, .. } => {
                Some(2.0 / x_tilde * psi1_u.dotc(u).re - x / (x_tilde * x_tilde) * s1)
            }
            C5Restriction::PinZero => None,
        }
    }

    pub fn rhs(&self, u: &CVector) -> Option<f64> {
        match self {
            C5Restriction::Tangent { psi2, noise_term, .. } => Some(psi2.quad_form(u) + noise_term),
            C5Restriction::PinZero => None,
        }
    }

    pub fn holds(&self, u: &CVector, x: f64) -> bool {
        match (self.lhs(u, x), self.rhs(u)) {
            (Some(l), Some(r)) => l >= r,
            _ => x == 0.0,
        }
    }
}

/// Everything the restricted problem needs, cached around `ũ`.
#[derive(Debug, Clone)]
pub struct CodeUpdateState {
    pub codes: Vec<CVector>,
    /// `x̃_k = SINR_k(ũ_k, w_k)`.
    pub aux: Vec<f64>,
    pub psi: Vec<(HermitianMatrix, HermitianMatrix)>,
    /// `σ²_z ‖w_k‖²`.
    pub noise_terms: Vec<f64>,
    /// `Υ` of the served mode, `[k][m]`.
    pub upsilon: Vec<Vec<HermitianMatrix>>,
    pub rho: Vec<Vec<f64>>,
}

impl CodeUpdateState {
    pub fn new(ch: &ChannelSet, point: &DesignPoint) -> Result<Self, CodeUpdateError> {
        let kk = ch.num_subcarriers();
        let mut aux = Vec::with_capacity(kk);
        let mut psi = Vec::with_capacity(kk);
        let mut noise_terms = Vec::with_capacity(kk);
        for k in 0..kk {
            let w = &point.radar_filters[k];
            aux.push(sinr(&point.codes[k], w, &ch.radar[k])?);
            psi.push(psi_matrices(w, &ch.radar[k]));
            noise_terms.push(ch.radar[k].noise * w.norm_squared());
        }
        let upsilon = (0..kk)
            .map(|k| {
                point.user_links[k]
                    .iter()
                    .zip(&ch.users[k])
                    .map(|(l, uc)| upsilon_for_mode(uc, &l.filter, l.mode))
                    .collect()
            })
            .collect();
        let rho = point
            .user_links
            .iter()
            .map(|ls| ls.iter().map(|l| l.rho).collect())
            .collect();
        Ok(Self {
            codes: point.codes.clone(),
            aux,
            psi,
            noise_terms,
            upsilon,
            rho,
        })
    }
}

pub fn build_c3r(state: &CodeUpdateState, k: usize, m: usize) -> C3Restriction {
    let y = &state.upsilon[k][m];
    let u = &state.codes[k];
    C3Restriction {
        grad: y.as_matrix() * u,
        offset: y.quad_form(u),
        rho: state.rho[k][m],
    }
}

pub fn build_c5r(state: &CodeUpdateState, k: usize) -> C5Restriction {
    let x_tilde = state.aux[k];
    if x_tilde <= 0.0 {
        return C5Restriction::PinZero;
    }
    let (psi1, psi2) = &state.psi[k];
    let u = &state.codes[k];
    C5Restriction::Tangent {
        psi1_u: psi1.as_matrix() * u,
        s1: psi1.quad_form(u),
        x_tilde,
        psi2: psi2.clone(),
        noise_term: state.noise_terms[k],
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CodeUpdateOptions {
    pub mm_inner_steps: usize,
    pub solver: SolverOptions,
}

impl Default for CodeUpdateOptions {
    fn default() -> Self {
        Self {
            mm_inner_steps: 1,
            solver: SolverOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CodeUpdateOutcome {
    pub codes: Vec<CVector>,
    /// Auxiliaries `x_k` returned by the restricted problem.
    pub aux: Vec<f64>,
    /// `f` at the true SINRs, before and after (equal when rejected).
    pub objective_before: f64,
    pub objective_after: f64,
    pub accepted: bool,
    pub newton_steps: usize,
    pub stalled: bool,
}

fn reduce_matrix(b: Option<&CMatrix>, m: &CMatrix) -> CMatrix {
    match b {
        None => m.clone(),
        Some(b) => b.adjoint() * m * b,
    }
}

fn reduce_vector(b: Option<&CMatrix>, v: &CVector) -> CVector {
    match b {
        None => v.clone(),
        Some(b) => b.ad_mul(v),
    }
}

pub(crate) struct Layout {
    pub(crate) offsets: Vec<usize>,
    pub(crate) lens: Vec<usize>,
    /// First variable after the code blocks.
    pub(crate) y0: usize,
    pub(crate) n: usize,
}

impl Layout {
    /// `[Re ζ_0; Im ζ_0; …]` followed by `extra` scalar variables.
    pub(crate) fn new(ch: &ChannelSet, extra: usize) -> Self {
        let mut offsets = Vec::with_capacity(ch.num_subcarriers());
        let mut lens = Vec::with_capacity(ch.num_subcarriers());
        let mut next = 0;
        for k in 0..ch.num_subcarriers() {
            let r = ch.code_basis[k].as_ref().map_or(ch.code_len(), |b| b.ncols());
            offsets.push(next);
            lens.push(2 * r);
            next += 2 * r;
        }
        Layout { offsets, lens, y0: next, n: next + extra }
    }

    pub(crate) fn block(&self, k: usize) -> Vec<usize> {
        (self.offsets[k]..self.offsets[k] + self.lens[k]).collect()
    }

    /// Normalized real coordinates of `codes`; extras are zero.
    pub(crate) fn lift_codes(&self, ch: &ChannelSet, codes: &[CVector]) -> RVector {
        let sigma = code_scale(ch);
        let mut z = RVector::zeros(self.n);
        for (k, u) in codes.iter().enumerate() {
            let zeta = lift_vector(&reduce_vector(ch.code_basis[k].as_ref(), u).unscale(sigma));
            z.rows_mut(self.offsets[k], self.lens[k]).copy_from(&zeta);
        }
        z
    }

    pub(crate) fn unlift_codes(&self, ch: &ChannelSet, z: &RVector) -> Vec<CVector> {
        let sigma = code_scale(ch);
        (0..self.offsets.len())
            .map(|k| {
                let zeta = unlift_vector(&z.rows(self.offsets[k], self.lens[k]).into_owned()).scale(sigma);
                match &ch.code_basis[k] {
                    None => zeta,
                    Some(b) => b * zeta,
                }
            })
            .collect()
    }
}

/// `σ = √(𝒫T)`: codes at full power have unit normalized norm.
pub(crate) fn code_scale(ch: &ChannelSet) -> f64 {
    (ch.power_budget * ch.num_slots as f64).sqrt()
}

/// C1 and the non-zero C2 caps in normalized variables.
pub(crate) fn code_constraints(ch: &ChannelSet, layout: &Layout) -> Vec<Constraint> {
    let sigma = code_scale(ch);
    let all_z: Vec<usize> = (0..layout.y0).collect();
    let mut cons = vec![Constraint::quadratic(
        "C1 power budget",
        all_z.clone(),
        QuadTerm::ScaledIdentity(1.0),
        RVector::zeros(all_z.len()),
        -1.0,
    )];
    for k in 0..ch.num_subcarriers() {
        let basis = ch.code_basis[k].as_ref();
        let block = layout.block(k);
        for (l, (a, cap)) in ch.protected[k].iter().enumerate() {
            if *cap == 0.0 {
                continue; // enforced by the code basis
            }
            let q = lift_matrix(&reduce_matrix(basis, a)) * (sigma * sigma / cap);
            cons.push(Constraint::quadratic(
                format!("C2 k={k} l={l}"),
                block.clone(),
                QuadTerm::Dense(q),
                RVector::zeros(block.len()),
                -1.0,
            ));
        }
    }
    cons
}

/// Tangent-plane SNR row `(ũᴴΥũ − 2Re{ũᴴΥu})/ρ + t ≤ 0` in normalized
/// variables; `t` is the constant 1 when `t_index` is `None`.
pub(crate) fn c3r_row(
    ch: &ChannelSet,
    layout: &Layout,
    k: usize,
    m: usize,
    r: &C3Restriction,
    t_index: Option<usize>,
) -> Constraint {
    let sigma = code_scale(ch);
    let a = lift_vector(&reduce_vector(ch.code_basis[k].as_ref(), &r.grad)) * (-2.0 * sigma / r.rho);
    let mut support = layout.block(k);
    match t_index {
        None => Constraint::linear(format!("C3R k={k} m={m}"), support, a, 1.0 + r.offset / r.rho),
        Some(t) => {
            support.push(t);
            let a = RVector::from_iterator(a.len() + 1, a.iter().copied().chain([1.0]));
            Constraint::linear(format!("C3R k={k} m={m}"), support, a, r.offset / r.rho)
        }
    }
}

/// Checks C1, C2 and C3 (with the fixed user filters) on candidate codes.
pub fn codes_feasible(ch: &ChannelSet, point: &DesignPoint, codes: &[CVector]) -> Result<bool, CommError> {
    let t = ch.num_slots as f64;
    let power: f64 = codes.iter().map(|u| u.norm_squared()).sum::<f64>() / t;
    if power > ch.power_budget * (1.0 + FEASIBILITY_TOL) {
        return Ok(false);
    }
    let floor = 1e-12 * ch.num_tx as f64 * ch.power_budget * t;
    for (k, u) in codes.iter().enumerate() {
        for (a, cap) in &ch.protected[k] {
            if u.dotc(&(a * u)).re > cap * (1.0 + FEASIBILITY_TOL) + floor {
                return Ok(false);
            }
        }
        for (l, uc) in point.user_links[k].iter().zip(&ch.users[k]) {
            if mode_snr(u, &l.filter, uc, l.mode)? < l.rho * (1.0 - FEASIBILITY_TOL) {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// One code update: build the restriction at the current codes, solve it
/// (with MM re-centring for non-concave `f`) and accept the result only if
/// it is feasible for the original constraints and does not lower `f`.
pub fn update_codes(
    ch: &ChannelSet,
    point: &DesignPoint,
    merit: &MeritFunction,
    opts: &CodeUpdateOptions,
) -> Result<CodeUpdateOutcome, CodeUpdateError> {
    let state = CodeUpdateState::new(ch, point)?;
    let kk = ch.num_subcarriers();
    let sigma = code_scale(ch);
    let x_tilde = RVector::from_vec(state.aux.clone());
    let f_before = merit.value(&x_tilde);
    let reject = |steps, stalled| CodeUpdateOutcome {
        codes: point.codes.clone(),
        aux: state.aux.clone(),
        objective_before: f_before,
        objective_after: f_before,
        accepted: false,
        newton_steps: steps,
        stalled,
    };

    let layout = Layout::new(ch, kk);
    let mut cons = code_constraints(ch, &layout);
    let mut pins = Vec::new();
    let mut start = layout.lift_codes(ch, &state.codes);
    for k in 0..kk {
        let basis = ch.code_basis[k].as_ref();
        let block = layout.block(k);
        for m in 0..state.upsilon[k].len() {
            cons.push(c3r_row(ch, &layout, k, m, &build_c3r(&state, k, m), None));
        }
        let yk = layout.y0 + k;
        match build_c5r(&state, k) {
            C5Restriction::PinZero => pins.push((yk, 0.0)),
            C5Restriction::Tangent { psi1_u, s1, psi2, noise_term, .. } => {
                let d = s1 / state.aux[k]; // ũᴴΨ₂ũ + σ²‖w‖²
                let nz = block.len();
                let mut q = RMatrix::zeros(nz + 1, nz + 1);
                q.view_mut((0, 0), (nz, nz))
                    .copy_from(&(lift_matrix(&reduce_matrix(basis, psi2.as_matrix())) * (sigma * sigma / d)));
                let lin = lift_vector(&reduce_vector(basis, &psi1_u)) * (-sigma / s1);
                let qv = RVector::from_iterator(nz + 1, lin.iter().copied().chain([0.5]));
                let mut support = block.clone();
                support.push(yk);
                cons.push(Constraint::quadratic(format!("C5R k={k}"), support, QuadTerm::Dense(q), qv, noise_term / d));
                cons.push(Constraint::linear(format!("x{k} >= 0"), vec![yk], RVector::from_element(1, -1.0), 0.0));
                start[yk] = 1.0;
            }
        }
    }

    // Pull the expansion point (on the boundary) strictly inside.
    let mut z0 = start.clone();
    z0.rows_mut(0, layout.y0).scale_mut(1.0 - START_SHRINK);
    for k in 0..kk {
        z0[layout.y0 + k] *= 1.0 - 3.0 * START_SHRINK;
    }
    let z0 = match phase_one(layout.n, &cons, &pins, &z0, INTERIOR_MARGIN) {
        Ok(z) => z,
        Err(SolveError::NoInterior { best }) => {
            debug!("code update: restriction has no interior (margin {best:e}); keeping codes");
            return Ok(reject(0, true));
        }
        Err(e) => return Err(CodeUpdateError::Restriction(e)),
    };

    let f_scale = if f_before.abs() > 0.0 { 1.0 / f_before.abs() } else { 1.0 };
    let y_idx: Vec<usize> = (0..kk).map(|k| layout.y0 + k).collect();
    let mut center = x_tilde.clone();
    let mut z = z0;
    let mut steps = 0;
    let mut stalled = false;
    for _ in 0..opts.mm_inner_steps.max(1) {
        let surrogate = merit.minorizer_at(&center);
        let obj = Embedded {
            inner: &surrogate,
            indices: y_idx.clone(),
            weights: state.aux.clone(),
            scale: f_scale,
            n: layout.n,
        };
        let prog = ConvexProgram {
            n: layout.n,
            objective: &obj,
            constraints: cons.clone(),
            pins: pins.clone(),
            start: z.clone(),
        };
        let rep = match solve(&prog, &opts.solver) {
            Ok(r) => r,
            Err(e) => {
                debug!("code update: solver refused start: {e}");
                return Ok(reject(steps, true));
            }
        };
        steps += rep.newton_steps;
        stalled |= rep.stalled;
        trace!(
            "code update solve: {} stages, {} Newton steps, gap {:e}",
            rep.outer_iterations, rep.newton_steps, rep.gap
        );
        z = rep.solution;
        center = RVector::from_fn(kk, |k, _| state.aux[k] * z[layout.y0 + k]);
    }

    let codes = layout.unlift_codes(ch, &z);
    let mut new_sinr = Vec::with_capacity(kk);
    for k in 0..kk {
        new_sinr.push(sinr(&codes[k], &point.radar_filters[k], &ch.radar[k])?);
    }
    let f_after = merit.value(&RVector::from_vec(new_sinr));
    let feasible = codes_feasible(ch, point, &codes)?;
    if !(f_after >= f_before) || !feasible {
        debug!("code update rejected: f {f_before:e} -> {f_after:e}, feasible {feasible}");
        return Ok(reject(steps, stalled));
    }
    Ok(CodeUpdateOutcome {
        codes,
        aux: center.iter().copied().collect(),
        objective_before: f_before,
        objective_after: f_after,
        accepted: true,
        newton_steps: steps,
        stalled,
    })
}
