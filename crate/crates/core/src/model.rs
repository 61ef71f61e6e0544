//! Precomputed per-subcarrier channel matrices.
//!
//! Steering vectors and `G = I_T ⊗ g sᵀ` matrices depend only on the
//! scenario, so they are built once and shared by every block update.

use crate::commlink::LinkMode;
use crate::linalg::{block_diag_repeat, columns, orthonormal_basis, projector_complement, CMatrix, CVector, RANK_TOL};
use crate::scenario::{g_matrix, steering, KappaMode, PathKind, Scenario};

/// Radar-side channel on one subcarrier.
#[derive(Debug, Clone)]
pub struct RadarChannel {
    /// `G(ψ)`, size `T N_r × T N_t`.
    pub target: CMatrix,
    pub target_power: f64,
    /// `(G(θ_j), σ²_α)` for every scatterer.
    pub clutter: Vec<(CMatrix, f64)>,
    pub noise: f64,
}

impl RadarChannel {
    pub fn new(s: &Scenario, k: usize) -> Self {
        let f = s.frequency(k);
        let g = |angle: f64| {
            g_matrix(
                &steering(&s.radar_rx_array, f, angle),
                &steering(&s.tx_array, f, angle),
                s.num_slots,
            )
        };
        Self {
            target: g(s.target_direction[k]),
            target_power: s.target_power[k],
            clutter: s
                .clutter
                .iter()
                .map(|c| (g(c.angle), c.power[k]))
                .collect(),
            noise: s.radar_noise[k],
        }
    }

    pub fn rx_len(&self) -> usize {
        self.target.nrows()
    }
}

/// One propagation path as seen by a user on one subcarrier.
#[derive(Debug, Clone)]
pub struct PathChannel {
    pub kind: PathKind,
    /// `G(φ̄, φ)`, size `T N_m × T N_t`.
    pub g: CMatrix,
    /// User receive steering vector `g(φ̄)`.
    pub rx_steer: CVector,
    /// Transmit steering vector `s(φ)`.
    pub tx_steer: CVector,
    pub power: f64,
}

/// Communication channel of one user on one subcarrier.
#[derive(Debug, Clone)]
pub struct UserChannel {
    pub paths: Vec<PathChannel>,
    pub noise: f64,
    pub error_target: f64,
    pub kappa_mode: KappaMode,
    pub num_rx: usize,
    pub num_slots: usize,
}

impl UserChannel {
    pub fn new(s: &Scenario, k: usize, m: usize) -> Self {
        let f = s.frequency(k);
        let user = &s.users[m];
        let paths = user
            .paths
            .iter()
            .map(|p| {
                let rx_steer = steering(&user.array, f, p.angle_arrival);
                let tx_steer = steering(&s.tx_array, f, p.angle_departure);
                PathChannel {
                    kind: p.kind,
                    g: g_matrix(&rx_steer, &tx_steer, s.num_slots),
                    rx_steer,
                    tx_steer,
                    power: p.power,
                }
            })
            .collect();
        Self {
            paths,
            noise: user.noise_power[k],
            error_target: user.error_target[k],
            kappa_mode: user.kappa_mode,
            num_rx: user.array.num_elements,
            num_slots: s.num_slots,
        }
    }

    pub fn rx_len(&self) -> usize {
        self.num_rx * self.num_slots
    }

    pub fn direct(&self) -> Option<&PathChannel> {
        self.paths
            .iter()
            .find(|p| p.kind == PathKind::Direct && p.power > 0.0)
    }

    pub fn indirect(&self) -> impl Iterator<Item = &PathChannel> {
        self.paths.iter().filter(|p| p.kind == PathKind::Indirect)
    }

    pub fn num_indirect(&self) -> usize {
        self.indirect().count()
    }
}

/// Everything the design loop needs about one scenario.
#[derive(Debug, Clone)]
pub struct ChannelSet {
    pub radar: Vec<RadarChannel>,
    /// Indexed `[k][m]`.
    pub users: Vec<Vec<UserChannel>>,
    /// `I_T ⊗ s* sᵀ` for every protected direction, with its cap
    /// `δ N_t 𝒫 T` on `uᴴ A u`, per subcarrier.
    pub protected: Vec<Vec<(CMatrix, f64)>>,
    /// Transmit steering vectors of the protected directions, per subcarrier.
    pub protected_steering: Vec<Vec<CVector>>,
    /// Orthonormal basis `B_k` of the admissible codes when some protected
    /// direction has level 0 (`sᵀU = 0` enforced exactly as `u = B_k z`);
    /// `None` when every code is admissible.
    pub code_basis: Vec<Option<CMatrix>>,
    pub power_budget: f64,
    pub num_tx: usize,
    pub num_slots: usize,
    pub constellation_size: usize,
}

impl ChannelSet {
    pub fn new(s: &Scenario) -> Self {
        let kk = s.num_subcarriers();
        let nt = s.tx_array.num_elements;
        let t = s.num_slots;
        let mut protected = vec![Vec::new(); kk];
        let mut protected_steering = vec![Vec::new(); kk];
        let mut nulled: Vec<Vec<CVector>> = vec![Vec::new(); kk];
        for p in &s.protected {
            let sv = steering(&s.tx_array, s.frequency(p.subcarrier), p.angle);
            if p.level == 0.0 {
                nulled[p.subcarrier].push(sv.conjugate());
            }
            let block = sv.conjugate() * sv.transpose();
            let a = block_diag_repeat(&block, t);
            let cap = p.level * nt as f64 * s.power_budget * t as f64;
            protected[p.subcarrier].push((a, cap));
            protected_steering[p.subcarrier].push(sv);
        }
        let code_basis = nulled
            .iter()
            .map(|v| {
                if v.is_empty() {
                    return None;
                }
                // Columns of U must be orthogonal to every s*.
                let proj = projector_complement(nt, v, RANK_TOL).expect("steering dims match");
                let basis = orthonormal_basis(nt, &columns(proj.as_matrix()), RANK_TOL).expect("dims match");
                let b = CMatrix::from_columns(&basis);
                let b = if basis.is_empty() { CMatrix::zeros(nt, 0) } else { b };
                Some(block_diag_repeat(&b, t))
            })
            .collect();
        Self {
            radar: (0..kk).map(|k| RadarChannel::new(s, k)).collect(),
            users: (0..kk)
                .map(|k| (0..s.num_users()).map(|m| UserChannel::new(s, k, m)).collect())
                .collect(),
            protected,
            protected_steering,
            code_basis,
            power_budget: s.power_budget,
            num_tx: nt,
            num_slots: t,
            constellation_size: s.constellation_size,
        }
    }

    pub fn num_subcarriers(&self) -> usize {
        self.radar.len()
    }

    pub fn num_users(&self) -> usize {
        self.users.first().map_or(0, |u| u.len())
    }

    pub fn code_len(&self) -> usize {
        self.num_tx * self.num_slots
    }

    /// Projects a code onto the admissible subspace of subcarrier `k`.
    pub fn project_code(&self, k: usize, u: &CVector) -> CVector {
        match &self.code_basis[k] {
            None => u.clone(),
            Some(b) => b * b.ad_mul(u),
        }
    }
}

/// A user's receive filter together with the mode it serves and the SNR
/// threshold that mode must meet.
#[derive(Debug, Clone, PartialEq)]
pub struct UserLink {
    pub filter: CVector,
    pub mode: LinkMode,
    pub rho: f64,
}

/// All block variables of the design.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignPoint {
    pub codes: Vec<CVector>,
    pub radar_filters: Vec<CVector>,
    /// Indexed `[k][m]`.
    pub user_links: Vec<Vec<UserLink>>,
}

impl DesignPoint {
    /// `Σ_k ‖u_k‖² / T`.
    pub fn transmit_power(&self, num_slots: usize) -> f64 {
        self.codes.iter().map(|u| u.norm_squared()).sum::<f64>() / num_slots as f64
    }
}
