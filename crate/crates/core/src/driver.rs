//! Cyclic block-coordinate design loop and the starting-point search.

use log::{debug, info, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::codeupdate::{
    c3r_row, code_constraints, update_codes, C3Restriction, CodeUpdateError, CodeUpdateOptions, Layout,
};
use crate::commlink::{mode_snr, rho_threshold, upsilon_for_mode, CommError, LinkMode};
use crate::cvxsolver::{phase_one, solve, Constraint, ConvexProgram, LinearObjective, SolveError, SolverOptions};
use crate::linalg::{block_diag_repeat, numerical_rank, projector_complement, CVector, RANK_TOL};
use num_complex::Complex64 as Complex;
use crate::merit::{MeritFunction, RVector, SmoothOracle};
use crate::model::{ChannelSet, DesignPoint, UserChannel, UserLink};
use crate::radarlink::{optimal_radar_filter, sinr, RadarError};
use crate::scenario::Scenario;
use crate::userfilter::{available_modes, filter_candidates, projector, select_filter, UserFilterError};

/// Relative tolerance of the per-iterate feasibility checks.
pub const ITERATE_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct DesignOptions {
    /// Relative-improvement stopping threshold `η_acc`.
    pub eta_acc: f64,
    /// Outer-iteration cap `I_max`.
    pub i_max: usize,
    pub mm_inner_steps: usize,
    pub rng_seed: u64,
    pub init_restarts: usize,
    /// Alternations of the starting-point search per restart.
    pub start_rounds: usize,
    pub filter_order: FilterOrder,
    pub solver: SolverOptions,
}

impl Default for DesignOptions {
    fn default() -> Self {
        Self {
            eta_acc: 1e-4,
            i_max: 2000,
            mm_inner_steps: 1,
            rng_seed: 0,
            init_restarts: 5,
            start_rounds: 50,
            filter_order: FilterOrder::RadarFirst,
            solver: SolverOptions::default(),
        }
    }
}

/// Order of the two filter blocks after each code update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FilterOrder {
    RadarFirst,
    UsersFirst,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    /// Relative improvement fell below `η_acc`.
    Converged,
    IterationCap,
}

/// Constraint margins of one iterate, each normalized so that `≥ 0` means
/// satisfied.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Slacks {
    /// `1 − P/𝒫`.
    pub power: f64,
    /// `min (cap − uᴴAu) / (N_t 𝒫 T)` over protected directions (`+∞` if none).
    pub beampattern: f64,
    /// `min SNR/ρ − 1` over links (`+∞` if no users).
    pub snr: f64,
}

impl Slacks {
    pub fn feasible(&self, tol: f64) -> bool {
        self.power >= -tol && self.beampattern >= -tol && self.snr >= -tol
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub objective: f64,
    pub sinr: Vec<f64>,
    /// `[k][m]`.
    pub snr: Vec<Vec<f64>>,
    pub slacks: Slacks,
    pub code_update_accepted: bool,
    pub newton_steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StartReport {
    /// Largest common margin `min SNR/ρ` reached over all restarts.
    pub best_t: f64,
    pub restarts: usize,
    pub rounds: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StartOutcome {
    Feasible { point: DesignPoint, t: f64, rounds: usize },
    Infeasible(StartReport),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignResult {
    pub point: DesignPoint,
    pub trace: Vec<TraceRow>,
    pub termination: Termination,
    /// Outer iterations performed.
    pub iterations: usize,
}

impl DesignResult {
    pub fn objective(&self) -> f64 {
        self.trace.last().map_or(f64::NAN, |r| r.objective)
    }

    pub fn final_sinr(&self) -> &[f64] {
        self.trace.last().map_or(&[], |r| &r.sinr)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DesignError {
    #[error("no feasible starting point: best common SNR-to-threshold ratio t = {:e} (needs t >= 1) after {} restarts, {} rounds", .0.best_t, .0.restarts, .0.rounds)]
    InfeasibleStart(StartReport),
    #[error("supplied starting point violates the constraints: {0:?}")]
    InfeasiblePoint(Slacks),
    #[error(transparent)]
    CodeUpdate(#[from] CodeUpdateError),
    #[error(transparent)]
    UserFilter(#[from] UserFilterError),
    #[error(transparent)]
    Radar(#[from] RadarError),
    #[error(transparent)]
    Comm(#[from] CommError),
    #[error("starting-point restriction: {0}")]
    Solver(#[from] SolveError),
}

pub fn radar_sinrs(ch: &ChannelSet, point: &DesignPoint) -> Result<Vec<f64>, RadarError> {
    (0..ch.num_subcarriers())
        .map(|k| sinr(&point.codes[k], &point.radar_filters[k], &ch.radar[k]))
        .collect()
}

pub fn user_snrs(ch: &ChannelSet, point: &DesignPoint) -> Result<Vec<Vec<f64>>, CommError> {
    point
        .user_links
        .iter()
        .zip(&ch.users)
        .zip(&point.codes)
        .map(|((links, ucs), u)| {
            links
                .iter()
                .zip(ucs)
                .map(|(l, uc)| mode_snr(u, &l.filter, uc, l.mode))
                .collect()
        })
        .collect()
}

pub fn slacks(ch: &ChannelSet, point: &DesignPoint) -> Result<Slacks, CommError> {
    let p = ch.power_budget;
    let scale = ch.num_tx as f64 * p * ch.num_slots as f64;
    let mut beampattern = f64::INFINITY;
    for (k, u) in point.codes.iter().enumerate() {
        for (a, cap) in &ch.protected[k] {
            beampattern = beampattern.min((cap - u.dotc(&(a * u)).re) / scale);
        }
    }
    let mut snr = f64::INFINITY;
    for (k, row) in user_snrs(ch, point)?.iter().enumerate() {
        for (m, v) in row.iter().enumerate() {
            snr = snr.min(v / point.user_links[k][m].rho - 1.0);
        }
    }
    Ok(Slacks {
        power: 1.0 - point.transmit_power(ch.num_slots) / p,
        beampattern,
        snr,
    })
}

/// Random codes at full power with no energy towards any protected
/// direction (when the directions leave room), so they start strictly
/// inside every beampattern cap.
fn random_codes(ch: &ChannelSet, rng: &mut ChaCha8Rng) -> Vec<CVector> {
    let n = ch.code_len();
    let mut codes: Vec<CVector> = (0..ch.num_subcarriers())
        .map(|k| {
            let u = CVector::from_fn(n, |_, _| Complex::new(rng.sample(StandardNormal), rng.sample(StandardNormal)));
            let u = ch.project_code(k, &u);
            let conj: Vec<CVector> = ch.protected_steering[k].iter().map(|s| s.conjugate()).collect();
            if conj.is_empty() || numerical_rank(&conj, RANK_TOL) >= ch.num_tx {
                return u;
            }
            let p = projector_complement(ch.num_tx, &conj, RANK_TOL).expect("steering dims match");
            block_diag_repeat(p.as_matrix(), ch.num_slots) * u
        })
        .collect();
    let power: f64 = codes.iter().map(|u| u.norm_squared()).sum::<f64>() / ch.num_slots as f64;
    if power > 0.0 {
        let s = (ch.power_budget / power).sqrt();
        codes.iter_mut().for_each(|u| u.scale_mut(s));
    }
    codes
}

/// `(I_T ⊗ Π)(1_T ⊗ g)` with `g` the steering vector of the direct path
/// (direct mode) or the strongest indirect path (indirect mode); `None`
/// when the projection annihilates it.
fn initial_filter(uc: &UserChannel, mode: LinkMode) -> Option<CVector> {
    let path = match mode {
        LinkMode::Direct => uc.direct()?,
        LinkMode::Indirect => uc.indirect().max_by(|a, b| a.power.total_cmp(&b.power))?,
    };
    let g = projector(uc, mode).as_matrix() * &path.rx_steer;
    let w = CVector::from_fn(uc.rx_len(), |i, _| g[i % uc.num_rx]);
    let n = w.norm();
    (n > 1e-9 * (uc.num_slots as f64).sqrt()).then(|| w.unscale(n))
}

fn initial_links(ch: &ChannelSet, codes: &[CVector], rng: &mut ChaCha8Rng) -> Result<Vec<Vec<UserLink>>, DesignError> {
    let d = ch.constellation_size;
    let mut links = Vec::with_capacity(ch.num_subcarriers());
    for (k, ucs) in ch.users.iter().enumerate() {
        let mut row = Vec::with_capacity(ucs.len());
        for uc in ucs {
            let modes = available_modes(uc);
            if modes.is_empty() {
                return Err(UserFilterError::NoCandidate.into());
            }
            let mode = modes[rng.random_range(0..modes.len())];
            let filter = match initial_filter(uc, mode) {
                Some(w) => w,
                None => filter_candidates(uc, &codes[k], d)?
                    .into_iter()
                    .find(|c| c.mode == mode)
                    .expect("mode is available")
                    .w,
            };
            row.push(UserLink {
                filter,
                mode,
                rho: rho_threshold(uc.error_target, mode, d)?.rho,
            });
        }
        links.push(row);
    }
    Ok(links)
}

fn radar_filters(ch: &ChannelSet, codes: &[CVector]) -> Result<Vec<CVector>, RadarError> {
    (0..ch.num_subcarriers())
        .into_par_iter()
        .map(|k| optimal_radar_filter(&codes[k], &ch.radar[k]))
        .collect()
}

fn min_margin(ch: &ChannelSet, codes: &[CVector], links: &[Vec<UserLink>]) -> Result<f64, CommError> {
    let mut t = f64::INFINITY;
    for (k, row) in links.iter().enumerate() {
        for (l, uc) in row.iter().zip(&ch.users[k]) {
            t = t.min(mode_snr(&codes[k], &l.filter, uc, l.mode)? / l.rho);
        }
    }
    Ok(t)
}

fn codes_admissible(ch: &ChannelSet, codes: &[CVector]) -> bool {
    let scale = ch.num_tx as f64 * ch.power_budget * ch.num_slots as f64;
    let power: f64 = codes.iter().map(|u| u.norm_squared()).sum::<f64>() / ch.num_slots as f64;
    power <= ch.power_budget * (1.0 + ITERATE_TOL)
        && codes.iter().enumerate().all(|(k, u)| {
            ch.protected[k]
                .iter()
                .all(|(a, cap)| u.dotc(&(a * u)).re <= cap + ITERATE_TOL * scale)
        })
}

/// Maximizes the common margin `t` over the codes with the user filters
/// fixed, using the tangent-plane restriction of every SNR constraint.
fn margin_step(
    ch: &ChannelSet,
    codes: &[CVector],
    links: &[Vec<UserLink>],
    solver: &SolverOptions,
) -> Result<Option<Vec<CVector>>, DesignError> {
    let layout = Layout::new(ch, 1);
    let ti = layout.y0;
    let mut cons = code_constraints(ch, &layout);
    let sigma = (ch.power_budget * ch.num_slots as f64).sqrt();
    let mut t0 = f64::INFINITY;
    // Under C1 every row is at least −(ũᴴΥũ + 2σ‖Υũ‖)/ρ, so a floor below
    // that never binds; it keeps the barrier bounded along t → −∞.
    let mut t_floor = f64::INFINITY;
    for (k, row) in links.iter().enumerate() {
        for (m, (l, uc)) in row.iter().zip(&ch.users[k]).enumerate() {
            let y = upsilon_for_mode(uc, &l.filter, l.mode);
            let r = C3Restriction {
                grad: y.as_matrix() * &codes[k],
                offset: y.quad_form(&codes[k]),
                rho: l.rho,
            };
            t0 = t0.min(r.offset / r.rho);
            t_floor = t_floor.min(-(r.offset + 2.0 * sigma * r.grad.norm()) / r.rho);
            cons.push(c3r_row(ch, &layout, k, m, &r, Some(ti)));
        }
    }
    let t_floor = t_floor - 1.0;
    cons.push(Constraint::linear("t floor", vec![ti], RVector::from_element(1, -1.0), t_floor));
    let mut start = layout.lift_codes(ch, codes);
    start.rows_mut(0, layout.y0).scale_mut(1.0 - 1e-3);
    start[ti] = 0.5 * (t0 + t_floor);
    let start = match phase_one(layout.n, &cons, &[], &start, 1e-5) {
        Ok(z) => z,
        Err(SolveError::NoInterior { best }) => {
            debug!("start search: restriction has no interior ({best:e})");
            return Ok(None);
        }
        Err(e) => return Err(e.into()),
    };
    let mut c = RVector::zeros(layout.n);
    c[ti] = 1.0;
    let obj = LinearObjective(c);
    let prog = ConvexProgram {
        n: layout.n,
        objective: &obj,
        constraints: cons,
        pins: Vec::new(),
        start,
    };
    let rep = solve(&prog, solver)?;
    debug!("start search: restricted margin t = {:.6}", rep.solution[ti]);
    Ok(Some(layout.unlift_codes(ch, &rep.solution)))
}

/// Phase-one on C1/C2 alone, for scenarios without users.
fn admissible_codes(ch: &ChannelSet, codes: Vec<CVector>) -> Result<Vec<CVector>, DesignError> {
    if codes_admissible(ch, &codes) {
        return Ok(codes);
    }
    let layout = Layout::new(ch, 0);
    let cons = code_constraints(ch, &layout);
    let z = phase_one(layout.n, &cons, &[], &layout.lift_codes(ch, &codes), 1e-5)?;
    Ok(layout.unlift_codes(ch, &z))
}

/// Alternates between the codes (maximizing the common SNR margin `t`) and
/// the user filters until every SNR constraint holds (`t ≥ 1`), restarting
/// from fresh random codes when the margin stops improving.
pub fn find_start(ch: &ChannelSet, opts: &DesignOptions) -> Result<StartOutcome, DesignError> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.rng_seed);
    let d = ch.constellation_size;
    if ch.num_users() == 0 {
        let codes = admissible_codes(ch, random_codes(ch, &mut rng))?;
        let radar_filters = radar_filters(ch, &codes)?;
        let point = DesignPoint {
            user_links: vec![Vec::new(); codes.len()],
            codes,
            radar_filters,
        };
        return Ok(StartOutcome::Feasible { point, t: f64::INFINITY, rounds: 0 });
    }
    let mut best_t = f64::NEG_INFINITY;
    let mut total_rounds = 0;
    for restart in 0..opts.init_restarts.max(1) {
        let mut codes = random_codes(ch, &mut rng);
        let mut links = initial_links(ch, &codes, &mut rng)?;
        let mut prev_t = f64::NEG_INFINITY;
        for round in 0..opts.start_rounds.max(1) {
            total_rounds += 1;
            let t = min_margin(ch, &codes, &links)?;
            if t >= 1.0 && codes_admissible(ch, &codes) {
                info!("feasible start after restart {restart}, round {round}: t = {t:.4}");
                let radar_filters = radar_filters(ch, &codes)?;
                let point = DesignPoint { codes, radar_filters, user_links: links };
                return Ok(StartOutcome::Feasible { point, t, rounds: total_rounds });
            }
            match margin_step(ch, &codes, &links, &opts.solver)? {
                Some(c) => codes = c,
                None => break,
            }
            // Filter step: the best SNR/ρ candidate per link.
            links = links
                .par_iter()
                .enumerate()
                .map(|(k, row)| {
                    row.iter()
                        .zip(&ch.users[k])
                        .map(|(_, uc)| {
                            let best = filter_candidates(uc, &codes[k], d)?
                                .into_iter()
                                .max_by(|a, b| (a.achieved_snr / a.rho).total_cmp(&(b.achieved_snr / b.rho)))
                                .expect("non-empty");
                            Ok(UserLink { filter: best.w, mode: best.mode, rho: best.rho })
                        })
                        .collect::<Result<Vec<_>, UserFilterError>>()
                })
                .collect::<Result<_, _>>()?;
            let t = min_margin(ch, &codes, &links)?;
            best_t = best_t.max(t);
            debug!("start search: restart {restart} round {round}: t = {t:.6}");
            if t >= 1.0 && codes_admissible(ch, &codes) {
                continue; // accepted at the top of the next round
            }
            if t <= prev_t + 1e-6 * prev_t.abs() {
                break;
            }
            prev_t = t;
        }
    }
    debug!("no feasible start: best t = {best_t:.6}");
    Ok(StartOutcome::Infeasible(StartReport {
        best_t,
        restarts: opts.init_restarts.max(1),
        rounds: total_rounds,
    }))
}

fn trace_row(
    ch: &ChannelSet,
    point: &DesignPoint,
    merit: &MeritFunction,
    iteration: usize,
    accepted: bool,
    newton_steps: usize,
) -> Result<TraceRow, DesignError> {
    let sinr = radar_sinrs(ch, point)?;
    Ok(TraceRow {
        iteration,
        objective: merit.value(&RVector::from_vec(sinr.clone())),
        sinr,
        snr: user_snrs(ch, point)?,
        slacks: slacks(ch, point)?,
        code_update_accepted: accepted,
        newton_steps,
    })
}

fn update_user_links(ch: &ChannelSet, point: &DesignPoint) -> Result<Vec<Vec<UserLink>>, DesignError> {
    let d = ch.constellation_size;
    point
        .user_links
        .par_iter()
        .enumerate()
        .map(|(k, row)| {
            row.iter()
                .zip(&ch.users[k])
                .map(|(prev, uc)| {
                    let best = select_filter(&filter_candidates(uc, &point.codes[k], d)?);
                    Ok(if best.feasible {
                        UserLink { filter: best.w, mode: best.mode, rho: best.rho }
                    } else {
                        prev.clone()
                    })
                })
                .collect::<Result<Vec<_>, DesignError>>()
        })
        .collect()
}

/// Runs the block-coordinate loop from a feasible point.
pub fn design_from(
    ch: &ChannelSet,
    start: DesignPoint,
    merit: &MeritFunction,
    opts: &DesignOptions,
) -> Result<DesignResult, DesignError> {
    let mut point = start;
    point.radar_filters = radar_filters(ch, &point.codes)?;
    let s0 = slacks(ch, &point)?;
    if !s0.feasible(ITERATE_TOL) {
        return Err(DesignError::InfeasiblePoint(s0));
    }
    let cu_opts = CodeUpdateOptions {
        mm_inner_steps: opts.mm_inner_steps,
        solver: opts.solver.clone(),
    };
    let mut trace = vec![trace_row(ch, &point, merit, 0, false, 0)?];
    let mut termination = Termination::IterationCap;
    let mut iterations = 0;
    for i in 1..=opts.i_max.max(1) {
        iterations = i;
        let out = update_codes(ch, &point, merit, &cu_opts)?;
        point.codes = out.codes;
        match opts.filter_order {
            FilterOrder::RadarFirst => {
                point.radar_filters = radar_filters(ch, &point.codes)?;
                point.user_links = update_user_links(ch, &point)?;
            }
            FilterOrder::UsersFirst => {
                point.user_links = update_user_links(ch, &point)?;
                point.radar_filters = radar_filters(ch, &point.codes)?;
            }
        }
        let row = trace_row(ch, &point, merit, i, out.accepted, out.newton_steps)?;
        let prev = trace.last().expect("non-empty").objective;
        let f = row.objective;
        if !row.slacks.feasible(ITERATE_TOL) {
            warn!("iterate {i} outside tolerance: {:?}", row.slacks);
        }
        debug!("iteration {i}: f = {f:.9e}, accepted {}", out.accepted);
        trace.push(row);
        if f - prev < opts.eta_acc * (f.abs() + 1e-300) {
            termination = Termination::Converged;
            break;
        }
    }
    info!("design finished after {iterations} iterations ({termination:?})");
    Ok(DesignResult { point, trace, termination, iterations })
}

/// Starting-point search followed by the design loop.
pub fn design(scenario: &Scenario, merit: &MeritFunction, opts: &DesignOptions) -> Result<DesignResult, DesignError> {
    let ch = ChannelSet::new(scenario);
    design_channels(&ch, merit, opts)
}

pub fn design_channels(ch: &ChannelSet, merit: &MeritFunction, opts: &DesignOptions) -> Result<DesignResult, DesignError> {
    match find_start(ch, opts)? {
        StartOutcome::Feasible { point, .. } => design_from(ch, point, merit, opts),
        StartOutcome::Infeasible(r) => Err(DesignError::InfeasibleStart(r)),
    }
}
