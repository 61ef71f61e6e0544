//! Browser bindings for the demo page in `www/`.
//!
//! Every export takes plain numbers or a JSON string and returns a JSON
//! document, so the same functions are testable natively.

use dfrc_core::commlink::{error_prob_d2, rho_threshold, Kappa, LinkMode};
use dfrc_core::driver::{design, find_start, DesignError, DesignOptions, StartOutcome};
use dfrc_core::merit::{MeritSpec, RVector, SmoothOracle};
use dfrc_core::model::ChannelSet;
use dfrc_core::radarlink::{beampattern_grid_deg, transmit_beampattern};
use dfrc_core::scenario::generator::InstanceGenerator;
use dfrc_core::scenario::linear_to_db;
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Serialize)]
struct MeritCurve {
    label: String,
    x: Vec<f64>,
    merit: Vec<f64>,
    minorizer: Vec<f64>,
}

/// A two-subcarrier merit and its minorizer at `(x0, other)`, along the
/// first coordinate on `[0, hi]` with the second held at `other`.
#[wasm_bindgen]
pub fn merit_curve(spec_json: &str, x0: f64, other: f64, hi: f64, n: usize) -> Result<String, String> {
    let spec: MeritSpec = serde_json::from_str(spec_json).map_err(|e| e.to_string())?;
    let f = spec.build(2).map_err(|e| e.to_string())?;
    if !(x0 >= 0.0 && other >= 0.0 && hi > 0.0) || n < 2 {
        return Err("need x0, other >= 0, hi > 0 and at least two points".into());
    }
    let z = f.minorizer_at(&RVector::from_vec(vec![x0, other]));
    let x: Vec<f64> = (0..n).map(|i| hi * i as f64 / (n - 1) as f64).collect();
    let at = |v: f64| RVector::from_vec(vec![v, other]);
    let out = MeritCurve {
        label: f.label(),
        merit: x.iter().map(|&v| f.value(&at(v))).collect(),
        minorizer: x.iter().map(|&v| z.value(&at(v))).collect(),
        x,
    };
    Ok(serde_json::to_string(&out).expect("serializable"))
}

#[derive(Serialize)]
struct ErrorCurves {
    snr_db: Vec<f64>,
    line_of_sight: Vec<f64>,
    rayleigh: Vec<f64>,
    epsilon: f64,
    rho_direct_db: f64,
    rho_indirect_db: f64,
}

/// Binary DPSK error probability against SNR for a pure line-of-sight and
/// a pure Rayleigh link, with the SNR each needs to meet `epsilon`.
#[wasm_bindgen]
pub fn error_curves(epsilon: f64, snr_db_lo: f64, snr_db_hi: f64, n: usize) -> Result<String, String> {
    let rho = |mode| rho_threshold(epsilon, mode, 2).map(|t| t.rho).map_err(|e| e.to_string());
    let (rd, ri) = (rho(LinkMode::Direct)?, rho(LinkMode::Indirect)?);
    if !(snr_db_hi > snr_db_lo) || n < 2 {
        return Err("need an increasing SNR range and at least two points".into());
    }
    let snr_db: Vec<f64> = (0..n)
        .map(|i| snr_db_lo + (snr_db_hi - snr_db_lo) * i as f64 / (n - 1) as f64)
        .collect();
    let lin = |db: f64| 10f64.powf(db / 10.0);
    let out = ErrorCurves {
        line_of_sight: snr_db.iter().map(|&d| error_prob_d2(Kappa::Infinite, lin(d))).collect(),
        rayleigh: snr_db.iter().map(|&d| error_prob_d2(Kappa::Finite(0.0), lin(d))).collect(),
        snr_db,
        epsilon,
        rho_direct_db: linear_to_db(rd),
        rho_indirect_db: linear_to_db(ri),
    };
    Ok(serde_json::to_string(&out).expect("serializable"))
}

#[derive(Serialize)]
struct Pattern {
    subcarrier: usize,
    power_db: Vec<f64>,
    protected_deg: Vec<f64>,
}

#[derive(Serialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
enum DemoResult {
    Ok {
        iterations: usize,
        objective: f64,
        trace: Vec<f64>,
        sinr_db: Vec<f64>,
        target_deg: f64,
        user_paths_deg: Vec<f64>,
        angles_deg: Vec<f64>,
        patterns: Vec<Pattern>,
    },
    Infeasible {
        best_t: f64,
    },
}

/// The demo instance: 8 transmit antennas, two subcarriers, one
/// line-of-sight and one scattered user, two protected directions each.
pub fn demo_generator(epsilon: f64, delta: f64) -> InstanceGenerator {
    InstanceGenerator {
        num_tx: 8,
        num_radar_rx: 3,
        num_user_antennas: 3,
        num_subcarriers: 2,
        num_direct_users: 1,
        num_indirect_users: 1,
        num_clutter: 2,
        protected_per_subcarrier: 2,
        protection_level: delta,
        error_target: epsilon,
        ..InstanceGenerator::default()
    }
}

/// Designs the seeded demo instance and returns SINRs, the objective trace
/// and transmit beampatterns (dB relative to the overall peak).
#[wasm_bindgen]
pub fn small_design(seed: u64, epsilon: f64, delta: f64, merit_json: &str) -> Result<String, String> {
    if !(epsilon > 0.0 && epsilon < 0.5) || !(0.0..=1.0).contains(&delta) {
        return Err("need 0 < ε < 1/2 and 0 <= δ <= 1".into());
    }
    let spec: MeritSpec = serde_json::from_str(merit_json).map_err(|e| e.to_string())?;
    let s = demo_generator(epsilon, delta).instantiate(seed);
    let merit = spec.build(s.num_subcarriers()).map_err(|e| e.to_string())?;
    let opts = DesignOptions {
        i_max: 200,
        rng_seed: seed,
        init_restarts: 2,
        start_rounds: 20,
        ..DesignOptions::default()
    };
    let out = match design(&s, &merit, &opts) {
        Ok(r) => {
            let angles_deg = beampattern_grid_deg();
            let raw: Vec<Vec<f64>> = r
                .point
                .codes
                .iter()
                .enumerate()
                .map(|(k, u)| {
                    angles_deg
                        .iter()
                        .map(|a| transmit_beampattern(u, &s.tx_array, s.frequency(k), a.to_radians()))
                        .collect()
                })
                .collect();
            let peak = raw.iter().flatten().copied().fold(0.0, f64::max);
            DemoResult::Ok {
                iterations: r.iterations,
                objective: r.objective(),
                trace: r.trace.iter().map(|t| t.objective).collect(),
                sinr_db: r.final_sinr().iter().map(|&x| linear_to_db(x)).collect(),
                target_deg: s.target_direction[0].to_degrees(),
                user_paths_deg: s
                    .users
                    .iter()
                    .flat_map(|u| u.paths.iter().map(|p| p.angle_departure.to_degrees()))
                    .collect(),
                patterns: raw
                    .into_iter()
                    .enumerate()
                    .map(|(k, v)| Pattern {
                        subcarrier: k,
                        power_db: v.into_iter().map(|p| linear_to_db(p / peak).max(-100.0)).collect(),
                        protected_deg: s.protected_on(k).map(|p| p.angle.to_degrees()).collect(),
                    })
                    .collect(),
                angles_deg,
            }
        }
        Err(DesignError::InfeasibleStart(rep)) => DemoResult::Infeasible { best_t: rep.best_t },
        Err(e) => return Err(e.to_string()),
    };
    Ok(serde_json::to_string(&out).expect("serializable"))
}

/// Only the starting-point search: whether the error target is reachable.
#[wasm_bindgen]
pub fn start_margin(seed: u64, epsilon: f64, delta: f64) -> Result<f64, String> {
    let s = demo_generator(epsilon, delta).instantiate(seed);
    let ch = ChannelSet::new(&s);
    let opts = DesignOptions {
        rng_seed: seed,
        init_restarts: 2,
        start_rounds: 20,
        ..DesignOptions::default()
    };
    match find_start(&ch, &opts).map_err(|e| e.to_string())? {
        StartOutcome::Feasible { t, .. } => Ok(t),
        StartOutcome::Infeasible(rep) => Ok(rep.best_t),
    }
}
