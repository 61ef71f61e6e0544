//! `dfrc solve`: one design with full exports.
//!
//! Files written to the output directory:
//!
//! * `trace.csv` — `iteration,f,sinr_<k>…,snr_k<k>_m<m>…,power_slack,
//!   beampattern_slack,snr_slack,code_update_accepted,newton_steps`
//! * `beampattern_tx_<k>.csv`, `beampattern_rx_<k>.csv`,
//!   `beampattern_user_<k>_<m>.csv` — `angle_deg,power_linear,power_db`
//!   on a 0.25° grid over ±90°, dB relative to the file's peak
//! * `protected.csv` — `subcarrier,angle_deg,level,power_linear,cap_linear,
//!   relative_to_peak_db` (peak of the same subcarrier's tx grid)
//! * `result.json` — merit, termination, SINRs, per-link mode/SNR/error
//!   probability, codes and filters as `[re, im]` pairs

use std::path::Path;
use std::time::Instant;

use dfrc_core::commlink::{mode_error_prob, LinkMode};
use dfrc_core::driver::{design_channels, DesignOptions, DesignResult, Termination};
use dfrc_core::linalg::CVector;
use dfrc_core::merit::MeritSpec;
use dfrc_core::model::ChannelSet;
use dfrc_core::radarlink::transmit_beampattern;
use dfrc_core::scenario::config::{read_document, ConfigError};
use dfrc_core::scenario::{db_to_linear, linear_to_db, validate, Scenario};
use log::info;
use serde::Serialize;

use crate::merit_arg::parse_merit;
use crate::output::{create_dir, fmt_f, rx_pattern, tx_pattern, write_atomic, write_beampattern, write_csv};
use crate::{CliError, SolveArgs};

/// Scenario-level overrides shared by `solve` and `sweep`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Overrides {
    pub epsilon: Option<f64>,
    pub delta: Option<f64>,
    pub scr_db: Option<f64>,
}

impl Overrides {
    pub fn apply(&self, s: &mut Scenario) {
        if let Some(e) = self.epsilon {
            s.set_error_target(e);
        }
        if let Some(d) = self.delta {
            s.set_protection_level(d);
        }
        if let Some(scr) = self.scr_db {
            s.calibrate_clutter(db_to_linear(scr));
        }
    }
}

pub fn checked(s: Scenario) -> Result<Scenario, ConfigError> {
    let v = validate(&s);
    if v.is_empty() {
        Ok(s)
    } else {
        Err(ConfigError::Invalid(v))
    }
}

pub fn cmd_solve(a: &SolveArgs) -> Result<(), CliError> {
    let doc = read_document(&a.config)?;
    let mut s = doc.build(a.seed)?;
    Overrides {
        epsilon: a.epsilon,
        delta: a.delta,
        scr_db: a.scr_db,
    }
    .apply(&mut s);
    let s = checked(s)?;
    let spec = parse_merit(&a.merit)?;
    if !(a.eta > 0.0) || a.max_iter == 0 {
        return Err(CliError::Spec("--eta must be positive and --max-iter at least 1".into()));
    }
    let seed = a
        .seed
        .or_else(|| match &doc {
            dfrc_core::scenario::config::ConfigDocument::Generated(g) => Some(g.seed),
            _ => None,
        })
        .unwrap_or(0);
    let opts = DesignOptions {
        eta_acc: a.eta,
        i_max: a.max_iter,
        mm_inner_steps: a.mm_steps,
        rng_seed: seed,
        init_restarts: a.restarts,
        ..DesignOptions::default()
    };
    let started = Instant::now();
    let result = solve_scenario(&s, &spec, &opts)?;
    info!("design took {:.3} s", started.elapsed().as_secs_f64());
    create_dir(&a.out)?;
    write_outputs(&a.out, &s, &spec, &result)?;
    println!(
        "{:?} after {} iterations: f = {}",
        result.termination,
        result.iterations,
        fmt_f(result.objective())
    );
    Ok(())
}

pub fn solve_scenario(s: &Scenario, spec: &MeritSpec, opts: &DesignOptions) -> Result<DesignResult, CliError> {
    let merit = spec.build(s.num_subcarriers())?;
    let ch = ChannelSet::new(s);
    Ok(design_channels(&ch, &merit, opts)?)
}

pub fn trace_header(k: usize, m: usize) -> Vec<String> {
    let mut h = vec!["iteration".to_string(), "f".to_string()];
    h.extend((0..k).map(|i| format!("sinr_{i}")));
    for i in 0..k {
        h.extend((0..m).map(|j| format!("snr_k{i}_m{j}")));
    }
    h.extend(
        ["power_slack", "beampattern_slack", "snr_slack", "code_update_accepted", "newton_steps"]
            .iter()
            .map(|s| s.to_string()),
    );
    h
}

pub fn trace_rows(r: &DesignResult) -> Vec<Vec<String>> {
    r.trace
        .iter()
        .map(|row| {
            let mut v = vec![row.iteration.to_string(), fmt_f(row.objective)];
            v.extend(row.sinr.iter().map(|&x| fmt_f(x)));
            v.extend(row.snr.iter().flatten().map(|&x| fmt_f(x)));
            v.push(fmt_f(row.slacks.power));
            v.push(fmt_f(row.slacks.beampattern));
            v.push(fmt_f(row.slacks.snr));
            v.push(row.code_update_accepted.to_string());
            v.push(row.newton_steps.to_string());
            v
        })
        .collect()
}

#[derive(Serialize)]
struct LinkDoc {
    user: usize,
    mode: LinkMode,
    rho: f64,
    snr: f64,
    snr_db: f64,
    error_prob: f64,
    error_target: f64,
    filter: Vec<[f64; 2]>,
}

#[derive(Serialize)]
struct SubcarrierDoc {
    index: usize,
    frequency_hz: f64,
    sinr: f64,
    sinr_db: f64,
    code_power: f64,
    code: Vec<[f64; 2]>,
    radar_filter: Vec<[f64; 2]>,
    links: Vec<LinkDoc>,
}

#[derive(Serialize)]
struct ResultDoc<'a> {
    merit: &'a MeritSpec,
    merit_label: String,
    termination: Termination,
    iterations: usize,
    objective: f64,
    transmit_power: f64,
    power_budget: f64,
    subcarriers: Vec<SubcarrierDoc>,
}

fn pairs(v: &CVector) -> Vec<[f64; 2]> {
    v.iter().map(|z| [z.re, z.im]).collect()
}

pub fn write_outputs(dir: &Path, s: &Scenario, spec: &MeritSpec, r: &DesignResult) -> Result<(), CliError> {
    let k = s.num_subcarriers();
    let m = s.num_users();
    write_csv(&dir.join("trace.csv"), &trace_header(k, m), &trace_rows(r))?;

    let last = r.trace.last().expect("trace has the starting point");
    let p = &r.point;
    let mut protected_rows = Vec::new();
    for kk in 0..k {
        let f = s.frequency(kk);
        let tx = tx_pattern(&p.codes[kk], &s.tx_array, f);
        let peak = tx.iter().map(|v| v.1).fold(0.0, f64::max);
        write_beampattern(&dir.join(format!("beampattern_tx_{kk}.csv")), &tx)?;
        write_beampattern(
            &dir.join(format!("beampattern_rx_{kk}.csv")),
            &rx_pattern(&p.radar_filters[kk], &s.radar_rx_array, f),
        )?;
        for (mm, link) in p.user_links[kk].iter().enumerate() {
            write_beampattern(
                &dir.join(format!("beampattern_user_{kk}_{mm}.csv")),
                &rx_pattern(&link.filter, &s.users[mm].array, f),
            )?;
        }
        for pd in s.protected_on(kk) {
            let v = transmit_beampattern(&p.codes[kk], &s.tx_array, f, pd.angle);
            let cap = pd.level * s.tx_array.num_elements as f64 * s.power_budget;
            protected_rows.push(vec![
                kk.to_string(),
                fmt_f(pd.angle.to_degrees()),
                fmt_f(pd.level),
                fmt_f(v),
                fmt_f(cap),
                fmt_f(linear_to_db(v / peak)),
            ]);
        }
    }
    let header: Vec<String> = ["subcarrier", "angle_deg", "level", "power_linear", "cap_linear", "relative_to_peak_db"]
        .iter()
        .map(|h| h.to_string())
        .collect();
    write_csv(&dir.join("protected.csv"), &header, &protected_rows)?;

    let merit = spec.build(k)?;
    let d = s.constellation_size;
    let doc = ResultDoc {
        merit: spec,
        merit_label: merit.label(),
        termination: r.termination,
        iterations: r.iterations,
        objective: r.objective(),
        transmit_power: p.transmit_power(s.num_slots),
        power_budget: s.power_budget,
        subcarriers: (0..k)
            .map(|kk| SubcarrierDoc {
                index: kk,
                frequency_hz: s.frequency(kk),
                sinr: last.sinr[kk],
                sinr_db: linear_to_db(last.sinr[kk]),
                code_power: p.codes[kk].norm_squared() / s.num_slots as f64,
                code: pairs(&p.codes[kk]),
                radar_filter: pairs(&p.radar_filters[kk]),
                links: p.user_links[kk]
                    .iter()
                    .enumerate()
                    .map(|(mm, l)| {
                        let snr = last.snr[kk][mm];
                        LinkDoc {
                            user: mm,
                            mode: l.mode,
                            rho: l.rho,
                            snr,
                            snr_db: linear_to_db(snr),
                            error_prob: mode_error_prob(snr, l.mode, d),
                            error_target: s.users[mm].error_target[kk],
                            filter: pairs(&l.filter),
                        }
                    })
                    .collect(),
            })
            .collect(),
    };
    let json = serde_json::to_vec_pretty(&doc).expect("result document serializes");
    write_atomic(&dir.join("result.json"), &json)?;
    Ok(())
}
