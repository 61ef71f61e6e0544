//! Seeded random problem instances in the style of the reference setup:
//! 11-element transmitter, four subcarriers around 2 GHz, two direct and two
//! indirect users, four equal-strength clutter scatterers and six protected
//! directions per subcarrier.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    db_to_linear, ArrayGeometry, ClutterScatterer, KappaMode, PathKind, ProtectedDirection,
    Scenario, Subcarrier, User, UserPath,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InstanceGenerator {
    pub num_tx: usize,
    pub num_radar_rx: usize,
    pub num_user_antennas: usize,
    pub num_subcarriers: usize,
    pub num_slots: usize,
    pub constellation_size: usize,
    pub base_frequency_hz: f64,
    pub subcarrier_spacing_hz: f64,
    pub power_budget_db: f64,
    pub user_noise_db: f64,
    pub error_target: f64,
    pub num_direct_users: usize,
    pub num_indirect_users: usize,
    pub paths_per_indirect_user: usize,
    pub direct_power_db: f64,
    /// Sum power over the indirect paths of one user, split evenly.
    pub indirect_total_power_db: f64,
    pub target_power_db: f64,
    pub radar_noise_db: f64,
    pub num_clutter: usize,
    pub scr_db: f64,
    pub protected_per_subcarrier: usize,
    pub protection_level: f64,
    /// All random angles are drawn uniformly from ±this value.
    pub angle_range_deg: f64,
}

impl Default for InstanceGenerator {
    fn default() -> Self {
        Self {
            num_tx: 11,
            num_radar_rx: 4,
            num_user_antennas: 4,
            num_subcarriers: 4,
            num_slots: 2,
            constellation_size: 2,
            base_frequency_hz: 2e9,
            subcarrier_spacing_hz: 100e3,
            power_budget_db: 20.0,
            user_noise_db: -150.0,
            error_target: 1e-5,
            num_direct_users: 2,
            num_indirect_users: 2,
            paths_per_indirect_user: 2,
            direct_power_db: -130.0,
            indirect_total_power_db: -130.0,
            target_power_db: -160.0,
            radar_noise_db: -150.0,
            num_clutter: 4,
            scr_db: -20.0,
            protected_per_subcarrier: 6,
            protection_level: 1e-6,
            angle_range_deg: 60.0,
        }
    }
}

impl InstanceGenerator {
    /// Draws one instance. The draw order is fixed, so a seed identifies an
    /// instance for a given generator.
    pub fn instantiate(&self, seed: u64) -> Scenario {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let range = self.angle_range_deg.to_radians();
        let angle = |rng: &mut ChaCha8Rng| rng.random_range(-range..=range);

        let k = self.num_subcarriers;
        let subcarriers: Vec<Subcarrier> = (0..k)
            .map(|i| Subcarrier {
                center_frequency: self.base_frequency_hz + i as f64 * self.subcarrier_spacing_hz,
            })
            .collect();
        let max_freq = subcarriers
            .iter()
            .map(|s| s.center_frequency)
            .fold(0.0, f64::max);
        let geom = |n| ArrayGeometry::half_wavelength(n, max_freq);

        let user_array = geom(self.num_user_antennas);
        let noise = vec![db_to_linear(self.user_noise_db); k];
        let eps = vec![self.error_target; k];
        let mut users = Vec::new();
        for _ in 0..self.num_direct_users {
            let dep = angle(&mut rng);
            let arr = angle(&mut rng);
            users.push(User {
                array: user_array,
                paths: vec![UserPath {
                    kind: PathKind::Direct,
                    angle_departure: dep,
                    angle_arrival: arr,
                    power: db_to_linear(self.direct_power_db),
                }],
                noise_power: noise.clone(),
                error_target: eps.clone(),
                kappa_mode: KappaMode::Auto,
            });
        }
        let q = self.paths_per_indirect_user.max(1);
        let per_path = db_to_linear(self.indirect_total_power_db) / q as f64;
        for _ in 0..self.num_indirect_users {
            let paths = (0..q)
                .map(|_| {
                    let dep = angle(&mut rng);
                    let arr = angle(&mut rng);
                    UserPath {
                        kind: PathKind::Indirect,
                        angle_departure: dep,
                        angle_arrival: arr,
                        power: per_path,
                    }
                })
                .collect();
            users.push(User {
                array: user_array,
                paths,
                noise_power: noise.clone(),
                error_target: eps.clone(),
                kappa_mode: KappaMode::Auto,
            });
        }

        let target_direction: Vec<f64> = (0..k).map(|_| angle(&mut rng)).collect();
        let clutter = (0..self.num_clutter)
            .map(|_| ClutterScatterer {
                angle: angle(&mut rng),
                power: vec![0.0; k],
            })
            .collect();
        let mut protected = Vec::new();
        for sc in 0..k {
            for _ in 0..self.protected_per_subcarrier {
                protected.push(ProtectedDirection {
                    subcarrier: sc,
                    angle: angle(&mut rng),
                    level: self.protection_level,
                });
            }
        }

        let mut s = Scenario {
            tx_array: geom(self.num_tx),
            radar_rx_array: geom(self.num_radar_rx),
            subcarriers,
            num_slots: self.num_slots,
            constellation_size: self.constellation_size,
            power_budget: db_to_linear(self.power_budget_db),
            users,
            clutter,
            target_direction,
            target_power: vec![db_to_linear(self.target_power_db); k],
            radar_noise: vec![db_to_linear(self.radar_noise_db); k],
            protected,
        };
        s.calibrate_clutter(db_to_linear(self.scr_db));
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_matches_reference_sizes() {
        let s = InstanceGenerator::default().instantiate(0);
        assert_eq!(s.tx_array.num_elements, 11);
        assert_eq!(s.radar_rx_array.num_elements, 4);
        assert_eq!(s.num_subcarriers(), 4);
        assert_eq!(s.num_slots, 2);
        assert_eq!(s.num_users(), 4);
        assert_eq!(s.users[2].num_indirect(), 2);
        assert_eq!(s.clutter.len(), 4);
        assert_eq!(s.protected.len(), 24);
        assert!((s.power_budget - 100.0).abs() < 1e-12);
        let total_clutter: f64 = s.clutter.iter().map(|c| c.power[0]).sum();
        assert!((s.target_power[0] / total_clutter - 0.01).abs() < 1e-15);
        let indirect: f64 = s.users[3].paths.iter().map(|p| p.power).sum();
        assert!((indirect - 1e-13).abs() < 1e-25);
        let range = 60f64.to_radians();
        assert!(s.target_direction.iter().all(|a| a.abs() <= range));
    }

    #[test]
    fn seeds_are_reproducible_and_distinct() {
        let g = InstanceGenerator::default();
        assert_eq!(g.instantiate(5), g.instantiate(5));
        assert_ne!(g.instantiate(5), g.instantiate(6));
    }
}
