//! Seeded scenario generation and the scenario file format.
//!
//! Devices are placed uniformly over a disk of radius `R`: the distance is
//! `R * sqrt(u)` with `u` drawn from ChaCha8 seeded through
//! `SeedableRng::seed_from_u64`, one draw per device in id order. A scenario
//! file is a configuration with a `[distances]` block, so parsing and
//! generating it reproduces the scenario exactly.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::config::{parse_config, write_config, ConfigError, PlacementSample, ScenarioConfig};
use crate::model::{CloudServer, ModelError, Scenario, UserDevice, UserId};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("user {0} differs from user {1} in more than its distance; the file format needs identical profiles")]
    Heterogeneous(UserId, UserId),
}

/// `n` area-uniform distances in `[0, radius)`.
pub fn place_users(n: usize, radius: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| radius * rng.gen::<f64>().sqrt()).collect()
}

/// Build the scenario described by `config`. Explicit distances win over
/// seeded placement.
pub fn generate(config: &ScenarioConfig) -> Result<Scenario, ScenarioError> {
    let placement: Vec<PlacementSample> = match &config.placement {
        Some(p) => p.clone(),
        None => place_users(config.n_users, config.cell_radius, config.seed)
            .into_iter()
            .enumerate()
            .map(|(i, distance)| PlacementSample {
                user_id: UserId(i as u32),
                distance,
            })
            .collect(),
    };
    let mut config = config.clone();
    config.n_users = placement.len();
    let users = placement
        .iter()
        .map(|p| config.device(p.user_id, p.distance))
        .collect();
    let scenario = Scenario {
        users,
        server: CloudServer {
            capacity: config.server_capacity,
        },
        delay_budget: config.delay_budget,
        total_uplink_bandwidth: config.total_bandwidth,
        bandwidth_fraction: config.bandwidth_fraction,
        total_downlink_bandwidth: config.downlink_bandwidth,
        cell_radius: config.cell_radius,
        seed: config.seed,
    };
    scenario.validate()?;
    Ok(scenario)
}

/// Configuration reproducing `scenario`, with its distances pinned.
pub fn to_config(scenario: &Scenario) -> Result<ScenarioConfig, ScenarioError> {
    scenario.validate()?;
    let first = &scenario.users[0];
    let same_profile = |u: &UserDevice| {
        let mut link = u.link;
        link.distance = first.link.distance;
        u.data == first.data && u.compute == first.compute && link == first.link
    };
    if let Some(u) = scenario.users.iter().find(|u| !same_profile(u)) {
        return Err(ScenarioError::Heterogeneous(u.id, first.id));
    }
    let link = &first.link;
    let config = ScenarioConfig {
        n_users: scenario.users.len(),
        cell_radius: scenario.cell_radius,
        reference_distance: link.reference_distance,
        pathloss_exponent: link.pathloss_exponent,
        total_bandwidth: scenario.total_uplink_bandwidth,
        bandwidth_fraction: scenario.bandwidth_fraction,
        downlink_bandwidth: scenario.total_downlink_bandwidth,
        spectral_eff_up: link.uplink_spectral_eff,
        spectral_eff_down: link.downlink_spectral_eff,
        server_capacity: scenario.server.capacity,
        delay_budget: scenario.delay_budget,
        sensors: first.data.sensors,
        elements: first.data.elements,
        bits_per_element: first.data.bits_per_element,
        result_bits: first.data.result_bits_per_sensor,
        eta_device: first.compute.cycles_per_element_device,
        eta_server: first.compute.cycles_per_element_server,
        energy_per_cycle: first.compute.energy_per_cycle,
        complexity_exponent: first.data.complexity_exponent,
        attenuation: link.attenuation,
        noise_psd: link.noise_psd,
        seed: scenario.seed,
        placement: Some(
            scenario
                .users
                .iter()
                .map(|u| PlacementSample {
                    user_id: u.id,
                    distance: u.link.distance,
                })
                .collect(),
        ),
    };
    // the per-device bandwidths must come out of the config bit for bit
    let rebuilt = generate(&config)?;
    if let Some((u, _)) = scenario
        .users
        .iter()
        .zip(&rebuilt.users)
        .find(|(a, b)| a.link != b.link)
    {
        return Err(ScenarioError::Heterogeneous(u.id, first.id));
    }
    Ok(config)
}

pub fn serialize_scenario(scenario: &Scenario) -> Result<String, ScenarioError> {
    Ok(write_config(&to_config(scenario)?))
}

/// Parse a configuration or scenario file and generate from it.
pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    generate(&parse_config(text)?)
}
