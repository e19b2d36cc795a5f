//! Line-oriented scenario configuration.
//!
//! ```text
//! # comment
//! n_users = 50
//! total_bandwidth = 20 MHz
//! t_max = 5 ms
//!
//! [distances]
//! 0 = 312.5
//! 1 = 77.25
//! ```
//!
//! One `key = value` pair per line; blank lines and `#` comments are
//! ignored. Omitted keys keep their defaults (the reference simulation
//! parameters). An optional `[distances]` block pins every device's distance
//! and takes precedence over seeded placement.

use std::fmt::Write as _;

use thiserror::Error;

use crate::model::{
    calibrate_attenuation, ComputeProfile, DataProfile, RadioLink, UserDevice, UserId,
};
use crate::units::{parse_quantity, Quantity, UnitError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {message}")]
pub struct ConfigError {
    /// 1-based; 0 when the problem is not tied to a single line.
    pub line: usize,
    pub message: String,
}

impl ConfigError {
    fn at(line: usize, message: impl Into<String>) -> Self {
        Self {
            line,
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlacementSample {
    pub user_id: UserId,
    pub distance: f64,
}

/// Gate threshold as a fraction of the cell radius used to calibrate the
/// default attenuation constant.
pub const DEFAULT_GATE_RADIUS_RATIO: f64 = 0.58;

/// Thermal noise density, -174 dBm/Hz.
pub const DEFAULT_NOISE_PSD: f64 = 4e-21;

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub n_users: usize,
    pub cell_radius: f64,
    pub reference_distance: f64,
    pub pathloss_exponent: f64,
    pub total_bandwidth: f64,
    pub bandwidth_fraction: f64,
    pub downlink_bandwidth: f64,
    pub spectral_eff_up: f64,
    pub spectral_eff_down: f64,
    pub server_capacity: f64,
    pub delay_budget: f64,
    pub sensors: u32,
    pub elements: u32,
    pub bits_per_element: u32,
    pub result_bits: u32,
    pub eta_device: f64,
    pub eta_server: f64,
    pub energy_per_cycle: f64,
    pub complexity_exponent: f64,
    pub attenuation: f64,
    pub noise_psd: f64,
    pub seed: u64,
    pub placement: Option<Vec<PlacementSample>>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        let mut cfg = ScenarioConfig {
            n_users: 50,
            cell_radius: 800.0,
            reference_distance: 200.0,
            pathloss_exponent: 2.0,
            total_bandwidth: 20e6,
            bandwidth_fraction: 1.0,
            downlink_bandwidth: 20e6,
            spectral_eff_up: 6.0,
            spectral_eff_down: 6.0,
            server_capacity: 200e6,
            delay_budget: 5e-3,
            sensors: 10,
            elements: 70,
            bits_per_element: 8,
            result_bits: 8,
            eta_device: 100.0,
            eta_server: 1.0,
            energy_per_cycle: 5e-9,
            complexity_exponent: 1.0,
            attenuation: 1.0,
            noise_psd: DEFAULT_NOISE_PSD,
            seed: 1,
            placement: None,
        };
        cfg.calibrate_gate(DEFAULT_GATE_RADIUS_RATIO);
        cfg
    }
}

impl ScenarioConfig {
    /// Device with this config's profile at `distance`, for user `id`.
    pub fn device(&self, id: UserId, distance: f64) -> UserDevice {
        let n = self.n_users.max(1) as f64;
        UserDevice {
            id,
            data: DataProfile {
                sensors: self.sensors,
                elements: self.elements,
                bits_per_element: self.bits_per_element,
                result_bits_per_sensor: self.result_bits,
                complexity_exponent: self.complexity_exponent,
            },
            compute: ComputeProfile {
                cycles_per_element_device: self.eta_device,
                cycles_per_element_server: self.eta_server,
                energy_per_cycle: self.energy_per_cycle,
            },
            link: RadioLink {
                distance,
                reference_distance: self.reference_distance,
                pathloss_exponent: self.pathloss_exponent,
                attenuation: self.attenuation,
                noise_psd: self.noise_psd,
                uplink_bandwidth: self.bandwidth_fraction * self.total_bandwidth / n,
                uplink_spectral_eff: self.spectral_eff_up,
                downlink_bandwidth: self.downlink_bandwidth / n,
                downlink_spectral_eff: self.spectral_eff_down,
            },
        }
    }

    /// Set the attenuation constant so devices closer than
    /// `ratio * cell_radius` pass the energy gate.
    pub fn calibrate_gate(&mut self, ratio: f64) {
        let template = self.device(UserId(0), 0.0);
        self.attenuation = calibrate_attenuation(&template, ratio * self.cell_radius);
    }

    /// Gate threshold distance for this profile.
    pub fn gate_threshold_distance(&self) -> f64 {
        self.device(UserId(0), 0.0).gate_threshold_distance()
    }

    pub fn with_delay_budget(mut self, t_max: f64) -> Self {
        self.delay_budget = t_max;
        self
    }

    pub fn with_bandwidth_fraction(mut self, fraction: f64) -> Self {
        self.bandwidth_fraction = fraction;
        self
    }

    /// Change the number of users; an explicit placement of a different size
    /// is discarded in favour of seeded placement.
    pub fn with_users(mut self, n: usize) -> Self {
        if self.n_users != n {
            self.placement = None;
        }
        self.n_users = n;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

#[derive(Clone, Copy)]
enum Kind {
    Count,
    Bits,
    Positive(Quantity),
    Fraction,
    Seed,
}

const KEYS: &[(&str, Kind)] = &[
    ("n_users", Kind::Count),
    ("cell_radius", Kind::Positive(Quantity::Length)),
    ("reference_distance", Kind::Positive(Quantity::Length)),
    ("pathloss_exponent", Kind::Positive(Quantity::Dimensionless)),
    ("total_bandwidth", Kind::Positive(Quantity::Frequency)),
    ("bandwidth_fraction", Kind::Fraction),
    ("downlink_bandwidth", Kind::Positive(Quantity::Frequency)),
    ("spectral_eff_up", Kind::Positive(Quantity::Dimensionless)),
    ("spectral_eff_down", Kind::Positive(Quantity::Dimensionless)),
    ("server_capacity", Kind::Positive(Quantity::Frequency)),
    ("t_max", Kind::Positive(Quantity::Time)),
    ("sensors", Kind::Bits),
    ("elements", Kind::Bits),
    ("bits_per_element", Kind::Bits),
    ("result_bits", Kind::Bits),
    ("eta_device", Kind::Positive(Quantity::Dimensionless)),
    ("eta_server", Kind::Positive(Quantity::Dimensionless)),
    ("energy_per_cycle", Kind::Positive(Quantity::Energy)),
    (
        "complexity_exponent",
        Kind::Positive(Quantity::Dimensionless),
    ),
    ("attenuation_g", Kind::Positive(Quantity::Dimensionless)),
    ("noise_psd", Kind::Positive(Quantity::Dimensionless)),
    ("seed", Kind::Seed),
];

enum Value {
    Int(u64),
    Real(f64),
}

fn parse_value(kind: Kind, raw: &str, line: usize) -> Result<Value, ConfigError> {
    let unit_err = |e: UnitError| ConfigError::at(line, e.to_string());
    match kind {
        Kind::Count | Kind::Bits | Kind::Seed => {
            let v: u64 = raw.parse().map_err(|_| {
                ConfigError::at(line, format!("`{raw}` is not a non-negative integer"))
            })?;
            let max = match kind {
                Kind::Bits => u32::MAX as u64,
                Kind::Count => 1 << 24,
                _ => u64::MAX,
            };
            if !matches!(kind, Kind::Seed) && (v == 0 || v > max) {
                return Err(ConfigError::at(line, format!("`{raw}` is out of range")));
            }
            Ok(Value::Int(v))
        }
        Kind::Positive(q) => {
            let v = parse_quantity(raw, q).map_err(unit_err)?;
            if v <= 0.0 {
                return Err(ConfigError::at(line, format!("`{raw}` must be positive")));
            }
            Ok(Value::Real(v))
        }
        Kind::Fraction => {
            let v = parse_quantity(raw, Quantity::Dimensionless).map_err(unit_err)?;
            if !(v > 0.0 && v <= 1.0) {
                return Err(ConfigError::at(line, format!("`{raw}` must lie in (0, 1]")));
            }
            Ok(Value::Real(v))
        }
    }
}

fn assign(cfg: &mut ScenarioConfig, key: &str, value: Value) {
    let int = |v: &Value| match v {
        Value::Int(i) => *i,
        Value::Real(_) => unreachable!("integer key"),
    };
    let real = |v: &Value| match v {
        Value::Real(r) => *r,
        Value::Int(_) => unreachable!("real key"),
    };
    match key {
        "n_users" => cfg.n_users = int(&value) as usize,
        "cell_radius" => cfg.cell_radius = real(&value),
        "reference_distance" => cfg.reference_distance = real(&value),
        "pathloss_exponent" => cfg.pathloss_exponent = real(&value),
        "total_bandwidth" => cfg.total_bandwidth = real(&value),
        "bandwidth_fraction" => cfg.bandwidth_fraction = real(&value),
        "downlink_bandwidth" => cfg.downlink_bandwidth = real(&value),
        "spectral_eff_up" => cfg.spectral_eff_up = real(&value),
        "spectral_eff_down" => cfg.spectral_eff_down = real(&value),
        "server_capacity" => cfg.server_capacity = real(&value),
        "t_max" => cfg.delay_budget = real(&value),
        "sensors" => cfg.sensors = int(&value) as u32,
        "elements" => cfg.elements = int(&value) as u32,
        "bits_per_element" => cfg.bits_per_element = int(&value) as u32,
        "result_bits" => cfg.result_bits = int(&value) as u32,
        "eta_device" => cfg.eta_device = real(&value),
        "eta_server" => cfg.eta_server = real(&value),
        "energy_per_cycle" => cfg.energy_per_cycle = real(&value),
        "complexity_exponent" => cfg.complexity_exponent = real(&value),
        "attenuation_g" => cfg.attenuation = real(&value),
        "noise_psd" => cfg.noise_psd = real(&value),
        "seed" => cfg.seed = int(&value),
        _ => unreachable!("key table and assign disagree on `{key}`"),
    }
}

fn split_pair(line: &str, number: usize) -> Result<(&str, &str), ConfigError> {
    let (key, value) = line
        .split_once('=')
        .ok_or_else(|| ConfigError::at(number, format!("expected `key = value`, got `{line}`")))?;
    let (key, value) = (key.trim(), value.trim());
    if key.is_empty() || value.is_empty() {
        return Err(ConfigError::at(
            number,
            format!("expected `key = value`, got `{line}`"),
        ));
    }
    Ok((key, value))
}

/// Parse a configuration or serialized scenario.
pub fn parse_config(text: &str) -> Result<ScenarioConfig, ConfigError> {
    let mut cfg = ScenarioConfig::default();
    let mut seen: Vec<&str> = Vec::new();
    let mut in_distances = false;
    let mut distances_line = 0;
    let mut placement: Vec<PlacementSample> = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let number = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('[') {
            if line != "[distances]" {
                return Err(ConfigError::at(number, format!("unknown section `{line}`")));
            }
            if in_distances {
                return Err(ConfigError::at(number, "duplicate [distances] section"));
            }
            in_distances = true;
            distances_line = number;
            continue;
        }
        let (key, value) = split_pair(line, number)?;
        if in_distances {
            let id: u32 = key
                .parse()
                .map_err(|_| ConfigError::at(number, format!("`{key}` is not a user id")))?;
            let distance = parse_quantity(value, Quantity::Length)
                .map_err(|e| ConfigError::at(number, e.to_string()))?;
            if distance < 0.0 {
                return Err(ConfigError::at(
                    number,
                    format!("distance `{value}` is negative"),
                ));
            }
            if placement.iter().any(|p| p.user_id.0 == id) {
                return Err(ConfigError::at(number, format!("duplicate user id {id}")));
            }
            placement.push(PlacementSample {
                user_id: UserId(id),
                distance,
            });
            continue;
        }
        let Some(&(name, kind)) = KEYS.iter().find(|(k, _)| *k == key) else {
            return Err(ConfigError::at(number, format!("unknown key `{key}`")));
        };
        if seen.contains(&name) {
            return Err(ConfigError::at(number, format!("duplicate key `{key}`")));
        }
        seen.push(name);
        let value = parse_value(kind, value, number)?;
        assign(&mut cfg, name, value);
    }

    if in_distances {
        if placement.len() != cfg.n_users {
            return Err(ConfigError::at(
                distances_line,
                format!(
                    "[distances] lists {} users but n_users = {}",
                    placement.len(),
                    cfg.n_users
                ),
            ));
        }
        if let Some(p) = placement.iter().find(|p| p.distance > cfg.cell_radius) {
            return Err(ConfigError::at(
                distances_line,
                format!(
                    "user {} at {} m lies outside the cell radius {} m",
                    p.user_id, p.distance, cfg.cell_radius
                ),
            ));
        }
        cfg.placement = Some(placement);
    }
    Ok(cfg)
}

/// Shortest decimal form that parses back to the same `f64`.
pub fn format_number(v: f64) -> String {
    let a = v.abs();
    if a == 0.0 || (1e-4..1e16).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

/// Emit `cfg` in the format read by [`parse_config`]; every key is written,
/// in SI without suffixes.
pub fn write_config(cfg: &ScenarioConfig) -> String {
    let mut out = String::new();
    let n = format_number;
    let rows: [(&str, String); 22] = [
        ("n_users", cfg.n_users.to_string()),
        ("cell_radius", n(cfg.cell_radius)),
        ("reference_distance", n(cfg.reference_distance)),
        ("pathloss_exponent", n(cfg.pathloss_exponent)),
        ("total_bandwidth", n(cfg.total_bandwidth)),
        ("bandwidth_fraction", n(cfg.bandwidth_fraction)),
        ("downlink_bandwidth", n(cfg.downlink_bandwidth)),
        ("spectral_eff_up", n(cfg.spectral_eff_up)),
        ("spectral_eff_down", n(cfg.spectral_eff_down)),
        ("server_capacity", n(cfg.server_capacity)),
        ("t_max", n(cfg.delay_budget)),
        ("sensors", cfg.sensors.to_string()),
        ("elements", cfg.elements.to_string()),
        ("bits_per_element", cfg.bits_per_element.to_string()),
        ("result_bits", cfg.result_bits.to_string()),
        ("eta_device", n(cfg.eta_device)),
        ("eta_server", n(cfg.eta_server)),
        ("energy_per_cycle", n(cfg.energy_per_cycle)),
        ("complexity_exponent", n(cfg.complexity_exponent)),
        ("attenuation_g", n(cfg.attenuation)),
        ("noise_psd", n(cfg.noise_psd)),
        ("seed", cfg.seed.to_string()),
    ];
    for (key, value) in rows {
        let _ = writeln!(out, "{key} = {value}");
    }
    if let Some(placement) = &cfg.placement {
        out.push_str("\n[distances]\n");
        for p in placement {
            let _ = writeln!(out, "{} = {}", p.user_id, n(p.distance));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_text_gives_reference_defaults() {
        let cfg = parse_config("").unwrap();
        assert_eq!(cfg, ScenarioConfig::default());
        assert_eq!(cfg.n_users, 50);
        assert_eq!(cfg.total_bandwidth, 20e6);
        assert_eq!(cfg.downlink_bandwidth, 20e6);
        assert_eq!(cfg.server_capacity, 200e6);
        assert_eq!(
            (
                cfg.sensors,
                cfg.elements,
                cfg.bits_per_element,
                cfg.result_bits
            ),
            (10, 70, 8, 8)
        );
        assert_eq!((cfg.reference_distance, cfg.cell_radius), (200.0, 800.0));
        assert_eq!(cfg.pathloss_exponent, 2.0);
        assert_eq!((cfg.spectral_eff_up, cfg.spectral_eff_down), (6.0, 6.0));
        assert_eq!(cfg.energy_per_cycle, 5e-9);
        assert_eq!(
            (cfg.eta_device, cfg.eta_server, cfg.complexity_exponent),
            (100.0, 1.0, 1.0)
        );
        assert!(cfg.placement.is_none());
    }

    #[test]
    fn default_gate_sits_at_calibrated_radius() {
        let cfg = ScenarioConfig::default();
        let ratio = cfg.gate_threshold_distance() / cfg.cell_radius;
        assert!((ratio - 0.58).abs() < 1e-12, "{ratio}");
    }

    #[test]
    fn units_are_converted() {
        let cfg =
            parse_config("t_max = 5 ms\nserver_capacity = 100MHz\nenergy_per_cycle = 5e-6 mJ\n")
                .unwrap();
        assert_eq!(cfg.delay_budget, 5e-3);
        assert_eq!(cfg.server_capacity, 100e6);
        assert!((cfg.energy_per_cycle - 5e-9).abs() < 1e-24);
    }

    #[test]
    fn comments_and_blank_lines() {
        let cfg = parse_config("# header\n\n  n_users = 3   # inline\n").unwrap();
        assert_eq!(cfg.n_users, 3);
    }

    #[test]
    fn errors_name_the_line() {
        let err = parse_config("seed = 4\nn_users = -3\n").unwrap_err();
        assert_eq!(err.line, 2);
        assert_eq!(parse_config("\n\nbogus = 1").unwrap_err().line, 3);
        assert_eq!(parse_config("t_max 5").unwrap_err().line, 1);
        assert_eq!(parse_config("t_max = 0 ms").unwrap_err().line, 1);
        assert_eq!(parse_config("t_max = 5 MHz").unwrap_err().line, 1);
        assert_eq!(
            parse_config("bandwidth_fraction = 1.5").unwrap_err().line,
            1
        );
        assert_eq!(
            parse_config("n_users = 2\nn_users = 3").unwrap_err().line,
            2
        );
        assert_eq!(parse_config("[users]").unwrap_err().line, 1);
        assert_eq!(parse_config("n_users = 0").unwrap_err().line, 1);
    }

    #[test]
    fn distances_block() {
        let cfg = parse_config("n_users = 2\n[distances]\n0 = 10\n1 = 20.5 m\n").unwrap();
        let p = cfg.placement.unwrap();
        assert_eq!(
            p[1],
            PlacementSample {
                user_id: UserId(1),
                distance: 20.5
            }
        );

        assert_eq!(
            parse_config("n_users = 2\n[distances]\n0 = 10\n")
                .unwrap_err()
                .line,
            2
        );
        assert_eq!(
            parse_config("n_users = 2\n[distances]\n0 = 10\n0 = 3")
                .unwrap_err()
                .line,
            4
        );
        assert_eq!(
            parse_config("n_users = 1\n[distances]\n0 = 900")
                .unwrap_err()
                .line,
            2
        );
        assert_eq!(
            parse_config("n_users = 1\n[distances]\nx = 9")
                .unwrap_err()
                .line,
            3
        );
        assert_eq!(
            parse_config("n_users = 1\n[distances]\n0 = -9")
                .unwrap_err()
                .line,
            3
        );
    }

    #[test]
    fn written_defaults_are_si() {
        let text = write_config(&ScenarioConfig::default());
        for line in [
            "n_users = 50",
            "server_capacity = 200000000",
            "total_bandwidth = 20000000",
            "downlink_bandwidth = 20000000",
            "sensors = 10",
            "elements = 70",
            "bits_per_element = 8",
            "result_bits = 8",
            "reference_distance = 200",
            "cell_radius = 800",
            "pathloss_exponent = 2",
            "spectral_eff_up = 6",
            "spectral_eff_down = 6",
            "energy_per_cycle = 5e-9",
            "eta_device = 100",
            "eta_server = 1",
            "complexity_exponent = 1",
            "noise_psd = 4e-21",
        ] {
            assert!(
                text.lines().any(|l| l == line),
                "missing `{line}` in\n{text}"
            );
        }
    }

    fn arb_config() -> impl Strategy<Value = ScenarioConfig> {
        (
            1usize..6,
            (1.0f64..2000.0, 1.0f64..500.0, 1.5f64..4.0),
            (1e5f64..1e8, 0.01f64..=1.0, 1e5f64..1e8),
            (1.0f64..10.0, 1e6f64..1e10, 1e-4f64..1.0),
            (1e-10f64..1e-7, 1e-14f64..1e-9, any::<u64>()),
            proptest::collection::vec(0.0f64..1.0, 6),
        )
            .prop_map(
                |(n, (r, d0, beta), (b, f, brx), (eff, cs, t), (eps, g, seed), ds)| {
                    let mut cfg = ScenarioConfig {
                        n_users: n,
                        cell_radius: r,
                        reference_distance: d0,
                        pathloss_exponent: beta,
                        total_bandwidth: b,
                        bandwidth_fraction: f,
                        downlink_bandwidth: brx,
                        spectral_eff_up: eff,
                        server_capacity: cs,
                        delay_budget: t,
                        energy_per_cycle: eps,
                        attenuation: g,
                        seed,
                        ..ScenarioConfig::default()
                    };
                    if ds[0] < 0.5 {
                        cfg.placement = Some(
                            (0..n)
                                .map(|i| PlacementSample {
                                    user_id: UserId(i as u32),
                                    distance: ds[i] * r,
                                })
                                .collect(),
                        );
                    }
                    cfg
                },
            )
    }

    proptest! {
        #[test]
        fn write_then_parse_is_identity(cfg in arb_config()) {
            let text = write_config(&cfg);
            prop_assert_eq!(parse_config(&text).unwrap(), cfg);
        }

        #[test]
        fn parser_never_panics(text in "\\PC{0,200}") {
            let _ = parse_config(&text);
        }
    }
}
