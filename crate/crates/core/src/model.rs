//! Physical model of a single user device and the shared edge server.
//!
//! Every quantity is SI: seconds, hertz, joules, bits, cycles, meters.
//! All delay and energy terms are linear in the offloading share `alpha`;
//! the optimizer works with their coefficients (`comm_delay_coeff`, `gamma`,
//! the two energy slopes) rather than re-evaluating the functions.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("offloading share {0} is outside [0, 1]")]
    ShareOutOfRange(f64),
    #[error("no server capacity allocated to a device that offloads (rho = 0, alpha = {0})")]
    NoAllocatedCapacity(f64),
    #[error("server share {0} is outside [0, 1]")]
    RhoOutOfRange(f64),
    #[error("invalid {field}: {value}")]
    Invalid { field: &'static str, value: f64 },
    #[error("invalid scenario: {0}")]
    Scenario(String),
}

fn check_share(alpha: f64) -> Result<f64, ModelError> {
    if (0.0..=1.0).contains(&alpha) {
        Ok(alpha)
    } else {
        Err(ModelError::ShareOutOfRange(alpha))
    }
}

fn require(field: &'static str, value: f64, ok: bool) -> Result<(), ModelError> {
    if ok && value.is_finite() {
        Ok(())
    } else {
        Err(ModelError::Invalid { field, value })
    }
}

/// Sensor data produced by one device per task.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DataProfile {
    /// Number of sensors `L`.
    pub sensors: u32,
    /// Data elements per sensor `M`.
    pub elements: u32,
    /// Bits per element `S`.
    pub bits_per_element: u32,
    /// Result bits returned per sensor `S_rx`.
    pub result_bits_per_sensor: u32,
    /// Exponent `p` of the complexity law `f(M) = M^p`.
    pub complexity_exponent: f64,
}

impl DataProfile {
    pub fn validate(&self) -> Result<(), ModelError> {
        require("sensors", self.sensors as f64, self.sensors >= 1)?;
        require("elements", self.elements as f64, self.elements >= 1)?;
        require(
            "bits_per_element",
            self.bits_per_element as f64,
            self.bits_per_element >= 1,
        )?;
        require(
            "result_bits_per_sensor",
            self.result_bits_per_sensor as f64,
            self.result_bits_per_sensor >= 1,
        )?;
        require(
            "complexity_exponent",
            self.complexity_exponent,
            self.complexity_exponent > 0.0,
        )
    }

    /// Uplink payload `L * M * S` in bits.
    pub fn uplink_bits(&self) -> f64 {
        self.sensors as f64 * self.elements as f64 * self.bits_per_element as f64
    }

    /// Downlink payload `L * S_rx` in bits.
    pub fn downlink_bits(&self) -> f64 {
        self.sensors as f64 * self.result_bits_per_sensor as f64
    }

    /// `f(M) = M^p`.
    pub fn complexity(&self) -> f64 {
        (self.elements as f64).powf(self.complexity_exponent)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComputeProfile {
    /// Device cycles per data element.
    pub cycles_per_element_device: f64,
    /// Server cycles per data element.
    pub cycles_per_element_server: f64,
    /// Device energy per cycle, joules.
    pub energy_per_cycle: f64,
}

impl ComputeProfile {
    pub fn validate(&self) -> Result<(), ModelError> {
        require(
            "cycles_per_element_device",
            self.cycles_per_element_device,
            self.cycles_per_element_device > 0.0,
        )?;
        require(
            "cycles_per_element_server",
            self.cycles_per_element_server,
            self.cycles_per_element_server > 0.0,
        )?;
        require(
            "energy_per_cycle",
            self.energy_per_cycle,
            self.energy_per_cycle > 0.0,
        )
    }
}

/// Uplink and downlink of one device towards the base station.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadioLink {
    pub distance: f64,
    pub reference_distance: f64,
    pub pathloss_exponent: f64,
    /// Free-space attenuation constant `G`.
    pub attenuation: f64,
    /// Noise power spectral density, W/Hz.
    pub noise_psd: f64,
    pub uplink_bandwidth: f64,
    pub uplink_spectral_eff: f64,
    pub downlink_bandwidth: f64,
    pub downlink_spectral_eff: f64,
}

impl RadioLink {
    pub fn validate(&self) -> Result<(), ModelError> {
        require("distance", self.distance, self.distance >= 0.0)?;
        for (field, value) in [
            ("reference_distance", self.reference_distance),
            ("pathloss_exponent", self.pathloss_exponent),
            ("attenuation", self.attenuation),
            ("noise_psd", self.noise_psd),
            ("uplink_bandwidth", self.uplink_bandwidth),
            ("uplink_spectral_eff", self.uplink_spectral_eff),
            ("downlink_bandwidth", self.downlink_bandwidth),
            ("downlink_spectral_eff", self.downlink_spectral_eff),
        ] {
            require(field, value, value > 0.0)?;
        }
        Ok(())
    }

    /// Transmit energy per transmitted bit at this distance, joules/bit.
    ///
    /// `(2^R - 1) / G * (d / d0)^beta * N0 / R`; the uplink bandwidth cancels.
    pub fn energy_per_bit(&self) -> f64 {
        let snr_factor = (2f64.powf(self.uplink_spectral_eff) - 1.0) / self.attenuation;
        let pathloss = (self.distance / self.reference_distance).powf(self.pathloss_exponent);
        snr_factor * pathloss * self.noise_psd / self.uplink_spectral_eff
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct UserId(pub u32);

impl fmt::Display for UserId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UserDevice {
    pub id: UserId,
    pub data: DataProfile,
    pub compute: ComputeProfile,
    pub link: RadioLink,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CloudServer {
    /// Cycles per second.
    pub capacity: f64,
}

impl UserDevice {
    pub fn validate(&self) -> Result<(), ModelError> {
        self.data.validate()?;
        self.compute.validate()?;
        self.link.validate()
    }

    pub fn uplink_bits(&self) -> f64 {
        self.data.uplink_bits()
    }

    pub fn downlink_bits(&self) -> f64 {
        self.data.downlink_bits()
    }

    /// Cycles to process the whole task on the device, `L * eta * f(M)`.
    pub fn local_compute_load(&self) -> f64 {
        self.data.sensors as f64 * self.compute.cycles_per_element_device * self.data.complexity()
    }

    /// Cycles to process the whole task on the server, `L * eta_s * f(M)`.
    pub fn server_compute_load(&self) -> f64 {
        self.data.sensors as f64 * self.compute.cycles_per_element_server * self.data.complexity()
    }

    /// Server time for the whole task at full capacity, `C_serv / C_s`.
    pub fn gamma(&self, server: &CloudServer) -> f64 {
        self.server_compute_load() / server.capacity
    }

    /// Uplink plus downlink time at `alpha = 1`.
    pub fn comm_delay_coeff(&self) -> f64 {
        let up = self.uplink_bits() / (self.link.uplink_bandwidth * self.link.uplink_spectral_eff);
        let down =
            self.downlink_bits() / (self.link.downlink_bandwidth * self.link.downlink_spectral_eff);
        up + down
    }

    pub fn transmit_time(&self, alpha: f64) -> Result<f64, ModelError> {
        let alpha = check_share(alpha)?;
        Ok(alpha * self.uplink_bits()
            / (self.link.uplink_bandwidth * self.link.uplink_spectral_eff))
    }

    pub fn receive_time(&self, alpha: f64) -> Result<f64, ModelError> {
        let alpha = check_share(alpha)?;
        Ok(alpha * self.downlink_bits()
            / (self.link.downlink_bandwidth * self.link.downlink_spectral_eff))
    }

    /// Server execution time when the device holds share `rho` of the server.
    pub fn execution_time(
        &self,
        server: &CloudServer,
        alpha: f64,
        rho: f64,
    ) -> Result<f64, ModelError> {
        let alpha = check_share(alpha)?;
        if !(0.0..=1.0).contains(&rho) {
            return Err(ModelError::RhoOutOfRange(rho));
        }
        if alpha == 0.0 {
            return Ok(0.0);
        }
        if rho == 0.0 {
            return Err(ModelError::NoAllocatedCapacity(alpha));
        }
        Ok(alpha * self.server_compute_load() / (rho * server.capacity))
    }

    pub fn energy_local(&self, alpha: f64) -> Result<f64, ModelError> {
        let alpha = check_share(alpha)?;
        Ok((1.0 - alpha) * self.compute.energy_per_cycle * self.local_compute_load())
    }

    pub fn energy_transmit(&self, alpha: f64) -> Result<f64, ModelError> {
        let alpha = check_share(alpha)?;
        Ok(alpha * self.energy_slope_transmit())
    }

    pub fn energy_total(&self, alpha: f64) -> Result<f64, ModelError> {
        Ok(self.energy_local(alpha)? + self.energy_transmit(alpha)?)
    }

    /// d E_tr / d alpha, non-negative.
    pub fn energy_slope_transmit(&self) -> f64 {
        self.link.energy_per_bit() * self.uplink_bits()
    }

    /// d E_u / d alpha, non-positive.
    pub fn energy_slope_local(&self) -> f64 {
        -self.compute.energy_per_cycle * self.local_compute_load()
    }

    /// Marginal energy saved per unit of offloaded share, `-(E'_tr + E'_u)`.
    ///
    /// Positive exactly when offloading pays off.
    pub fn marginal_saving(&self) -> f64 {
        -(self.energy_slope_transmit() + self.energy_slope_local())
    }

    /// Distance at which the transmit slope equals the local-processing slope.
    ///
    /// Only the device's profile and link constants matter; its own distance
    /// is ignored. Devices strictly closer than this pass the energy gate.
    pub fn gate_threshold_distance(&self) -> f64 {
        let link = &self.link;
        let local = self.compute.energy_per_cycle * self.local_compute_load();
        let per_unit_pathloss = (2f64.powf(link.uplink_spectral_eff) - 1.0) / link.attenuation
            * link.noise_psd
            * self.uplink_bits()
            / link.uplink_spectral_eff;
        link.reference_distance * (local / per_unit_pathloss).powf(1.0 / link.pathloss_exponent)
    }
}

/// Complete solver input: the devices, the server and the shared budgets.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub users: Vec<UserDevice>,
    pub server: CloudServer,
    /// `T_max`, seconds.
    pub delay_budget: f64,
    /// Nominal uplink bandwidth `B` before the fraction is applied.
    pub total_uplink_bandwidth: f64,
    /// Share of `B` in use; each device gets `fraction * B / N`.
    pub bandwidth_fraction: f64,
    pub total_downlink_bandwidth: f64,
    pub cell_radius: f64,
    /// Placement seed the scenario was generated from.
    pub seed: u64,
}

impl Scenario {
    /// Uplink bandwidth of each device, `fraction * B / N`.
    pub fn per_user_uplink(&self) -> f64 {
        self.bandwidth_fraction * self.total_uplink_bandwidth / self.users.len() as f64
    }

    pub fn per_user_downlink(&self) -> f64 {
        self.total_downlink_bandwidth / self.users.len() as f64
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.users.is_empty() {
            return Err(ModelError::Scenario("no users".into()));
        }
        require("delay_budget", self.delay_budget, self.delay_budget > 0.0)?;
        require("capacity", self.server.capacity, self.server.capacity > 0.0)?;
        let mut ids: Vec<UserId> = self.users.iter().map(|u| u.id).collect();
        ids.sort();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(ModelError::Scenario(format!("duplicate user id {}", w[0])));
        }
        let share = self.per_user_uplink();
        for u in &self.users {
            u.validate()?;
            if (u.link.uplink_bandwidth - share).abs() > 1e-12 * share {
                return Err(ModelError::Scenario(format!(
                    "user {} has uplink bandwidth {} but the equal split is {}",
                    u.id, u.link.uplink_bandwidth, share
                )));
            }
        }
        Ok(())
    }
}

/// Attenuation constant `G` that puts the gate threshold at `threshold_distance`
/// for the given device profile (its attenuation and distance are ignored).
pub fn calibrate_attenuation(template: &UserDevice, threshold_distance: f64) -> f64 {
    let link = &template.link;
    let local = template.compute.energy_per_cycle * template.local_compute_load();
    (2f64.powf(link.uplink_spectral_eff) - 1.0)
        * (threshold_distance / link.reference_distance).powf(link.pathloss_exponent)
        * link.noise_psd
        * template.uplink_bits()
        / (link.uplink_spectral_eff * local)
}


#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn data(l: u32, m: u32, s: u32, srx: u32) -> DataProfile {
        DataProfile {
            sensors: l,
            elements: m,
            bits_per_element: s,
            result_bits_per_sensor: srx,
            complexity_exponent: 1.0,
        }
    }

    #[test]
    fn payload_sizes() {
        assert_eq!(data(10, 70, 8, 8).uplink_bits(), 5600.0);
        assert_eq!(data(1, 1, 1, 1).uplink_bits(), 1.0);
        assert_eq!(data(2, 3, 4, 1).uplink_bits(), 24.0);
        assert_eq!(data(10, 70, 8, 8).downlink_bits(), 80.0);
        assert_eq!(data(1, 1, 1, 1).downlink_bits(), 1.0);
        assert_eq!(data(5, 1, 1, 16).downlink_bits(), 80.0);
    }

    #[test]
    fn compute_loads() {
        let mut u = table_one_user();
        assert_eq!(u.local_compute_load(), 70_000.0);
        assert_eq!(u.server_compute_load(), 700.0);
        u.compute.cycles_per_element_server = 2.0;
        assert_eq!(u.server_compute_load(), 1400.0);
        u.data.complexity_exponent = 2.0;
        assert_eq!(u.local_compute_load(), 4_900_000.0);

        let mut unit = table_one_user();
        unit.data = data(1, 1, 1, 1);
        unit.compute.cycles_per_element_device = 1.0;
        unit.compute.cycles_per_element_server = 1.0;
        assert_eq!(unit.local_compute_load(), 1.0);
        assert_eq!(unit.server_compute_load(), 1.0);
    }

    #[test]
    fn gamma_values() {
        let u = table_one_user();
        assert_relative_eq!(u.gamma(&table_one_server()), 3.5e-6, max_relative = 1e-12);
        assert_eq!(u.gamma(&CloudServer { capacity: 700.0 }), 1.0);
        let mut idle = u;
        idle.compute.cycles_per_element_server = 0.0;
        assert_eq!(idle.gamma(&table_one_server()), 0.0);
    }

    #[test]
    fn comm_delay() {
        let u = table_one_user();
        assert_relative_eq!(
            u.comm_delay_coeff(),
            2.3333333e-3 + 3.3333333e-5,
            max_relative = 1e-6
        );

        let mut slow = u;
        slow.data = data(10, 30, 8, 8);
        slow.link.uplink_bandwidth = 100e3;
        // 2400 bits over 100 kHz * 6; downlink term kept separately
        let up = slow.transmit_time(1.0).unwrap();
        assert_relative_eq!(up, 4.0e-3, max_relative = 1e-12);
    }

    #[test]
    fn comm_delay_zero_payload() {
        // DataProfile forbids zero counts; the coefficient is still linear in payload.
        let u = table_one_user();
        let half = {
            let mut h = u;
            h.link.uplink_bandwidth *= 2.0;
            h.link.downlink_bandwidth *= 2.0;
            h
        };
        assert_relative_eq!(
            half.comm_delay_coeff() * 2.0,
            u.comm_delay_coeff(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn link_times() {
        let u = table_one_user();
        assert_relative_eq!(
            u.transmit_time(1.0).unwrap(),
            2.3333333333e-3,
            max_relative = 1e-9
        );
        assert_eq!(u.transmit_time(0.0).unwrap(), 0.0);
        assert_relative_eq!(
            u.transmit_time(0.5).unwrap(),
            1.1666666667e-3,
            max_relative = 1e-9
        );
        assert_relative_eq!(
            u.receive_time(1.0).unwrap(),
            3.3333333333e-5,
            max_relative = 1e-9
        );
        assert_eq!(u.receive_time(0.0).unwrap(), 0.0);
        assert_relative_eq!(
            u.receive_time(0.25).unwrap(),
            8.3333333333e-6,
            max_relative = 1e-9
        );
        assert!(matches!(
            u.transmit_time(1.5),
            Err(ModelError::ShareOutOfRange(_))
        ));
        assert!(u.receive_time(-0.1).is_err());
    }

    #[test]
    fn execution_time_cases() {
        let u = table_one_user();
        let s = table_one_server();
        assert_relative_eq!(
            u.execution_time(&s, 1.0, 1.0).unwrap(),
            3.5e-6,
            max_relative = 1e-12
        );
        assert_eq!(u.execution_time(&s, 0.0, 0.3).unwrap(), 0.0);
        assert_eq!(u.execution_time(&s, 0.0, 0.0).unwrap(), 0.0);
        assert_relative_eq!(
            u.execution_time(&s, 1.0, 0.001).unwrap(),
            3.5e-3,
            max_relative = 1e-12
        );
        assert_eq!(
            u.execution_time(&s, 0.5, 0.0),
            Err(ModelError::NoAllocatedCapacity(0.5))
        );
        assert!(u.execution_time(&s, 2.0, 0.5).is_err());
    }

    #[test]
    fn local_energy() {
        let u = table_one_user();
        assert_relative_eq!(u.energy_local(0.0).unwrap(), 3.5e-4, max_relative = 1e-12);
        assert_eq!(u.energy_local(1.0).unwrap(), 0.0);
        assert_relative_eq!(u.energy_local(0.5).unwrap(), 1.75e-4, max_relative = 1e-12);
        assert!(u.energy_local(1.01).is_err());
    }

    #[test]
    fn transmit_energy() {
        let u = table_one_user();
        assert_eq!(u.energy_transmit(0.0).unwrap(), 0.0);
        assert_relative_eq!(
            u.energy_transmit(1.0).unwrap(),
            2.352e-16,
            max_relative = 1e-12
        );
        let mut far = u;
        far.link.distance *= 2.0;
        assert_relative_eq!(
            far.energy_transmit(1.0).unwrap(),
            4.0 * u.energy_transmit(1.0).unwrap(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn total_energy_endpoints() {
        let u = table_one_user();
        assert_eq!(u.energy_total(0.0).unwrap(), u.energy_local(0.0).unwrap());
        assert_eq!(
            u.energy_total(1.0).unwrap(),
            u.energy_transmit(1.0).unwrap()
        );
        let a = 0.3;
        assert_eq!(
            u.energy_total(a).unwrap(),
            u.energy_local(a).unwrap() + u.energy_transmit(a).unwrap()
        );
    }

    #[test]
    fn slopes() {
        let u = table_one_user();
        assert_relative_eq!(u.energy_slope_transmit(), 2.352e-16, max_relative = 1e-12);
        assert_relative_eq!(u.energy_slope_local(), -3.5e-4, max_relative = 1e-12);
        let mut g2 = u;
        g2.link.attenuation *= 2.0;
        assert_relative_eq!(
            g2.energy_slope_transmit() * 2.0,
            u.energy_slope_transmit(),
            max_relative = 1e-12
        );
        let mut l2 = u;
        l2.data.sensors *= 2;
        assert_relative_eq!(
            l2.energy_slope_local(),
            2.0 * u.energy_slope_local(),
            max_relative = 1e-12
        );
        let mut eps0 = u;
        eps0.compute.energy_per_cycle = 0.0;
        assert_eq!(eps0.energy_slope_local(), 0.0);
    }

    #[test]
    fn threshold_distance_fixed_points() {
        let mut u = table_one_user();
        // attenuation chosen so the slopes balance exactly at d0
        u.link.attenuation = calibrate_attenuation(&u, u.link.reference_distance);
        assert_relative_eq!(
            u.gate_threshold_distance(),
            u.link.reference_distance,
            max_relative = 1e-12
        );
        assert_relative_eq!(u.marginal_saving(), 0.0, epsilon = 1e-18);

        // transmit slope at d0 is a quarter of the local slope: d* = 2 d0 for beta = 2
        u.link.attenuation *= 4.0;
        assert_relative_eq!(
            u.gate_threshold_distance(),
            2.0 * u.link.reference_distance,
            max_relative = 1e-12
        );
    }

    #[test]
    fn calibrated_threshold_at_cell_fraction() {
        let mut u = table_one_user();
        let radius = 800.0;
        u.link.attenuation = calibrate_attenuation(&u, 0.58 * radius);
        assert_relative_eq!(
            u.gate_threshold_distance() / radius,
            0.58,
            max_relative = 1e-12
        );
        // independent check: slopes balance at d*
        u.link.distance = 0.58 * radius;
        assert_relative_eq!(
            u.energy_slope_transmit(),
            -u.energy_slope_local(),
            max_relative = 1e-12
        );
    }

    fn arb_user() -> impl Strategy<Value = UserDevice> {
        (
            1u32..20,
            1u32..200,
            1u32..16,
            1u32..16,
            0.5f64..2.0,
            (1.0f64..500.0, 0.1f64..10.0, 1e-10f64..1e-8),
            (0.0f64..1000.0, 2.0f64..4.0, 1e-13f64..1e-10),
            (1e4f64..1e7, 1.0f64..8.0, 1e4f64..1e7, 1.0f64..8.0),
        )
            .prop_map(
                |(l, m, s, srx, p, (eta, etas, eps), (d, beta, g), (bu, ru, bd, rd))| UserDevice {
                    id: UserId(0),
                    data: DataProfile {
                        sensors: l,
                        elements: m,
                        bits_per_element: s,
                        result_bits_per_sensor: srx,
                        complexity_exponent: p,
                    },
                    compute: ComputeProfile {
                        cycles_per_element_device: eta,
                        cycles_per_element_server: etas,
                        energy_per_cycle: eps,
                    },
                    link: RadioLink {
                        distance: d,
                        reference_distance: 200.0,
                        pathloss_exponent: beta,
                        attenuation: g,
                        noise_psd: 4e-21,
                        uplink_bandwidth: bu,
                        uplink_spectral_eff: ru,
                        downlink_bandwidth: bd,
                        downlink_spectral_eff: rd,
                    },
                },
            )
    }

    proptest! {
        #[test]
        fn linear_in_share(u in arb_user()) {
            let s = table_one_server();
            let checks: [(f64, f64, f64); 4] = [
                (u.transmit_time(0.0).unwrap(), u.transmit_time(1.0).unwrap(), u.transmit_time(0.5).unwrap()),
                (u.receive_time(0.0).unwrap(), u.receive_time(1.0).unwrap(), u.receive_time(0.5).unwrap()),
                (u.energy_local(0.0).unwrap(), u.energy_local(1.0).unwrap(), u.energy_local(0.5).unwrap()),
                (u.energy_total(0.0).unwrap(), u.energy_total(1.0).unwrap(), u.energy_total(0.5).unwrap()),
            ];
            for (lo, hi, mid) in checks {
                prop_assert!((mid - 0.5 * (lo + hi)).abs() <= 1e-15 * (lo.abs() + hi.abs()));
            }
            let e = u.execution_time(&s, 0.5, 0.5).unwrap();
            prop_assert!((e - 0.5 * u.execution_time(&s, 1.0, 0.5).unwrap()).abs() <= 1e-15 * e);
        }

        #[test]
        fn transmit_energy_ignores_bandwidth(u in arb_user(), scale in 0.01f64..100.0, a in 0.0f64..=1.0) {
            let mut v = u;
            v.link.uplink_bandwidth *= scale;
            let (x, y) = (u.energy_transmit(a).unwrap(), v.energy_transmit(a).unwrap());
            prop_assert!((x - y).abs() <= 1e-15 * x.abs());
        }

        #[test]
        fn transmit_time_times_rate_is_bits(u in arb_user(), a in 0.0f64..=1.0) {
            let bits = u.transmit_time(a).unwrap() * u.link.uplink_bandwidth * u.link.uplink_spectral_eff;
            prop_assert!((bits - a * u.uplink_bits()).abs() <= 1e-12 * u.uplink_bits());
        }

        #[test]
        fn slope_signs(u in arb_user()) {
            prop_assert!(u.energy_slope_local() < 0.0);
            prop_assert!(u.energy_slope_transmit() >= 0.0);
        }

        #[test]
        fn finite_difference_slope(u in arb_user(), seeds in proptest::collection::vec(0.01f64..0.99, 10)) {
            let analytic = u.energy_slope_transmit() + u.energy_slope_local();
            let scale = u.energy_slope_transmit() - u.energy_slope_local();
            let h = 1e-4;
            for a in seeds {
                let fd = (u.energy_total(a + h).unwrap() - u.energy_total(a - h).unwrap()) / (2.0 * h);
                prop_assert!((fd - analytic).abs() <= 1e-9 * scale);
                // energy decreases in alpha iff the marginal saving is positive
                if analytic.abs() > 1e-6 * scale {
                    let decreasing = u.energy_total(a + h).unwrap() < u.energy_total(a).unwrap();
                    prop_assert_eq!(decreasing, u.marginal_saving() > 0.0);
                }
            }
        }
    }
}
