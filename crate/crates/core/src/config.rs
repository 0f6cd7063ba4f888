//! Experiment description read from TOML.
//!
//! ```toml
//! name = "emulation"
//! seed = 1
//! policies = ["tg-fso", "ecmp-fso", "ecmp-legacy"]
//!
//! [topology]
//! leaves = 12
//! spine_ratio = "1/2"
//! servers_per_rack = 25
//! wavelengths = 4
//! layout = { kind = "uniform", distance = 5.0 }
//!
//! [resources]
//! link_rate = 10e9          # calibrate E and E_T to this link rate
//!
//! [demand]
//! cf_rate = 0.0             # uniform R2R demand for `provision`, bits/s
//! mf_rate = 3.2e9
//!
//! [workload]
//! load = 0.5
//! duration = 1.0
//!
//! [network]
//! mf_rate = 5e9
//!
//! [queueing]
//! hops = 3
//! service = { law = "exponential", mean = 1e-3 }
//!
//! [sweep]
//! loads = [0.25, 0.5, 0.75, 1.0]
//! flats = [0.2]
//! t_qos = [2e-3, 5e-3]
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::groom::{FlowClass, R2rDemand};
use crate::milp::{BruteLimits, CapacityModel, DemandMatrix, MilpOptions, Objective};
use crate::queue::TrafficMix;
use crate::sim::linkfct::LinkFctConfig;
use crate::sim::network::{calibrated_state, NetworkConfig, Policy};
use crate::sim::queueing::{Discipline, ServiceLaw, TandemConfig};
use crate::sim::workload::WorkloadConfig;
use crate::topo::{PhysicalTopology, ResourceState, TopologyConfig};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("invalid configuration: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    #[serde(default = "d_name")]
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    pub topology: TopologyConfig,
    #[serde(default)]
    pub resources: ResourceSpec,
    #[serde(default)]
    pub demand: DemandSpec,
    #[serde(default)]
    pub workload: WorkloadConfig,
    #[serde(default)]
    pub network: NetworkSpec,
    #[serde(default = "d_policies")]
    pub policies: Vec<Policy>,
    #[serde(default)]
    pub queueing: QueueingSpec,
    #[serde(default)]
    pub link_fct: Option<LinkFctConfig>,
    #[serde(default)]
    pub sweep: Sweep,
    #[serde(default)]
    pub milp: Option<MilpSpec>,
    /// Output directory; `--out` wins.
    #[serde(default)]
    pub out: Option<PathBuf>,
}

fn d_name() -> String {
    "experiment".into()
}
fn d_policies() -> Vec<Policy> {
    Policy::ALL.to_vec()
}

/// Intensity budget. Explicit values win over calibration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResourceSpec {
    #[serde(default = "d_link_rate")]
    pub link_rate: f64,
    #[serde(default)]
    pub max_intensity: Option<f64>,
    #[serde(default)]
    pub total_intensity: Option<f64>,
}

fn d_link_rate() -> f64 {
    10e9
}

impl Default for ResourceSpec {
    fn default() -> Self {
        Self {
            link_rate: d_link_rate(),
            max_intensity: None,
            total_intensity: None,
        }
    }
}

/// Uniform R2R demand used by `provision`, bits/s per ordered pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemandSpec {
    #[serde(default)]
    pub cf_rate: f64,
    #[serde(default = "d_mf_rate")]
    pub mf_rate: f64,
    /// Take the peak groomed demand of the workload instead.
    #[serde(default)]
    pub from_workload: bool,
}

fn d_mf_rate() -> f64 {
    3.2e9
}

impl Default for DemandSpec {
    fn default() -> Self {
        Self {
            cf_rate: 0.0,
            mf_rate: d_mf_rate(),
            from_workload: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    #[serde(default)]
    pub mf_rate: Option<f64>,
    #[serde(default)]
    pub cf_rate: Option<f64>,
    #[serde(default = "d_discipline")]
    pub discipline: Discipline,
    #[serde(default)]
    pub ecmp_rate: Option<f64>,
    #[serde(default = "d_legacy")]
    pub legacy_rate: f64,
    #[serde(default = "d_cap")]
    pub queue_cap: usize,
    #[serde(default)]
    pub check_invariants: bool,
    #[serde(default)]
    pub log_decisions: bool,
}

fn d_discipline() -> Discipline {
    Discipline::TwoPriority
}
fn d_legacy() -> f64 {
    1e9
}
fn d_cap() -> usize {
    10_000_000
}

impl Default for NetworkSpec {
    fn default() -> Self {
        Self {
            mf_rate: None,
            cf_rate: None,
            discipline: d_discipline(),
            ecmp_rate: None,
            legacy_rate: d_legacy(),
            queue_cap: d_cap(),
            check_invariants: false,
            log_decisions: false,
        }
    }
}

/// Isolated tandem of priority queues.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QueueingSpec {
    #[serde(default = "d_hops")]
    pub hops: usize,
    #[serde(default = "d_service")]
    pub service: ServiceLaw,
    #[serde(default)]
    pub propagation: f64,
    #[serde(default = "d_packets")]
    pub packets: u64,
    /// Fraction of packets that originate from EFs.
    #[serde(default = "d_ef_share")]
    pub ef_share: f64,
    #[serde(default = "d_replications")]
    pub replications: usize,
    #[serde(default = "d_cap")]
    pub queue_cap: usize,
}

fn d_hops() -> usize {
    1
}
fn d_service() -> ServiceLaw {
    ServiceLaw::Exponential { mean: 1e-3 }
}
fn d_packets() -> u64 {
    1_000_000
}
fn d_ef_share() -> f64 {
    0.2
}
fn d_replications() -> usize {
    1
}

impl Default for QueueingSpec {
    fn default() -> Self {
        Self {
            hops: d_hops(),
            service: d_service(),
            propagation: 0.0,
            packets: d_packets(),
            ef_share: d_ef_share(),
            replications: d_replications(),
            queue_cap: d_cap(),
        }
    }
}

impl QueueingSpec {
    /// Mix at total utilisation `rho` with EF packets kept low w.p. `flat`.
    pub fn mix(&self, rho: f64, flat: f64) -> Result<TrafficMix, ConfigError> {
        let lambda = rho / self.service.mean();
        TrafficMix::new(lambda * (1.0 - self.ef_share), lambda * self.ef_share, flat)
            .map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    pub fn tandem(&self, seed: u64, rho: f64, flat: f64) -> Result<TandemConfig, ConfigError> {
        let mut c = TandemConfig::new(seed, self.hops, self.mix(rho, flat)?, self.service, self.packets);
        c.propagation = self.propagation;
        c.queue_cap = self.queue_cap;
        Ok(c)
    }
}

/// Sweep axes. `loads` is the workload load in network mode and the total
/// utilisation in queueing mode. An empty `wavelengths` keeps the
/// topology's W; an empty `t_qos` uses multiples of the mean delay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    #[serde(default = "d_loads")]
    pub loads: Vec<f64>,
    #[serde(default = "d_flats")]
    pub flats: Vec<f64>,
    #[serde(default)]
    pub wavelengths: Vec<usize>,
    #[serde(default)]
    pub t_qos: Vec<f64>,
}

fn d_loads() -> Vec<f64> {
    vec![0.25, 0.5, 0.75, 1.0]
}
fn d_flats() -> Vec<f64> {
    vec![0.2]
}

impl Default for Sweep {
    fn default() -> Self {
        Self {
            loads: d_loads(),
            flats: d_flats(),
            wavelengths: Vec::new(),
            t_qos: Vec::new(),
        }
    }
}

/// Server given as (rack, index in rack).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MilpFlowSpec {
    pub src: [usize; 2],
    pub dst: [usize; 2],
    /// bits/s
    pub demand: f64,
    #[serde(default = "d_class")]
    pub class: FlowClass,
}

fn d_class() -> FlowClass {
    FlowClass::Mice
}

/// Tiny instance for the exact model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MilpSpec {
    #[serde(default)]
    pub flows: Vec<MilpFlowSpec>,
    #[serde(default = "d_objective")]
    pub objective: Objective,
    #[serde(default)]
    pub capacity: CapacityModel,
    #[serde(default)]
    pub brute: BruteLimits,
}

fn d_objective() -> Objective {
    Objective::MaxAdmitted
}

impl MilpSpec {
    pub fn demand(&self, topo: &PhysicalTopology) -> Result<DemandMatrix, ConfigError> {
        let mut m = DemandMatrix::new();
        for (t, f) in self.flows.iter().enumerate() {
            let node = |[r, k]: [usize; 2]| {
                if r < topo.leaves() && k < topo.servers_per_rack() {
                    Ok(topo.server(r, k))
                } else {
                    Err(ConfigError::Invalid(format!("milp flow {t}: no server {k} in rack {r}")))
                }
            };
            m.push(node(f.src)?, node(f.dst)?, f.demand, f.class);
        }
        Ok(m)
    }

    pub fn options(&self, state: &ResourceState) -> MilpOptions {
        MilpOptions {
            objective: self.objective,
            capacity: self.capacity,
            ..MilpOptions::from_state(state)
        }
    }
}

impl ExperimentSpec {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let spec: Self = toml::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        self.topology
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if !(self.resources.link_rate > 0.0) {
            return bad("resources.link_rate must be positive".into());
        }
        for (n, v) in [
            ("resources.max_intensity", self.resources.max_intensity),
            ("resources.total_intensity", self.resources.total_intensity),
        ] {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return bad(format!("{n} must be positive"));
                }
            }
        }
        if !(self.demand.cf_rate >= 0.0 && self.demand.mf_rate >= 0.0) {
            return bad("demand rates must be >= 0".into());
        }
        if self.queueing.hops == 0 || self.queueing.packets == 0 || self.queueing.replications == 0 {
            return bad("queueing.hops, packets and replications must be >= 1".into());
        }
        if !(0.0..=1.0).contains(&self.queueing.ef_share) {
            return bad("queueing.ef_share must be in [0, 1]".into());
        }
        if self.sweep.loads.iter().any(|l| !(*l >= 0.0 && l.is_finite())) {
            return bad("sweep.loads must be finite and >= 0".into());
        }
        if self.sweep.flats.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return bad("sweep.flats must lie in [0, 1]".into());
        }
        if self.sweep.t_qos.iter().any(|t| !(*t >= 0.0)) {
            return bad("sweep.t_qos must be >= 0".into());
        }
        Ok(())
    }

    /// Topology configs of the wavelength sweep.
    pub fn topologies(&self) -> Vec<TopologyConfig> {
        if self.sweep.wavelengths.is_empty() {
            return vec![self.topology.clone()];
        }
        self.sweep
            .wavelengths
            .iter()
            .map(|&w| TopologyConfig {
                wavelengths: w,
                ..self.topology.clone()
            })
            .collect()
    }

    pub fn resource_state(&self, topo: &PhysicalTopology) -> ResourceState {
        let cal = calibrated_state(topo, self.resources.link_rate);
        let total = self.resources.total_intensity.unwrap_or(cal.total_intensity());
        let max = self.resources.max_intensity.unwrap_or(total);
        ResourceState::new(topo, max, total)
    }

    /// Uniform demand matrix of the `[demand]` block, bits per epoch.
    pub fn uniform_demand(&self, leaves: usize) -> R2rDemand {
        let tau = self.workload.tau_h;
        R2rDemand::uniform(leaves, self.demand.cf_rate * tau, self.demand.mf_rate * tau)
    }

    pub fn network(&self, policy: Policy, load: f64) -> NetworkConfig {
        let n = &self.network;
        NetworkConfig {
            seed: self.seed,
            policy,
            workload: WorkloadConfig {
                load,
                ..self.workload.clone()
            },
            mf_rate: n.mf_rate,
            cf_rate: n.cf_rate,
            discipline: n.discipline,
            ecmp_rate: n.ecmp_rate,
            legacy_rate: n.legacy_rate,
            queue_cap: n.queue_cap,
            check_invariants: n.check_invariants,
            log_decisions: n.log_decisions,
        }
    }
}
