//! Flow-level network simulation with a provisioning policy in the loop.
//!
//! TG-FSO: CF/MF are groomed per epoch and sent over always-on R2R
//! lightpaths after passing the source edge switch's digital cross-connect;
//! EFs get express lightpaths and wait (shortest job first) when blocked.
//! ECMP variants: every flow takes one fixed-rate channel per hop on a
//! path hashed from its id, waiting in arrival order when a hop is full.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::queueing::Discipline;
use super::workload::{self, WorkloadConfig};
use super::{mean, percentile, EventQueue, SimError};
use crate::channel;
use crate::groom::{
    groom_3step, provision_ef_at, provision_r2r, sjf_cmp, teardown, EfOutcome, Flow, FlowClass,
    Lightpath, PolicyLog, R2rDemand,
};
use crate::topo::{LinkId, PhysicalTopology, ResourceState, Wavelength};

const LIGHT_SPEED: f64 = 3e8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Policy {
    #[serde(rename = "tg-fso")]
    TgFso,
    #[serde(rename = "ecmp-fso")]
    EcmpFso,
    #[serde(rename = "ecmp-legacy")]
    EcmpLegacy,
}

impl Policy {
    pub const ALL: [Policy; 3] = [Policy::TgFso, Policy::EcmpFso, Policy::EcmpLegacy];

    pub fn name(self) -> &'static str {
        match self {
            Policy::TgFso => "tg-fso",
            Policy::EcmpFso => "ecmp-fso",
            Policy::EcmpLegacy => "ecmp-legacy",
        }
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Policy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Policy::ALL
            .into_iter()
            .find(|p| p.name() == s.to_ascii_lowercase())
            .ok_or_else(|| format!("unknown policy {s:?} (expected tg-fso, ecmp-fso or ecmp-legacy)"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    #[serde(default)]
    pub seed: u64,
    pub policy: Policy,
    #[serde(default)]
    pub workload: WorkloadConfig,
    /// Rate provisioned on the MF lightpath of every communicating pair.
    /// Unset: the peak groomed per-epoch demand of the generated workload.
    #[serde(default)]
    pub mf_rate: Option<f64>,
    #[serde(default)]
    pub cf_rate: Option<f64>,
    /// Order at the source cross-connect.
    #[serde(default = "d_discipline")]
    pub discipline: Discipline,
    /// Per-wavelength rate under ECMP-FSO. Unset: link rate / W.
    #[serde(default)]
    pub ecmp_rate: Option<f64>,
    /// Link rate of the legacy network (one channel per link).
    #[serde(default = "d_legacy_rate")]
    pub legacy_rate: f64,
    #[serde(default = "d_cap")]
    pub queue_cap: usize,
    /// Assert the resource invariants after every mutation.
    #[serde(default)]
    pub check_invariants: bool,
    /// Keep a decision log of EF provisioning.
    #[serde(default)]
    pub log_decisions: bool,
}

fn d_discipline() -> Discipline {
    Discipline::TwoPriority
}
fn d_legacy_rate() -> f64 {
    1e9
}
fn d_cap() -> usize {
    10_000_000
}

impl NetworkConfig {
    pub fn new(seed: u64, policy: Policy, workload: WorkloadConfig) -> Self {
        Self {
            seed,
            policy,
            workload,
            mf_rate: None,
            cf_rate: None,
            discipline: d_discipline(),
            ecmp_rate: None,
            legacy_rate: d_legacy_rate(),
            queue_cap: d_cap(),
            check_invariants: false,
            log_decisions: false,
        }
    }
}

/// Outcome of one flow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowRecord {
    pub id: u64,
    pub class: FlowClass,
    pub src_rack: usize,
    pub dst_rack: usize,
    pub bytes: u64,
    pub arrival: f64,
    /// When the flow was handed to the network: end of its grooming epoch
    /// for CF/MF under TG-FSO, the arrival otherwise.
    pub release: f64,
    /// Transmission start on the lightpath or wavelength.
    pub start: f64,
    pub finish: f64,
    /// Rate of the lightpath or wavelength that carried it.
    pub rate: f64,
    pub deadline: f64,
}

impl FlowRecord {
    pub fn fct(&self) -> f64 {
        self.finish - self.arrival
    }

    pub fn epoch_delay(&self) -> f64 {
        self.release - self.arrival
    }

    /// Time from release to completion; compared against the deadline.
    pub fn sojourn(&self) -> f64 {
        self.finish - self.release
    }

    pub fn met_deadline(&self) -> bool {
        self.sojourn() <= self.deadline
    }

    /// Bits over the time spent transmitting, i.e. the carrying rate.
    pub fn throughput(&self) -> f64 {
        self.rate
    }

    /// Bits over the whole completion time.
    pub fn goodput(&self) -> f64 {
        self.bytes as f64 * 8.0 / self.fct()
    }
}

/// Usage of one always-on R2R lightpath.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LightpathUsage {
    pub class: FlowClass,
    pub src_rack: usize,
    pub dst_rack: usize,
    pub route: String,
    pub wavelength: usize,
    pub capacity: f64,
    pub bits: f64,
    pub busy: f64,
}

impl LightpathUsage {
    pub fn throughput(&self) -> f64 {
        if self.busy > 0.0 {
            self.bits / self.busy
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct NetworkMetrics {
    pub flows: Vec<FlowRecord>,
    /// CF/MF whose rack pair has no capacity.
    pub unserved: Vec<u64>,
    pub lightpaths: Vec<LightpathUsage>,
    /// Provisioning attempts that found no lightpath.
    pub blocked_attempts: usize,
    pub max_waiting: usize,
    /// Time integral of the number of waiting flows.
    pub waiting_area: f64,
    /// Largest number of groomed batches queued at one cross-connect.
    pub max_dxc_backlog: usize,
    pub horizon: f64,
    pub invariant_checks: usize,
    pub repairs: usize,
    pub log: Option<PolicyLog>,
}

/// Aggregates of one run, one row of a comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSummary {
    pub policy: Policy,
    pub load: f64,
    pub seed: u64,
    pub mf_flows: usize,
    pub mf_fct_mean: f64,
    pub mf_fct_p99: f64,
    pub mf_epoch_delay_mean: f64,
    pub mf_deadline_met: f64,
    pub cf_flows: usize,
    pub cf_fct_mean: f64,
    pub ef_flows: usize,
    pub ef_fct_mean: f64,
    pub ef_fct_p99: f64,
    pub ef_throughput_mean: f64,
    pub ef_goodput_mean: f64,
    pub ef_deadline_met: f64,
    pub unserved: usize,
    pub blocked_attempts: usize,
    pub mean_waiting: f64,
    pub max_waiting: usize,
}

impl NetworkMetrics {
    pub fn of_class(&self, class: FlowClass) -> impl Iterator<Item = &FlowRecord> + '_ {
        self.flows.iter().filter(move |f| f.class == class)
    }

    pub fn summary(&self, policy: Policy, load: f64, seed: u64) -> NetworkSummary {
        let col = |class, f: &dyn Fn(&FlowRecord) -> f64| -> Vec<f64> { self.of_class(class).map(f).collect() };
        let frac = |class| {
            let n = self.of_class(class).count();
            if n == 0 {
                1.0
            } else {
                self.of_class(class).filter(|f| f.met_deadline()).count() as f64 / n as f64
            }
        };
        let mf = col(FlowClass::Mice, &FlowRecord::fct);
        let ef = col(FlowClass::Elephant, &FlowRecord::fct);
        NetworkSummary {
            policy,
            load,
            seed,
            mf_flows: mf.len(),
            mf_fct_mean: mean(&mf),
            mf_fct_p99: percentile(&mf, 99.0),
            mf_epoch_delay_mean: mean(&col(FlowClass::Mice, &FlowRecord::epoch_delay)),
            mf_deadline_met: frac(FlowClass::Mice),
            cf_flows: self.of_class(FlowClass::Critical).count(),
            cf_fct_mean: mean(&col(FlowClass::Critical, &FlowRecord::fct)),
            ef_flows: ef.len(),
            ef_fct_mean: mean(&ef),
            ef_fct_p99: percentile(&ef, 99.0),
            ef_throughput_mean: mean(&col(FlowClass::Elephant, &FlowRecord::throughput)),
            ef_goodput_mean: mean(&col(FlowClass::Elephant, &FlowRecord::goodput)),
            ef_deadline_met: frac(FlowClass::Elephant),
            unserved: self.unserved.len(),
            blocked_attempts: self.blocked_attempts,
            mean_waiting: if self.horizon > 0.0 {
                self.waiting_area / self.horizon
            } else {
                0.0
            },
            max_waiting: self.max_waiting,
        }
    }
}

/// Resource state with (E, E_T) calibrated so that W equal shares on the
/// weakest ES-CS link add up to `link_rate`.
pub fn calibrated_state(topo: &PhysicalTopology, link_rate: f64) -> ResourceState {
    let gain = topo
        .links()
        .iter()
        .filter(|l| !topo.is_server(l.from) && !topo.is_server(l.to))
        .map(|l| l.gain)
        .fold(f64::INFINITY, f64::min);
    let lim = channel::calibrate_max_intensity(link_rate, gain, topo.bandwidth(), topo.wavelengths());
    ResourceState::new(topo, lim.per_wavelength, lim.total)
}

fn propagation(topo: &PhysicalTopology, links: &[LinkId]) -> f64 {
    links.iter().map(|&l| topo.link(l).distance).sum::<f64>() / LIGHT_SPEED
}

/// Demand the TG-FSO policy provisions for.
pub fn tg_demand(topo: &PhysicalTopology, cfg: &NetworkConfig, flows: &[Flow]) -> Result<R2rDemand, SimError> {
    let n = topo.leaves();
    let tau = cfg.workload.tau_h;
    let mut demand = R2rDemand::zero(n);
    for (class, rate) in [(FlowClass::Critical, cfg.cf_rate), (FlowClass::Mice, cfg.mf_rate)] {
        let members: Vec<Flow> = flows.iter().filter(|f| f.class == class).cloned().collect();
        let g = groom_3step(topo, &members, class, tau).map_err(|e| SimError::Config(e.to_string()))?;
        let peak = R2rDemand::from_groomed(n, &g.r2r);
        for i in 0..n {
            for j in (0..n).filter(|&j| j != i) {
                let p = peak.get(class, i, j);
                let bits = match rate {
                    Some(r) if p > 0.0 => r * tau,
                    _ => p,
                };
                demand.set(class, i, j, bits);
            }
        }
    }
    Ok(demand)
}

/// Generate the workload and run it under `cfg.policy`.
pub fn run(topo: &PhysicalTopology, cfg: &NetworkConfig) -> Result<NetworkMetrics, SimError> {
    cfg.workload.validate(topo).map_err(SimError::Config)?;
    let flows = workload::generate(topo, &cfg.workload, cfg.seed);
    run_flows(topo, cfg, &flows)
}

/// Run a given flow list (sorted by arrival).
pub fn run_flows(topo: &PhysicalTopology, cfg: &NetworkConfig, flows: &[Flow]) -> Result<NetworkMetrics, SimError> {
    match cfg.policy {
        Policy::TgFso => TgSim::new(topo, cfg, flows)?.run(),
        Policy::EcmpFso => {
            let rate = cfg
                .ecmp_rate
                .unwrap_or(cfg.workload.link_rate / topo.wavelengths() as f64);
            EcmpSim::new(topo, cfg, flows, rate, topo.wavelengths()).run()
        }
        Policy::EcmpLegacy => EcmpSim::new(topo, cfg, flows, cfg.legacy_rate, 1).run(),
    }
}

#[derive(Debug, Clone, Copy)]
enum Ev {
    Done(usize),
    Epoch(u64),
    Arrive(usize),
}

fn rank(ev: &Ev) -> u8 {
    match ev {
        Ev::Done(_) => 0,
        Ev::Epoch(_) => 1,
        Ev::Arrive(_) => 2,
    }
}

struct Waiting {
    list: Vec<usize>,
    last: f64,
}

impl Waiting {
    fn touch(&mut self, now: f64, m: &mut NetworkMetrics) {
        m.waiting_area += self.list.len() as f64 * (now - self.last);
        self.last = now;
    }
}

struct R2rLink {
    lp: Lightpath,
    prop: f64,
    free_at: f64,
    bits: f64,
    busy: f64,
}

struct TgSim<'a> {
    topo: &'a PhysicalTopology,
    cfg: &'a NetworkConfig,
    flows: &'a [Flow],
    state: ResourceState,
    r2r: HashMap<(FlowClass, usize, usize), R2rLink>,
    dxc_free: Vec<f64>,
    pending: BTreeMap<u64, Vec<usize>>,
    active: HashMap<usize, Lightpath>,
    waiting: Waiting,
    events: EventQueue<Ev>,
    m: NetworkMetrics,
}

impl<'a> TgSim<'a> {
    fn new(topo: &'a PhysicalTopology, cfg: &'a NetworkConfig, flows: &'a [Flow]) -> Result<Self, SimError> {
        let mut state = calibrated_state(topo, cfg.workload.link_rate);
        let demand = tg_demand(topo, cfg, flows)?;
        let plan = provision_r2r(topo, &mut state, &demand, cfg.workload.tau_h)?;
        let r2r = plan
            .lightpaths
            .into_iter()
            .map(|lp| {
                let key = (lp.class, lp.src_rack, lp.dst_rack);
                let prop = propagation(topo, &lp.links);
                (
                    key,
                    R2rLink {
                        lp,
                        prop,
                        free_at: 0.0,
                        bits: 0.0,
                        busy: 0.0,
                    },
                )
            })
            .collect();
        let m = NetworkMetrics {
            repairs: plan.repairs,
            log: cfg.log_decisions.then(PolicyLog::new),
            ..Default::default()
        };
        Ok(Self {
            topo,
            cfg,
            flows,
            state,
            r2r,
            dxc_free: vec![0.0; topo.leaves()],
            pending: BTreeMap::new(),
            active: HashMap::new(),
            waiting: Waiting {
                list: Vec::new(),
                last: 0.0,
            },
            events: EventQueue::new(),
            m,
        })
    }

    fn push(&mut self, time: f64, ev: Ev) {
        self.events.push(time, rank(&ev), ev);
    }

    fn check(&mut self) {
        if self.cfg.check_invariants {
            if let Err(e) = self.state.check_invariants() {
                panic!("resource invariant violated: {e}");
            }
            self.m.invariant_checks += 1;
        }
    }

    fn run(mut self) -> Result<NetworkMetrics, SimError> {
        let tau = self.cfg.workload.tau_h;
        let mut epochs = BTreeSet::new();
        for (k, f) in self.flows.iter().enumerate() {
            self.push(f.arrival, Ev::Arrive(k));
            if f.class.is_groomed() {
                epochs.insert((f.arrival / tau).floor() as u64);
            }
        }
        for e in epochs {
            self.push((e + 1) as f64 * tau, Ev::Epoch(e));
        }
        while let Some((now, ev)) = self.events.pop() {
            self.waiting.touch(now, &mut self.m);
            match ev {
                Ev::Arrive(k) => self.arrive(now, k)?,
                Ev::Epoch(e) => self.epoch(now, e),
                Ev::Done(k) => self.done(now, k)?,
            }
            self.m.horizon = now;
        }
        for link in self.r2r.values() {
            self.m.lightpaths.push(LightpathUsage {
                class: link.lp.class,
                src_rack: link.lp.src_rack,
                dst_rack: link.lp.dst_rack,
                route: link.lp.route_label(),
                wavelength: link.lp.wavelength.number(),
                capacity: link.lp.capacity,
                bits: link.bits,
                busy: link.busy,
            });
        }
        self.m
            .lightpaths
            .sort_by(|a, b| (a.class, a.src_rack, a.dst_rack).cmp(&(b.class, b.src_rack, b.dst_rack)));
        self.m.flows.sort_by_key(|f| f.id);
        Ok(self.m)
    }

    fn arrive(&mut self, now: f64, k: usize) -> Result<(), SimError> {
        let f = &self.flows[k];
        if f.class.is_groomed() {
            let e = (f.arrival / self.cfg.workload.tau_h).floor() as u64;
            self.pending.entry(e).or_default().push(k);
            return Ok(());
        }
        if !self.try_ef(now, k) {
            self.m.blocked_attempts += 1;
            self.waiting.list.push(k);
            self.m.max_waiting = self.m.max_waiting.max(self.waiting.list.len());
            if self.waiting.list.len() > self.cfg.queue_cap {
                return Err(SimError::Unstable {
                    location: "EF wait queue".into(),
                    cap: self.cfg.queue_cap,
                    time: now,
                });
            }
        }
        Ok(())
    }

    fn try_ef(&mut self, now: f64, k: usize) -> bool {
        let f = &self.flows[k];
        let out = provision_ef_at(self.topo, &mut self.state, f, now, self.m.log.as_mut());
        self.check();
        match out {
            EfOutcome::Provisioned(lp) => {
                let tx = f.bits() / lp.capacity;
                let finish = now + tx + propagation(self.topo, &lp.links);
                self.m.flows.push(FlowRecord {
                    id: f.id,
                    class: f.class,
                    src_rack: lp.src_rack,
                    dst_rack: lp.dst_rack,
                    bytes: f.bytes,
                    arrival: f.arrival,
                    release: f.arrival,
                    start: now,
                    finish,
                    rate: lp.capacity,
                    deadline: f.deadline,
                });
                self.active.insert(k, lp);
                self.push(finish, Ev::Done(k));
                true
            }
            EfOutcome::Blocked => false,
        }
    }

    fn done(&mut self, now: f64, k: usize) -> Result<(), SimError> {
        let lp = self.active.remove(&k).expect("active EF");
        teardown(&mut self.state, &lp);
        if let Some(log) = self.m.log.as_mut() {
            log.record(now, self.flows[k].id, "teardown", Some(&lp));
        }
        self.check();
        let mut order = std::mem::take(&mut self.waiting.list);
        order.sort_by(|&a, &b| sjf_cmp(&self.flows[a], &self.flows[b]));
        for w in order {
            if !self.try_ef(now, w) {
                self.m.blocked_attempts += 1;
                self.waiting.list.push(w);
            }
        }
        Ok(())
    }

    fn epoch(&mut self, now: f64, e: u64) {
        let Some(members) = self.pending.remove(&e) else {
            return;
        };
        let tau = self.cfg.workload.tau_h;
        let mut batches = Vec::new();
        for class in [FlowClass::Critical, FlowClass::Mice] {
            let fl: Vec<Flow> = members
                .iter()
                .map(|&k| &self.flows[k])
                .filter(|f| f.class == class)
                .cloned()
                .collect();
            if fl.is_empty() {
                continue;
            }
            let g = groom_3step(self.topo, &fl, class, tau).expect("groomable flows");
            batches.extend(g.r2r);
        }
        let by_id: HashMap<u64, &Flow> = members.iter().map(|&k| (self.flows[k].id, &self.flows[k])).collect();
        let first_arrival = |b: &crate::groom::GroomedFlow| {
            b.members
                .iter()
                .map(|id| by_id[id].arrival)
                .fold(f64::INFINITY, f64::min)
        };
        match self.cfg.discipline {
            Discipline::TwoPriority => batches.sort_by(|a, b| {
                (a.src_rack, a.class, a.dst_rack).cmp(&(b.src_rack, b.class, b.dst_rack))
            }),
            Discipline::SingleQueue => batches.sort_by(|a, b| {
                a.src_rack
                    .cmp(&b.src_rack)
                    .then(first_arrival(a).total_cmp(&first_arrival(b)))
                    .then(a.dst_rack.cmp(&b.dst_rack))
            }),
        }
        let dxc_rate = self.topo.config().dxc_rate;
        let mut backlog: HashMap<usize, usize> = HashMap::new();
        for b in batches {
            let link = self.r2r.get_mut(&(b.class, b.src_rack, b.dst_rack)).expect("lightpath per pair");
            let bits = b.bits();
            if !(link.lp.capacity > 0.0) {
                self.m.unserved.extend_from_slice(&b.members);
                continue;
            }
            let dxc_start = now.max(self.dxc_free[b.src_rack]);
            let dxc_done = dxc_start + bits / dxc_rate;
            self.dxc_free[b.src_rack] = dxc_done;
            let q = backlog.entry(b.src_rack).or_default();
            *q += 1;
            self.m.max_dxc_backlog = self.m.max_dxc_backlog.max(*q);
            let start = dxc_done.max(link.free_at);
            let tx = bits / link.lp.capacity;
            link.free_at = start + tx;
            link.bits += bits;
            link.busy += tx;
            let finish = start + tx + link.prop;
            for id in &b.members {
                let f = by_id[id];
                self.m.flows.push(FlowRecord {
                    id: f.id,
                    class: f.class,
                    src_rack: b.src_rack,
                    dst_rack: b.dst_rack,
                    bytes: f.bytes,
                    arrival: f.arrival,
                    release: now,
                    start,
                    finish,
                    rate: link.lp.capacity,
                    deadline: f.deadline,
                });
            }
        }
    }
}

/// Deterministic hash for ECMP path choice.
pub fn ecmp_hash(seed: u64, flow: u64) -> u64 {
    let mut z = seed ^ flow.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Per-link channel occupancy for the ECMP baselines. Switches are
/// electronic, so a flow holds any free channel on each hop independently.
struct EcmpSim<'a> {
    topo: &'a PhysicalTopology,
    cfg: &'a NetworkConfig,
    flows: &'a [Flow],
    rate: f64,
    channels: usize,
    state: ResourceState,
    active: HashMap<usize, [(LinkId, Wavelength); 4]>,
    /// Flows waiting on a saturated link, in arrival order.
    parked: HashMap<LinkId, VecDeque<usize>>,
    waiting: usize,
    last: f64,
    events: EventQueue<Ev>,
    m: NetworkMetrics,
}

impl<'a> EcmpSim<'a> {
    fn new(topo: &'a PhysicalTopology, cfg: &'a NetworkConfig, flows: &'a [Flow], rate: f64, channels: usize) -> Self {
        Self {
            topo,
            cfg,
            flows,
            rate,
            channels: channels.min(topo.wavelengths()),
            state: ResourceState::new(topo, 1.0, 1.0),
            active: HashMap::new(),
            parked: HashMap::new(),
            waiting: 0,
            last: 0.0,
            events: EventQueue::new(),
            m: NetworkMetrics::default(),
        }
    }

    fn run(mut self) -> Result<NetworkMetrics, SimError> {
        for (k, f) in self.flows.iter().enumerate() {
            self.events.push(f.arrival, 2, Ev::Arrive(k));
        }
        while let Some((now, ev)) = self.events.pop() {
            self.m.waiting_area += self.waiting as f64 * (now - self.last);
            self.last = now;
            match ev {
                Ev::Arrive(k) => {
                    if let Err(full) = self.try_start(now, k) {
                        self.m.blocked_attempts += 1;
                        self.park(now, full, k)?;
                    }
                }
                Ev::Done(k) => {
                    let held = self.active.remove(&k).expect("active flow");
                    for (l, w) in held {
                        self.state.release(l, w);
                    }
                    self.check();
                    for (l, _) in held {
                        self.wake(now, l)?;
                    }
                }
                Ev::Epoch(_) => unreachable!("no grooming epochs under ECMP"),
            }
            self.m.horizon = now;
        }
        self.m.flows.sort_by_key(|f| f.id);
        Ok(self.m)
    }

    fn park(&mut self, now: f64, link: LinkId, k: usize) -> Result<(), SimError> {
        self.parked.entry(link).or_default().push_back(k);
        self.waiting += 1;
        self.m.max_waiting = self.m.max_waiting.max(self.waiting);
        if self.waiting > self.cfg.queue_cap {
            return Err(SimError::Unstable {
                location: format!("{} wait queue", self.cfg.policy),
                cap: self.cfg.queue_cap,
                time: now,
            });
        }
        Ok(())
    }

    /// Admit flows parked on `link` while it has a free channel.
    fn wake(&mut self, now: f64, link: LinkId) -> Result<(), SimError> {
        while self.channel(link).is_some() {
            let Some(k) = self.parked.get_mut(&link).and_then(|q| q.pop_front()) else {
                break;
            };
            self.waiting -= 1;
            if let Err(full) = self.try_start(now, k) {
                self.park(now, full, k)?;
            }
        }
        Ok(())
    }

    fn channel(&self, link: LinkId) -> Option<Wavelength> {
        self.state
            .free_set(link)
            .iter()
            .find(|w| w.number() <= self.channels)
    }

    fn check(&mut self) {
        if self.cfg.check_invariants {
            if let Err(e) = self.state.check_invariants() {
                panic!("resource invariant violated: {e}");
            }
            self.m.invariant_checks += 1;
        }
    }

    /// Start flow `k` or name the first saturated link on its path.
    fn try_start(&mut self, now: f64, k: usize) -> Result<(), LinkId> {
        let f = &self.flows[k];
        let spine = (ecmp_hash(self.cfg.seed, f.id) % self.topo.spines() as u64) as usize;
        let links = self.topo.server_route(f.src, f.dst, spine);
        let mut held = [(LinkId(0), Wavelength::from_index(0)); 4];
        for (h, &l) in links.iter().enumerate() {
            held[h] = (l, self.channel(l).ok_or(l)?);
        }
        for (l, w) in held {
            self.state.reserve(l, w, 0.0).expect("free channel");
        }
        self.check();
        let finish = now + f.bits() / self.rate + propagation(self.topo, &links);
        self.m.flows.push(FlowRecord {
            id: f.id,
            class: f.class,
            src_rack: self.topo.rack_of(f.src).expect("server"),
            dst_rack: self.topo.rack_of(f.dst).expect("server"),
            bytes: f.bytes,
            arrival: f.arrival,
            release: f.arrival,
            start: now,
            finish,
            rate: self.rate,
            deadline: f.deadline,
        });
        self.active.insert(k, held);
        self.events.push(finish, 0, Ev::Done(k));
        Ok(())
    }
}
