//! Exact traffic-grooming MILP for tiny instances.
//!
//! [`build_instance`] writes out every variable and constraint family of the
//! joint routing / wavelength / grooming / intensity problem. The model is
//! not solved here: it is exported in CPLEX LP text ([`export_lp`]), checked
//! against candidate assignments with the true capacity curve
//! ([`check_solution`]), and enumerated exhaustively on instances with a
//! handful of flows ([`brute_force_optimum`]).
//!
//! Lightpaths run between grooming nodes (servers and edge switches). A pair
//! of grooming nodes has a fixed up-down hop count: 1 for server and own edge
//! switch, 2 between edge switches, 4 between servers of different racks.
//! A flow reaches its destination either on one server-to-server lightpath
//! or on a chain `server -> ES -> ES -> server`.

mod brute;
mod check;
mod convert;
mod lp;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel;
use crate::groom::FlowClass;
use crate::topo::{LinkId, NodeId, PhysicalTopology, ResourceState, Role};

pub use brute::{brute_force_optimum, BruteLimits, BruteResult, IntensitySearch};
pub use check::{check_solution, CheckReport, Violation};
pub use convert::{heuristic_candidate, HeuristicResult};
pub use lp::{dump_instance, export_lp, write_lp, InstanceDump, RowDump, VarDump};

#[derive(Debug, Error)]
pub enum MilpError {
    #[error("flow {flow}: {node} is not a server")]
    UnknownServer { flow: usize, node: NodeId },
    #[error("flow {flow}: source and destination coincide")]
    SelfFlow { flow: usize },
    #[error("flow {flow}: demand must be finite and >= 0")]
    Demand { flow: usize },
    #[error("invalid options: {0}")]
    Options(String),
    #[error("instance too large for enumeration: {0}")]
    Limits(String),
    #[error("assignment does not fit the instance: {0}")]
    Assignment(String),
    #[error("I/O: {0}")]
    Io(#[from] std::io::Error),
}

/// One flow request, bits/s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MilpFlow {
    pub src: NodeId,
    pub dst: NodeId,
    pub demand: f64,
    /// Only the heuristic looks at the class.
    pub class: FlowClass,
}

/// Flow requests indexed by insertion order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DemandMatrix {
    pub flows: Vec<MilpFlow>,
}

impl DemandMatrix {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, src: NodeId, dst: NodeId, demand: f64, class: FlowClass) -> usize {
        self.flows.push(MilpFlow {
            src,
            dst,
            demand,
            class,
        });
        self.flows.len() - 1
    }

    pub fn len(&self) -> usize {
        self.flows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flows.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// Maximise the admitted demand.
    MaxAdmitted,
    /// Admit every flow with the least total intensity.
    MinIntensity,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum CapacityModel {
    /// Capacity bounded by tangents of its concave envelope.
    Piecewise { breakpoints: usize },
    /// Every wavelength runs at this intensity.
    Fixed { intensity: f64 },
}

impl Default for CapacityModel {
    fn default() -> Self {
        CapacityModel::Piecewise { breakpoints: 16 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MilpOptions {
    pub wavelengths: usize,
    pub objective: Objective,
    pub capacity: CapacityModel,
    pub max_intensity: f64,
    pub total_intensity: f64,
}

impl MilpOptions {
    pub fn from_state(state: &ResourceState) -> Self {
        Self {
            wavelengths: state.wavelengths(),
            objective: Objective::MaxAdmitted,
            capacity: CapacityModel::default(),
            max_intensity: state.max_intensity(),
            total_intensity: state.total_intensity(),
        }
    }

    fn validate(&self) -> Result<(), MilpError> {
        let bad = |m: &str| Err(MilpError::Options(m.into()));
        if self.wavelengths == 0 {
            return bad("wavelengths must be >= 1");
        }
        if !(self.max_intensity > 0.0 && self.total_intensity > 0.0) {
            return bad("intensity budgets must be positive");
        }
        match self.capacity {
            CapacityModel::Piecewise { breakpoints } if breakpoints < 2 => bad("need >= 2 breakpoints"),
            CapacityModel::Fixed { intensity } if !(intensity >= 0.0) => bad("fixed intensity must be >= 0"),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarKind {
    Binary,
    Integer,
    Continuous,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Var {
    pub name: String,
    pub kind: VarKind,
    pub lb: f64,
    pub ub: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

/// Constraint families. The first block is the formulation proper, the
/// second holds the linearisation rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    /// Lightpaths leaving a node fit its DXC ports.
    PortsOut,
    /// Lightpaths ending at a node fit its DXC ports.
    PortsIn,
    /// Per-pair lightpath total over wavelengths.
    LightpathTotal,
    /// No lightpath enters its origin or leaves its end.
    NoLoop,
    /// Lightpath count leaves the origin and reaches the end.
    Endpoints,
    /// Wavelength continuity at intermediate nodes.
    Continuity,
    /// One lightpath per link and wavelength.
    Collision,
    /// Individual lightpath routes stay inside the pair's routing.
    RouteInLink,
    /// Each lightpath takes exactly one physical route.
    SingleRoute,
    /// Up-down hop count, so no intermediate turnarounds.
    HopCount,
    /// Per-pair connection total over lightpaths.
    ConnectionTotal,
    /// No connection enters a flow's source or leaves its destination.
    ConnectionEnds,
    /// Flow continuity at intermediate grooming nodes.
    ConnectionContinuity,
    /// A flow leaves its source and reaches its destination iff admitted.
    Admission,
    /// A flow uses a node pair at most once.
    ConnectionBound,
    /// A flow leaves any node on at most one lightpath.
    NonBifurcation,
    /// Self-grooming indicator equals the connection.
    GroomSelf,
    /// Per-pair grooming total over lightpaths.
    GroomTotal,
    /// Two flows are groomed only if both use the pair.
    GroomPair,
    /// Lightpath count equals the number of grooming groups.
    LightpathCount,
    /// Single-wavelength intensity cap.
    WavelengthIntensity,
    /// Per-link total intensity.
    TotalIntensity,
    /// Groomed load fits the wavelength capacity.
    Capacity,
    /// DXC processing rate.
    DxcRate,
    /// A flow only rides a lightpath that exists.
    LightpathUse,
    /// Capacity carried equals the flow demand.
    Demand,
    /// Grooming indicator per lightpath is the AND of the two flows.
    GroomLink,
    /// Auxiliary binary for the OR of earlier grooming indicators.
    Disjunction,
    /// Big-M expansion of the load product.
    Product,
    /// Tangents of the capacity envelope.
    CapacityEnvelope,
}

impl Family {
    pub fn tag(self) -> &'static str {
        match self {
            Family::PortsOut => "ports_out",
            Family::PortsIn => "ports_in",
            Family::LightpathTotal => "lp_total",
            Family::NoLoop => "no_loop",
            Family::Endpoints => "endpoints",
            Family::Continuity => "continuity",
            Family::Collision => "collision",
            Family::RouteInLink => "route_in_link",
            Family::SingleRoute => "single_route",
            Family::HopCount => "hop_count",
            Family::ConnectionTotal => "conn_total",
            Family::ConnectionEnds => "conn_ends",
            Family::ConnectionContinuity => "conn_continuity",
            Family::Admission => "admission",
            Family::ConnectionBound => "conn_bound",
            Family::NonBifurcation => "non_bifurcation",
            Family::GroomSelf => "groom_self",
            Family::GroomTotal => "groom_total",
            Family::GroomPair => "groom_pair",
            Family::LightpathCount => "lp_count",
            Family::WavelengthIntensity => "wavelength_intensity",
            Family::TotalIntensity => "total_intensity",
            Family::Capacity => "capacity",
            Family::DxcRate => "dxc_rate",
            Family::LightpathUse => "lp_use",
            Family::Demand => "demand",
            Family::GroomLink => "groom_link",
            Family::Disjunction => "disjunction",
            Family::Product => "product",
            Family::CapacityEnvelope => "cap_envelope",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub name: String,
    pub family: Family,
    pub terms: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

/// Node pair that may carry lightpaths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pair {
    pub src: NodeId,
    pub dst: NodeId,
    pub hops: usize,
    /// Candidate up-down routes.
    pub routes: Vec<Vec<LinkId>>,
    /// Links between nodes that lie on some candidate route.
    pub links: Vec<LinkId>,
    /// Max lightpaths per wavelength.
    pub slots: usize,
    /// Flows allowed to use the pair.
    pub users: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MilpLink {
    pub id: LinkId,
    pub from: NodeId,
    pub to: NodeId,
    pub gain: f64,
}

/// Variable lookup tables. Wavelengths and slots are 0-based here.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct VarIndex {
    /// (link, pair, w)
    pub p: BTreeMap<(usize, usize, usize), usize>,
    /// (pair, w)
    pub l: BTreeMap<(usize, usize), usize>,
    pub lt: BTreeMap<usize, usize>,
    /// (link, pair, w, slot)
    pub r: BTreeMap<(usize, usize, usize, usize), usize>,
    /// (pair, flow, w, slot)
    pub x: BTreeMap<(usize, usize, usize, usize), usize>,
    /// (pair, flow)
    pub xt: BTreeMap<(usize, usize), usize>,
    pub y: BTreeMap<(usize, usize), usize>,
    /// (pair, t, u, w, slot) with t < u
    pub g: BTreeMap<(usize, usize, usize, usize, usize), usize>,
    /// (pair, t, u) with t <= u
    pub gt: BTreeMap<(usize, usize, usize), usize>,
    /// (pair, u)
    pub o: BTreeMap<(usize, usize), usize>,
    /// (link, w)
    pub e: BTreeMap<(usize, usize), usize>,
    pub k: BTreeMap<(usize, usize), usize>,
    /// (link, pair, t, w, slot)
    pub z: BTreeMap<(usize, usize, usize, usize, usize), usize>,
    pub a: BTreeMap<usize, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MilpInstance {
    pub options: MilpOptions,
    pub bandwidth: f64,
    pub big_m: f64,
    pub flows: Vec<MilpFlow>,
    /// Links referenced by some pair, keyed by position.
    pub links: Vec<MilpLink>,
    pub pairs: Vec<Pair>,
    pub vars: Vec<Var>,
    pub constraints: Vec<Constraint>,
    /// Objective coefficients; `maximize` gives the direction.
    pub objective: Vec<(usize, f64)>,
    pub maximize: bool,
    pub index: VarIndex,
    /// DXC limits of grooming nodes: (node, ports, rate).
    pub dxc: Vec<(NodeId, usize, f64)>,
}

impl MilpInstance {
    pub fn var_count(&self) -> usize {
        self.vars.len()
    }

    pub fn family_count(&self, f: Family) -> usize {
        self.constraints.iter().filter(|c| c.family == f).count()
    }

    pub fn count_kind(&self, kind: VarKind) -> usize {
        self.vars.iter().filter(|v| v.kind == kind).count()
    }

    fn link_pos(&self, id: LinkId) -> Option<usize> {
        self.links.iter().position(|l| l.id == id)
    }

    pub fn pair_index(&self, src: NodeId, dst: NodeId) -> Option<usize> {
        self.pairs.iter().position(|p| p.src == src && p.dst == dst)
    }

    pub fn capacity_of(&self, link: usize, intensity: f64) -> f64 {
        channel::capacity(self.links[link].gain, intensity, self.bandwidth)
    }

    /// Objective value of an assignment vector.
    pub fn objective_value(&self, values: &[f64]) -> f64 {
        self.objective.iter().map(|&(v, c)| c * values[v]).sum()
    }
}

/// Variable assignment aligned with [`MilpInstance::vars`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSolution {
    pub values: Vec<f64>,
}

impl CandidateSolution {
    pub fn zeros(inst: &MilpInstance) -> Self {
        let values = inst.vars.iter().map(|v| v.lb.max(0.0)).collect();
        Self { values }
    }

    /// Values keyed by variable name, zeros dropped.
    pub fn to_named(&self, inst: &MilpInstance) -> BTreeMap<String, f64> {
        inst.vars
            .iter()
            .zip(&self.values)
            .filter(|(_, &x)| x != 0.0)
            .map(|(v, &x)| (v.name.clone(), x))
            .collect()
    }

    /// Inverse of [`Self::to_named`]; absent names are zero.
    pub fn from_named(inst: &MilpInstance, named: &BTreeMap<String, f64>) -> Result<Self, MilpError> {
        let pos: BTreeMap<&str, usize> = inst.vars.iter().enumerate().map(|(i, v)| (v.name.as_str(), i)).collect();
        let mut values = vec![0.0; inst.vars.len()];
        for (name, &x) in named {
            let i = pos
                .get(name.as_str())
                .ok_or_else(|| MilpError::Assignment(format!("unknown variable {name}")))?;
            values[*i] = x;
        }
        Ok(Self { values })
    }
}

/// Lightpath in a high-level assignment. Wavelength and slot are 0-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannedLightpath {
    pub pair: usize,
    pub wavelength: usize,
    pub slot: usize,
    pub route: Vec<LinkId>,
}

/// Routing, grooming and intensities, from which every variable follows.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub lightpaths: Vec<PlannedLightpath>,
    /// Lightpaths used by each flow in order, `None` when rejected.
    pub flows: Vec<Option<Vec<usize>>>,
    /// Intensity per (link, 0-based wavelength); absent entries are zero.
    pub intensity: BTreeMap<(LinkId, usize), f64>,
}

impl Assignment {
    pub fn admitted(&self, demand: &[MilpFlow]) -> f64 {
        self.flows
            .iter()
            .zip(demand)
            .filter(|(f, _)| f.is_some())
            .map(|(_, d)| d.demand)
            .sum()
    }
}

struct Builder {
    vars: Vec<Var>,
    cons: Vec<Constraint>,
}

impl Builder {
    fn var(&mut self, name: String, kind: VarKind, lb: f64, ub: f64) -> usize {
        self.vars.push(Var { name, kind, lb, ub });
        self.vars.len() - 1
    }

    fn bin(&mut self, name: String) -> usize {
        self.var(name, VarKind::Binary, 0.0, 1.0)
    }

    fn cont(&mut self, name: String) -> usize {
        self.var(name, VarKind::Continuous, 0.0, f64::INFINITY)
    }

    /// Rows with no terms are trivially satisfied and dropped.
    fn row(&mut self, family: Family, name: String, terms: Vec<(usize, f64)>, sense: Sense, rhs: f64) {
        if terms.is_empty() {
            return;
        }
        self.cons.push(Constraint {
            name: format!("{}_{}", family.tag(), name),
            family,
            terms,
            sense,
            rhs,
        });
    }
}

fn server_rack(topo: &PhysicalTopology, flow: usize, n: NodeId) -> Result<usize, MilpError> {
    if n.0 >= topo.nodes().len() || topo.node(n).role != Role::Server {
        return Err(MilpError::UnknownServer { flow, node: n });
    }
    Ok(topo.rack_of(n).expect("server"))
}

/// Pairs each flow may use, in a deterministic order.
fn flow_pairs(topo: &PhysicalTopology, f: &MilpFlow) -> Vec<(NodeId, NodeId)> {
    let (a, b) = (topo.rack_of(f.src).unwrap(), topo.rack_of(f.dst).unwrap());
    let (ea, eb) = (topo.edge_switch(a), topo.edge_switch(b));
    if a == b {
        // Express lightpaths may hairpin at a core switch.
        vec![(f.src, f.dst), (f.src, ea), (ea, f.dst)]
    } else {
        vec![(f.src, f.dst), (f.src, ea), (ea, eb), (eb, f.dst)]
    }
}

fn pair_routes(topo: &PhysicalTopology, src: NodeId, dst: NodeId) -> (usize, Vec<Vec<LinkId>>) {
    let link = |a, b| topo.link_between(a, b).expect("access link");
    match (topo.node(src).role, topo.node(dst).role) {
        (Role::Server, Role::Server) => (
            4,
            (0..topo.spines()).map(|c| topo.server_route(src, dst, c).to_vec()).collect(),
        ),
        (Role::EdgeSwitch, Role::EdgeSwitch) => {
            let (a, b) = (topo.node(src).index, topo.node(dst).index);
            (2, (0..topo.spines()).map(|c| topo.r2r_route(a, b, c).to_vec()).collect())
        }
        _ => (1, vec![vec![link(src, dst)]]),
    }
}

/// Tangent lines `(slope, intercept)` bounding capacity from above on
/// `[0, e_max]`.
pub fn capacity_envelope(gain: f64, bandwidth: f64, e_max: f64, breakpoints: usize) -> Vec<(f64, f64)> {
    let a = std::f64::consts::E * gain * gain / (2.0 * std::f64::consts::PI);
    let cap = |e: f64| channel::capacity(gain, e, bandwidth);
    let slope = |e: f64| bandwidth / std::f64::consts::LN_2 * a * e / (1.0 + a * e * e);
    // The tangent from the origin touches where ln(1+u)(1+u) = 2u, u = a E^2.
    let (mut lo, mut hi) = (1.0_f64, 10.0_f64);
    for _ in 0..200 {
        let u = 0.5 * (lo + hi);
        if u.ln_1p() * (1.0 + u) < 2.0 * u {
            lo = u;
        } else {
            hi = u;
        }
    }
    let e_touch = (0.5 * (lo + hi) / a).sqrt();
    if e_touch >= e_max {
        return vec![(cap(e_max) / e_max, 0.0)];
    }
    (0..breakpoints)
        .map(|k| {
            let e = e_touch + (e_max - e_touch) * k as f64 / (breakpoints - 1) as f64;
            let s = slope(e);
            (s, (cap(e) - s * e).max(0.0))
        })
        .collect()
}

pub fn build_instance(
    topo: &PhysicalTopology,
    demand: &DemandMatrix,
    options: &MilpOptions,
) -> Result<MilpInstance, MilpError> {
    options.validate()?;
    let w_count = options.wavelengths;
    for (t, f) in demand.flows.iter().enumerate() {
        server_rack(topo, t, f.src)?;
        server_rack(topo, t, f.dst)?;
        if f.src == f.dst {
            return Err(MilpError::SelfFlow { flow: t });
        }
        if !(f.demand >= 0.0 && f.demand.is_finite()) {
            return Err(MilpError::Demand { flow: t });
        }
    }

    // Pairs and their users.
    let mut order: Vec<(NodeId, NodeId)> = Vec::new();
    let mut users: BTreeMap<(NodeId, NodeId), Vec<usize>> = BTreeMap::new();
    for (t, f) in demand.flows.iter().enumerate() {
        for p in flow_pairs(topo, f) {
            let u = users.entry(p).or_insert_with(|| {
                order.push(p);
                Vec::new()
            });
            u.push(t);
        }
    }
    order.sort();
    let mut link_set: BTreeSet<LinkId> = BTreeSet::new();
    let mut pairs = Vec::with_capacity(order.len());
    for &(src, dst) in &order {
        let (hops, routes) = pair_routes(topo, src, dst);
        let nodes: BTreeSet<NodeId> = routes
            .iter()
            .flatten()
            .flat_map(|&l| [topo.link(l).from, topo.link(l).to])
            .collect();
        let links: Vec<LinkId> = topo
            .links()
            .iter()
            .filter(|l| nodes.contains(&l.from) && nodes.contains(&l.to))
            .map(|l| l.id)
            .collect();
        link_set.extend(links.iter().copied());
        let firsts: BTreeSet<LinkId> = routes.iter().map(|r| r[0]).collect();
        let lasts: BTreeSet<LinkId> = routes.iter().map(|r| *r.last().unwrap()).collect();
        pairs.push(Pair {
            src,
            dst,
            hops,
            slots: firsts.len().min(lasts.len()),
            routes,
            links,
            users: users[&(src, dst)].clone(),
        });
    }
    let links: Vec<MilpLink> = link_set
        .iter()
        .map(|&id| {
            let l = topo.link(id);
            MilpLink {
                id,
                from: l.from,
                to: l.to,
                gain: l.gain,
            }
        })
        .collect();
    let lpos: BTreeMap<LinkId, usize> = links.iter().enumerate().map(|(i, l)| (l.id, i)).collect();
    let bandwidth = topo.bandwidth();
    let big_m = links
        .iter()
        .map(|l| channel::capacity(l.gain, options.max_intensity, bandwidth))
        .fold(0.0, f64::max);

    let mut b = Builder {
        vars: Vec::new(),
        cons: Vec::new(),
    };
    let mut ix = VarIndex::default();
    let nn = |n: NodeId| n.0;

    // Variables.
    for (pi, p) in pairs.iter().enumerate() {
        let (i, j) = (nn(p.src), nn(p.dst));
        for w in 0..w_count {
            let v = b.var(format!("L_{i}_{j}_{}", w + 1), VarKind::Integer, 0.0, p.slots as f64);
            ix.l.insert((pi, w), v);
        }
        let v = b.var(format!("LT_{i}_{j}"), VarKind::Integer, 0.0, (p.slots * w_count) as f64);
        ix.lt.insert(pi, v);
        for &lid in &p.links {
            let li = lpos[&lid];
            let (m, n) = (nn(links[li].from), nn(links[li].to));
            for w in 0..w_count {
                let v = b.bin(format!("P_{m}_{n}_{i}_{j}_{}", w + 1));
                ix.p.insert((li, pi, w), v);
                for s in 0..p.slots {
                    let v = b.bin(format!("R_{m}_{n}_{i}_{j}_{}_{}", w + 1, s + 1));
                    ix.r.insert((li, pi, w, s), v);
                }
            }
        }
        for &t in &p.users {
            for w in 0..w_count {
                for s in 0..p.slots {
                    let v = b.bin(format!("X_{i}_{j}_{t}_{}_{}", w + 1, s + 1));
                    ix.x.insert((pi, t, w, s), v);
                }
            }
            let v = b.bin(format!("XT_{i}_{j}_{t}"));
            ix.xt.insert((pi, t), v);
            let v = b.cont(format!("Y_{i}_{j}_{t}"));
            ix.y.insert((pi, t), v);
        }
        for (a, &t) in p.users.iter().enumerate() {
            let v = b.bin(format!("GT_{i}_{j}_{t}_{t}"));
            ix.gt.insert((pi, t, t), v);
            for &u in &p.users[a + 1..] {
                for w in 0..w_count {
                    for s in 0..p.slots {
                        let v = b.bin(format!("G_{i}_{j}_{t}_{u}_{}_{}", w + 1, s + 1));
                        ix.g.insert((pi, t, u, w, s), v);
                    }
                }
                let v = b.bin(format!("GT_{i}_{j}_{t}_{u}"));
                ix.gt.insert((pi, t, u), v);
            }
            if a > 0 {
                let v = b.bin(format!("O_{i}_{j}_{t}"));
                ix.o.insert((pi, t), v);
            }
        }
    }
    for (li, l) in links.iter().enumerate() {
        let (m, n) = (nn(l.from), nn(l.to));
        for w in 0..w_count {
            let (lb, ub) = match options.capacity {
                CapacityModel::Fixed { intensity } => (intensity, intensity),
                CapacityModel::Piecewise { .. } => (0.0, f64::INFINITY),
            };
            let v = b.var(format!("E_{m}_{n}_{}", w + 1), VarKind::Continuous, lb, ub);
            ix.e.insert((li, w), v);
            let v = b.cont(format!("K_{m}_{n}_{}", w + 1));
            ix.k.insert((li, w), v);
        }
    }
    for (pi, p) in pairs.iter().enumerate() {
        let (i, j) = (nn(p.src), nn(p.dst));
        for &lid in &p.links {
            let li = lpos[&lid];
            let (m, n) = (nn(links[li].from), nn(links[li].to));
            for &t in &p.users {
                for w in 0..w_count {
                    for s in 0..p.slots {
                        let v = b.cont(format!("Z_{m}_{n}_{i}_{j}_{t}_{}_{}", w + 1, s + 1));
                        ix.z.insert((li, pi, t, w, s), v);
                    }
                }
            }
        }
    }
    for t in 0..demand.flows.len() {
        let fixed = options.objective == Objective::MinIntensity;
        let v = b.var(format!("A_{t}"), VarKind::Binary, if fixed { 1.0 } else { 0.0 }, 1.0);
        ix.a.insert(t, v);
    }

    // Virtual topology.
    let mut grooming: BTreeSet<NodeId> = BTreeSet::new();
    for p in &pairs {
        grooming.insert(p.src);
        grooming.insert(p.dst);
    }
    let mut dxc = Vec::new();
    for &node in &grooming {
        let nd = topo.node(node);
        dxc.push((node, nd.dxc_ports, nd.dxc_rate));
        let out: Vec<(usize, f64)> = pairs
            .iter()
            .enumerate()
            .filter(|(_, p)| p.src == node)
            .flat_map(|(pi, _)| (0..w_count).map(move |w| (pi, w)))
            .map(|k| (ix.l[&k], 1.0))
            .collect();
        b.row(Family::PortsOut, format!("n{}", node.0), out, Sense::Le, nd.dxc_ports as f64);
        let inn: Vec<(usize, f64)> = pairs
            .iter()
            .enumerate()
            .filter(|(_, p)| p.dst == node)
            .flat_map(|(pi, _)| (0..w_count).map(move |w| (pi, w)))
            .map(|k| (ix.l[&k], 1.0))
            .collect();
        b.row(Family::PortsIn, format!("n{}", node.0), inn, Sense::Le, nd.dxc_ports as f64);
    }
    for (pi, p) in pairs.iter().enumerate() {
        let tag = format!("{}_{}", nn(p.src), nn(p.dst));
        let mut terms: Vec<(usize, f64)> = (0..w_count).map(|w| (ix.l[&(pi, w)], 1.0)).collect();
        terms.push((ix.lt[&pi], -1.0));
        b.row(Family::LightpathTotal, tag, terms, Sense::Eq, 0.0);
    }

    // Lightpath routing.
    for (pi, p) in pairs.iter().enumerate() {
        let (i, j) = (p.src, p.dst);
        let plinks: Vec<usize> = p.links.iter().map(|l| lpos[l]).collect();
        let route_nodes: BTreeSet<NodeId> = plinks.iter().flat_map(|&l| [links[l].from, links[l].to]).collect();
        for w in 0..w_count {
            let tag = format!("{}_{}_w{}", i.0, j.0, w + 1);
            let pv = |l: usize| ix.p[&(l, pi, w)];
            let lk = &links;
            let into = |n: NodeId| -> Vec<usize> { plinks.iter().copied().filter(|&l| lk[l].to == n).collect() };
            let outof = |n: NodeId| -> Vec<usize> { plinks.iter().copied().filter(|&l| lk[l].from == n).collect() };
            b.row(Family::NoLoop, format!("{tag}_in"), into(i).into_iter().map(|l| (pv(l), 1.0)).collect(), Sense::Eq, 0.0);
            b.row(Family::NoLoop, format!("{tag}_out"), outof(j).into_iter().map(|l| (pv(l), 1.0)).collect(), Sense::Eq, 0.0);
            let lw = ix.l[&(pi, w)];
            let mut t: Vec<(usize, f64)> = into(j).into_iter().map(|l| (pv(l), 1.0)).collect();
            t.push((lw, -1.0));
            b.row(Family::Endpoints, format!("{tag}_end"), t, Sense::Eq, 0.0);
            let mut t: Vec<(usize, f64)> = outof(i).into_iter().map(|l| (pv(l), 1.0)).collect();
            t.push((lw, -1.0));
            b.row(Family::Endpoints, format!("{tag}_start"), t, Sense::Eq, 0.0);
            for &k in route_nodes.iter().filter(|&&k| k != i && k != j) {
                let mut t: Vec<(usize, f64)> = into(k).into_iter().map(|l| (pv(l), 1.0)).collect();
                t.extend(outof(k).into_iter().map(|l| (pv(l), -1.0)));
                b.row(Family::Continuity, format!("{tag}_n{}", k.0), t, Sense::Eq, 0.0);
            }
            let mut t: Vec<(usize, f64)> = plinks.iter().map(|&l| (pv(l), 1.0)).collect();
            t.push((lw, -(p.hops as f64)));
            b.row(Family::HopCount, tag.clone(), t, Sense::Eq, 0.0);

            for &l in &plinks {
                let mut t: Vec<(usize, f64)> = (0..p.slots).map(|s| (ix.r[&(l, pi, w, s)], 1.0)).collect();
                t.push((pv(l), -1.0));
                b.row(Family::RouteInLink, format!("{tag}_l{}", links[l].id.0), t, Sense::Le, 0.0);
            }
            let origin = |s: usize| -> Vec<(usize, f64)> { outof(i).into_iter().map(|l| (ix.r[&(l, pi, w, s)], 1.0)).collect() };
            let mut total = Vec::new();
            for s in 0..p.slots {
                let st = format!("{tag}_s{}", s + 1);
                b.row(Family::SingleRoute, format!("{st}_one"), origin(s), Sense::Le, 1.0);
                let mut t: Vec<(usize, f64)> = into(j).into_iter().map(|l| (ix.r[&(l, pi, w, s)], 1.0)).collect();
                t.extend(origin(s).into_iter().map(|(v, _)| (v, -1.0)));
                b.row(Family::SingleRoute, format!("{st}_end"), t, Sense::Eq, 0.0);
                for &k in route_nodes.iter().filter(|&&k| k != i && k != j) {
                    let mut t: Vec<(usize, f64)> = into(k).into_iter().map(|l| (ix.r[&(l, pi, w, s)], 1.0)).collect();
                    t.extend(outof(k).into_iter().map(|l| (ix.r[&(l, pi, w, s)], -1.0)));
                    b.row(Family::SingleRoute, format!("{st}_n{}", k.0), t, Sense::Eq, 0.0);
                }
                let mut t: Vec<(usize, f64)> = plinks.iter().map(|&l| (ix.r[&(l, pi, w, s)], 1.0)).collect();
                t.extend(origin(s).into_iter().map(|(v, _)| (v, -(p.hops as f64))));
                b.row(Family::SingleRoute, format!("{st}_hops"), t, Sense::Eq, 0.0);
                if s + 1 < p.slots {
                    let mut t = origin(s + 1);
                    t.extend(origin(s).into_iter().map(|(v, _)| (v, -1.0)));
                    b.row(Family::SingleRoute, format!("{st}_order"), t, Sense::Le, 0.0);
                }
                total.extend(origin(s));
            }
            total.push((lw, -1.0));
            b.row(Family::SingleRoute, format!("{tag}_count"), total, Sense::Eq, 0.0);
        }
    }
    for (li, l) in links.iter().enumerate() {
        for w in 0..w_count {
            let t: Vec<(usize, f64)> = (0..pairs.len())
                .filter_map(|pi| ix.p.get(&(li, pi, w)).map(|&v| (v, 1.0)))
                .collect();
            b.row(Family::Collision, format!("l{}_w{}", l.id.0, w + 1), t, Sense::Le, 1.0);
        }
    }

    // Connection topology and non-bifurcation.
    for (pi, p) in pairs.iter().enumerate() {
        let tag = format!("{}_{}", nn(p.src), nn(p.dst));
        let origin_links: Vec<usize> = p
            .links
            .iter()
            .map(|l| lpos[l])
            .filter(|&l| links[l].from == p.src)
            .collect();
        for &t in &p.users {
            let mut terms: Vec<(usize, f64)> = Vec::new();
            for w in 0..w_count {
                for s in 0..p.slots {
                    let x = ix.x[&(pi, t, w, s)];
                    terms.push((x, 1.0));
                    let mut u: Vec<(usize, f64)> = vec![(x, 1.0)];
                    u.extend(origin_links.iter().map(|&l| (ix.r[&(l, pi, w, s)], -1.0)));
                    b.row(Family::LightpathUse, format!("{tag}_t{t}_w{}_s{}", w + 1, s + 1), u, Sense::Le, 0.0);
                }
            }
            terms.push((ix.xt[&(pi, t)], -1.0));
            b.row(Family::ConnectionTotal, format!("{tag}_t{t}"), terms, Sense::Eq, 0.0);
            b.row(Family::ConnectionBound, format!("{tag}_t{t}"), vec![(ix.xt[&(pi, t)], 1.0)], Sense::Le, 1.0);
            b.row(
                Family::Demand,
                format!("{tag}_t{t}"),
                vec![(ix.y[&(pi, t)], 1.0), (ix.xt[&(pi, t)], -demand.flows[t].demand)],
                Sense::Eq,
                0.0,
            );
        }
    }
    for (t, f) in demand.flows.iter().enumerate() {
        let xt = |pi: usize| ix.xt[&(pi, t)];
        let mine: Vec<usize> = (0..pairs.len()).filter(|&pi| ix.xt.contains_key(&(pi, t))).collect();
        let ends_in: Vec<(usize, f64)> = mine.iter().filter(|&&pi| pairs[pi].dst == f.src).map(|&pi| (xt(pi), 1.0)).collect();
        b.row(Family::ConnectionEnds, format!("t{t}_src"), ends_in, Sense::Eq, 0.0);
        let ends_out: Vec<(usize, f64)> = mine.iter().filter(|&&pi| pairs[pi].src == f.dst).map(|&pi| (xt(pi), 1.0)).collect();
        b.row(Family::ConnectionEnds, format!("t{t}_dst"), ends_out, Sense::Eq, 0.0);
        let mut t_out: Vec<(usize, f64)> = mine.iter().filter(|&&pi| pairs[pi].src == f.src).map(|&pi| (xt(pi), 1.0)).collect();
        t_out.push((ix.a[&t], -1.0));
        b.row(Family::Admission, format!("t{t}_src"), t_out, Sense::Eq, 0.0);
        let mut t_in: Vec<(usize, f64)> = mine.iter().filter(|&&pi| pairs[pi].dst == f.dst).map(|&pi| (xt(pi), 1.0)).collect();
        t_in.push((ix.a[&t], -1.0));
        b.row(Family::Admission, format!("t{t}_dst"), t_in, Sense::Eq, 0.0);
        let nodes: BTreeSet<NodeId> = mine.iter().flat_map(|&pi| [pairs[pi].src, pairs[pi].dst]).collect();
        for &k in &nodes {
            if k != f.src && k != f.dst {
                let mut c: Vec<(usize, f64)> = mine.iter().filter(|&&pi| pairs[pi].dst == k).map(|&pi| (xt(pi), 1.0)).collect();
                c.extend(mine.iter().filter(|&&pi| pairs[pi].src == k).map(|&pi| (xt(pi), -1.0)));
                b.row(Family::ConnectionContinuity, format!("t{t}_n{}", k.0), c, Sense::Eq, 0.0);
            }
            let out: Vec<(usize, f64)> = mine.iter().filter(|&&pi| pairs[pi].src == k).map(|&pi| (xt(pi), 1.0)).collect();
            b.row(Family::NonBifurcation, format!("t{t}_n{}", k.0), out, Sense::Le, 1.0);
        }
    }
    for (pi, p) in pairs.iter().enumerate() {
        let tag = format!("{}_{}", nn(p.src), nn(p.dst));
        let mut count: Vec<(usize, f64)> = vec![(ix.lt[&pi], 1.0)];
        for (a, &t) in p.users.iter().enumerate() {
            b.row(
                Family::GroomSelf,
                format!("{tag}_t{t}"),
                vec![(ix.gt[&(pi, t, t)], 1.0), (ix.xt[&(pi, t)], -1.0)],
                Sense::Eq,
                0.0,
            );
            count.push((ix.gt[&(pi, t, t)], -1.0));
            for &u in &p.users[a + 1..] {
                let mut total = Vec::new();
                for w in 0..w_count {
                    for s in 0..p.slots {
                        let g = ix.g[&(pi, t, u, w, s)];
                        let (xt_, xu) = (ix.x[&(pi, t, w, s)], ix.x[&(pi, u, w, s)]);
                        let st = format!("{tag}_t{t}_u{u}_w{}_s{}", w + 1, s + 1);
                        b.row(Family::GroomLink, format!("{st}_a"), vec![(g, 1.0), (xt_, -1.0)], Sense::Le, 0.0);
                        b.row(Family::GroomLink, format!("{st}_b"), vec![(g, 1.0), (xu, -1.0)], Sense::Le, 0.0);
                        b.row(
                            Family::GroomLink,
                            format!("{st}_c"),
                            vec![(g, 1.0), (xt_, -1.0), (xu, -1.0)],
                            Sense::Ge,
                            -1.0,
                        );
                        total.push((g, 1.0));
                    }
                }
                let gt = ix.gt[&(pi, t, u)];
                total.push((gt, -1.0));
                b.row(Family::GroomTotal, format!("{tag}_t{t}_u{u}"), total, Sense::Eq, 0.0);
                b.row(
                    Family::GroomPair,
                    format!("{tag}_t{t}_u{u}"),
                    vec![(gt, 2.0), (ix.xt[&(pi, t)], -1.0), (ix.xt[&(pi, u)], -1.0)],
                    Sense::Le,
                    0.0,
                );
            }
            if a > 0 {
                let o = ix.o[&(pi, t)];
                let mut any = vec![(o, 1.0)];
                for &x in &p.users[..a] {
                    let g = ix.gt[&(pi, x, t)];
                    b.row(Family::Disjunction, format!("{tag}_t{t}_x{x}"), vec![(o, 1.0), (g, -1.0)], Sense::Ge, 0.0);
                    any.push((g, -1.0));
                }
                b.row(Family::Disjunction, format!("{tag}_t{t}_any"), any, Sense::Le, 0.0);
                count.push((o, 1.0));
            }
        }
        b.row(Family::LightpathCount, tag, count, Sense::Eq, 0.0);
    }

    // Capacity, intensity and DXC.
    for (li, l) in links.iter().enumerate() {
        let tag = format!("l{}", l.id.0);
        let mut all = Vec::new();
        for w in 0..w_count {
            let (e, k) = (ix.e[&(li, w)], ix.k[&(li, w)]);
            let tw = format!("{tag}_w{}", w + 1);
            b.row(Family::WavelengthIntensity, tw.clone(), vec![(e, 1.0)], Sense::Le, options.max_intensity);
            all.push((e, 1.0));
            match options.capacity {
                CapacityModel::Piecewise { breakpoints } => {
                    let env = capacity_envelope(l.gain, bandwidth, options.max_intensity, breakpoints);
                    for (q, (slope, icpt)) in env.into_iter().enumerate() {
                        b.row(
                            Family::CapacityEnvelope,
                            format!("{tw}_k{}", q + 1),
                            vec![(k, 1.0), (e, -slope)],
                            Sense::Le,
                            icpt,
                        );
                    }
                }
                CapacityModel::Fixed { intensity } => {
                    let c = channel::capacity(l.gain, intensity, bandwidth);
                    b.row(Family::CapacityEnvelope, format!("{tw}_k1"), vec![(k, 1.0)], Sense::Le, c);
                }
            }
            let mut load = vec![(k, 1.0)];
            for (pi, p) in pairs.iter().enumerate() {
                if !ix.p.contains_key(&(li, pi, w)) {
                    continue;
                }
                for &t in &p.users {
                    for s in 0..p.slots {
                        let z = ix.z[&(li, pi, t, w, s)];
                        load.push((z, -1.0));
                        b.row(
                            Family::Product,
                            format!("{tw}_{}_{}_t{t}_s{}", p.src.0, p.dst.0, s + 1),
                            vec![
                                (z, 1.0),
                                (ix.y[&(pi, t)], -1.0),
                                (ix.x[&(pi, t, w, s)], -big_m),
                                (ix.r[&(li, pi, w, s)], -big_m),
                            ],
                            Sense::Ge,
                            -2.0 * big_m,
                        );
                    }
                }
            }
            b.row(Family::Capacity, tw, load, Sense::Ge, 0.0);
        }
        b.row(Family::TotalIntensity, tag, all, Sense::Le, options.total_intensity);
    }
    for &(node, _, rate) in &dxc {
        let t: Vec<(usize, f64)> = pairs
            .iter()
            .enumerate()
            .filter(|(_, p)| p.src == node || p.dst == node)
            .flat_map(|(pi, p)| p.users.iter().map(move |&t| (pi, t)))
            .map(|k| (ix.y[&k], 1.0))
            .collect();
        b.row(Family::DxcRate, format!("n{}", node.0), t, Sense::Le, rate);
    }

    let (objective, maximize) = match options.objective {
        Objective::MaxAdmitted => (
            demand.flows.iter().enumerate().map(|(t, f)| (ix.a[&t], f.demand)).collect(),
            true,
        ),
        Objective::MinIntensity => (ix.e.values().map(|&v| (v, 1.0)).collect(), false),
    };

    Ok(MilpInstance {
        options: options.clone(),
        bandwidth,
        big_m,
        flows: demand.flows.clone(),
        links,
        pairs,
        vars: b.vars,
        constraints: b.cons,
        objective,
        maximize,
        index: ix,
        dxc,
    })
}

impl MilpInstance {
    /// Every variable value implied by a high-level assignment.
    pub fn candidate(&self, asg: &Assignment) -> Result<CandidateSolution, MilpError> {
        let bad = |m: String| Err(MilpError::Assignment(m));
        if asg.flows.len() != self.flows.len() {
            return bad(format!("{} flow entries for {} flows", asg.flows.len(), self.flows.len()));
        }
        let ix = &self.index;
        let mut v = CandidateSolution::zeros(self).values;
        let mut on_lp: Vec<Vec<usize>> = vec![Vec::new(); asg.lightpaths.len()];
        for (t, f) in asg.flows.iter().enumerate() {
            if let Some(f) = f {
                for &q in f {
                    if q >= asg.lightpaths.len() {
                        return bad(format!("flow {t} names lightpath {q}"));
                    }
                    on_lp[q].push(t);
                }
                v[ix.a[&t]] = 1.0;
            }
        }
        for (q, lp) in asg.lightpaths.iter().enumerate() {
            let (pi, w, s) = (lp.pair, lp.wavelength, lp.slot);
            let Some(p) = self.pairs.get(pi) else {
                return bad(format!("lightpath {q}: no pair {pi}"));
            };
            if w >= self.options.wavelengths || s >= p.slots {
                return bad(format!("lightpath {q}: wavelength or slot out of range"));
            }
            *v.get_mut(ix.l[&(pi, w)]).unwrap() += 1.0;
            *v.get_mut(ix.lt[&pi]).unwrap() += 1.0;
            for &l in &lp.route {
                let Some(li) = self.link_pos(l) else {
                    return bad(format!("lightpath {q}: link {l} outside the instance"));
                };
                let (Some(&pv), Some(&rv)) = (ix.p.get(&(li, pi, w)), ix.r.get(&(li, pi, w, s))) else {
                    return bad(format!("lightpath {q}: link {l} outside its pair"));
                };
                v[pv] += 1.0;
                v[rv] += 1.0;
            }
            for &t in &on_lp[q] {
                let Some(&x) = ix.x.get(&(pi, t, w, s)) else {
                    return bad(format!("flow {t} cannot use pair {pi}"));
                };
                v[x] += 1.0;
                v[ix.xt[&(pi, t)]] += 1.0;
                v[ix.y[&(pi, t)]] = self.flows[t].demand;
                for &l in &lp.route {
                    let li = self.link_pos(l).unwrap();
                    v[ix.z[&(li, pi, t, w, s)]] = self.flows[t].demand;
                }
            }
            let users = &on_lp[q];
            for (a, &t) in users.iter().enumerate() {
                v[ix.gt[&(pi, t, t)]] = v[ix.xt[&(pi, t)]];
                for &u in &users[a + 1..] {
                    let (lo, hi) = (t.min(u), t.max(u));
                    v[ix.g[&(pi, lo, hi, w, s)]] = 1.0;
                    v[ix.gt[&(pi, lo, hi)]] = 1.0;
                    v[ix.o[&(pi, hi)]] = 1.0;
                }
            }
        }
        for (&(l, w), &e) in &asg.intensity {
            let Some(li) = self.link_pos(l) else {
                if e != 0.0 {
                    return bad(format!("intensity on link {l} outside the instance"));
                }
                continue;
            };
            if let CapacityModel::Piecewise { .. } = self.options.capacity {
                match ix.e.get(&(li, w)) {
                    Some(&ev) => v[ev] = e,
                    None => return bad(format!("wavelength {w} out of range")),
                }
            }
        }
        // Carried load on each (link, wavelength).
        for (&(li, _pi, _t, w, _s), &z) in &ix.z {
            v[ix.k[&(li, w)]] += v[z];
        }
        Ok(CandidateSolution { values: v })
    }
}
