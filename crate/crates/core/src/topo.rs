//! Spine-leaf physical topology and the two mutable resource graphs
//! (residual intensity and wavelength availability).

use std::collections::HashMap;
use std::fmt::{self, Write as _};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{self, ChannelError, ChannelParams};

/// Upper bound on wavelengths per link (dense WDM modules top out at 160).
pub const MAX_WAVELENGTHS: usize = 160;

/// Relative slack used when comparing intensities against a budget.
const BUDGET_SLACK: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TopologyError {
    #[error("need at least 2 leaves, got {0}")]
    TooFewLeaves(usize),
    #[error("spine ratio {ratio} times {leaves} leaves is not a positive integer")]
    SpineCount { ratio: SpineRatio, leaves: usize },
    #[error("wavelength count {0} outside 1..={MAX_WAVELENGTHS}")]
    Wavelengths(usize),
    #[error("servers per rack must be at least 1")]
    NoServers,
    #[error("DXC port count must be at least 1")]
    DxcPorts,
    #[error("distance matrix is {rows}x{cols}, expected {leaves}x{spines}")]
    MatrixShape {
        rows: usize,
        cols: usize,
        leaves: usize,
        spines: usize,
    },
    #[error("non-positive distance {0}")]
    Distance(f64),
    #[error(transparent)]
    Channel(#[from] ChannelError),
}

/// Spine-to-leaf ratio kept as an exact fraction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct SpineRatio {
    num: u32,
    den: u32,
}

impl SpineRatio {
    pub fn new(num: u32, den: u32) -> Option<Self> {
        if num == 0 || den == 0 || num > den {
            return None;
        }
        let g = gcd(num, den);
        Some(Self {
            num: num / g,
            den: den / g,
        })
    }

    pub fn half() -> Self {
        Self { num: 1, den: 2 }
    }

    pub fn numer(&self) -> u32 {
        self.num
    }

    pub fn denom(&self) -> u32 {
        self.den
    }

    /// Number of spines for `leaves` leaves, if integral.
    pub fn spines(&self, leaves: usize) -> Option<usize> {
        let scaled = leaves * self.num as usize;
        (scaled % self.den as usize == 0).then(|| scaled / self.den as usize)
    }

    pub fn as_f64(&self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

fn gcd(a: u32, b: u32) -> u32 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

impl fmt::Display for SpineRatio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

impl FromStr for SpineRatio {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || format!("invalid spine ratio `{s}`, expected p/q with 0 < p <= q");
        let (n, d) = match s.split_once('/') {
            Some((n, d)) => (n.trim(), d.trim()),
            None => (s.trim(), "1"),
        };
        let num = n.parse().map_err(|_| bad())?;
        let den = d.parse().map_err(|_| bad())?;
        SpineRatio::new(num, den).ok_or_else(bad)
    }
}

impl TryFrom<String> for SpineRatio {
    type Error = String;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<SpineRatio> for String {
    fn from(r: SpineRatio) -> String {
        r.to_string()
    }
}

/// Geometry of the leaf-to-spine links.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Layout {
    /// Leaves on a line at `pitch` metres, spines centred above at `height`.
    Line { pitch: f64, height: f64 },
    /// Every leaf-spine link has the same length.
    Uniform { distance: f64 },
    /// Row per leaf, column per spine, metres.
    Explicit { distances: Vec<Vec<f64>> },
}

impl Default for Layout {
    fn default() -> Self {
        Layout::Uniform { distance: 5.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyConfig {
    /// Leaf (edge switch / rack) count.
    pub leaves: usize,
    pub spine_ratio: SpineRatio,
    pub servers_per_rack: usize,
    /// Wavelengths per directed link.
    pub wavelengths: usize,
    /// DXC I/O ports per node.
    #[serde(default = "default_dxc_ports")]
    pub dxc_ports: usize,
    /// DXC digital processing capacity per node, bits/s.
    #[serde(default = "default_dxc_rate")]
    pub dxc_rate: f64,
    /// Server to edge-switch distance inside a rack, metres.
    #[serde(default = "default_server_distance")]
    pub server_distance: f64,
    #[serde(default)]
    pub layout: Layout,
    #[serde(default)]
    pub channel: ChannelParams,
}

fn default_dxc_ports() -> usize {
    64
}

fn default_dxc_rate() -> f64 {
    1e11
}

fn default_server_distance() -> f64 {
    1.0
}

impl TopologyConfig {
    /// Uniform-distance configuration with default optics.
    pub fn uniform(leaves: usize, spine_ratio: SpineRatio, servers: usize, wavelengths: usize) -> Self {
        Self {
            leaves,
            spine_ratio,
            servers_per_rack: servers,
            wavelengths,
            dxc_ports: default_dxc_ports(),
            dxc_rate: default_dxc_rate(),
            server_distance: default_server_distance(),
            layout: Layout::default(),
            channel: ChannelParams::default(),
        }
    }

    pub fn spines(&self) -> Result<usize, TopologyError> {
        match self.spine_ratio.spines(self.leaves) {
            Some(c) if c >= 1 => Ok(c),
            _ => Err(TopologyError::SpineCount {
                ratio: self.spine_ratio,
                leaves: self.leaves,
            }),
        }
    }

    pub fn validate(&self) -> Result<(), TopologyError> {
        if self.leaves < 2 {
            return Err(TopologyError::TooFewLeaves(self.leaves));
        }
        let spines = self.spines()?;
        if self.wavelengths == 0 || self.wavelengths > MAX_WAVELENGTHS {
            return Err(TopologyError::Wavelengths(self.wavelengths));
        }
        if self.servers_per_rack == 0 {
            return Err(TopologyError::NoServers);
        }
        if self.dxc_ports == 0 {
            return Err(TopologyError::DxcPorts);
        }
        if !(self.server_distance > 0.0) {
            return Err(TopologyError::Distance(self.server_distance));
        }
        match &self.layout {
            Layout::Line { pitch, height } => {
                if !(*pitch > 0.0) {
                    return Err(TopologyError::Distance(*pitch));
                }
                if !(*height > 0.0) {
                    return Err(TopologyError::Distance(*height));
                }
            }
            Layout::Uniform { distance } => {
                if !(*distance > 0.0) {
                    return Err(TopologyError::Distance(*distance));
                }
            }
            Layout::Explicit { distances } => {
                let cols = distances.first().map_or(0, Vec::len);
                if distances.len() != self.leaves || distances.iter().any(|r| r.len() != spines) {
                    return Err(TopologyError::MatrixShape {
                        rows: distances.len(),
                        cols,
                        leaves: self.leaves,
                        spines,
                    });
                }
                if let Some(&d) = distances.iter().flatten().find(|d| !(**d > 0.0)) {
                    return Err(TopologyError::Distance(d));
                }
            }
        }
        self.channel.validate()?;
        Ok(())
    }

    /// Leaf-to-spine distance in metres.
    fn leaf_spine_distance(&self, leaf: usize, spine: usize, spines: usize) -> f64 {
        match &self.layout {
            Layout::Uniform { distance } => *distance,
            Layout::Explicit { distances } => distances[leaf][spine],
            Layout::Line { pitch, height } => {
                let leaf_x = leaf as f64 * pitch;
                let span = (self.leaves - 1) as f64 * pitch;
                let spine_pitch = span / spines as f64;
                let spine_x = (spine as f64 + 0.5) * spine_pitch;
                (leaf_x - spine_x).hypot(*height)
            }
        }
    }
}

/// Smallest `W` that gives every ordered rack pair one CF and one MF lightpath.
pub fn min_wavelengths(leaves: usize, ratio: SpineRatio) -> usize {
    assert!(leaves >= 2, "need at least two leaves");
    let num = 2 * (leaves - 1) * ratio.denom() as usize;
    let den = leaves * ratio.numer() as usize;
    num.div_ceil(den)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LinkId(pub usize);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for LinkId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// One-based wavelength index, as used in logs and LP files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Wavelength(u16);

impl Wavelength {
    pub fn new(number: usize) -> Self {
        assert!((1..=MAX_WAVELENGTHS).contains(&number), "wavelength {number} out of range");
        Self(number as u16)
    }

    pub fn from_index(index: usize) -> Self {
        Self::new(index + 1)
    }

    pub fn number(self) -> usize {
        self.0 as usize
    }

    pub fn index(self) -> usize {
        self.0 as usize - 1
    }
}

impl fmt::Display for Wavelength {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Fixed-width set of wavelengths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct WavelengthSet([u64; 3]);

impl WavelengthSet {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Wavelengths `1..=count`.
    pub fn full(count: usize) -> Self {
        let mut s = Self::empty();
        for i in 0..count {
            s.insert(Wavelength::from_index(i));
        }
        s
    }

    pub fn insert(&mut self, w: Wavelength) {
        let i = w.index();
        self.0[i / 64] |= 1 << (i % 64);
    }

    pub fn remove(&mut self, w: Wavelength) {
        let i = w.index();
        self.0[i / 64] &= !(1 << (i % 64));
    }

    pub fn contains(&self, w: Wavelength) -> bool {
        let i = w.index();
        self.0[i / 64] & (1 << (i % 64)) != 0
    }

    pub fn intersect(&self, other: &Self) -> Self {
        Self([
            self.0[0] & other.0[0],
            self.0[1] & other.0[1],
            self.0[2] & other.0[2],
        ])
    }

    pub fn len(&self) -> usize {
        self.0.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.0.iter().all(|w| *w == 0)
    }

    /// Lowest-indexed member.
    pub fn first(&self) -> Option<Wavelength> {
        self.0
            .iter()
            .enumerate()
            .find(|(_, w)| **w != 0)
            .map(|(k, w)| Wavelength::from_index(k * 64 + w.trailing_zeros() as usize))
    }

    pub fn iter(&self) -> impl Iterator<Item = Wavelength> + '_ {
        (0..64 * 3)
            .filter(move |i| self.0[i / 64] & (1 << (i % 64)) != 0)
            .map(Wavelength::from_index)
    }
}

impl FromIterator<Wavelength> for WavelengthSet {
    fn from_iter<I: IntoIterator<Item = Wavelength>>(iter: I) -> Self {
        let mut s = Self::empty();
        for w in iter {
            s.insert(w);
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Role {
    Server,
    EdgeSwitch,
    CoreSwitch,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub id: NodeId,
    pub role: Role,
    /// Rack index for servers and edge switches; spine index for core switches.
    pub index: usize,
    pub dxc_ports: usize,
    pub dxc_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Link {
    pub id: LinkId,
    pub from: NodeId,
    pub to: NodeId,
    pub distance: f64,
    pub gain: f64,
}

/// Directed graph of servers, edge switches and core switches.
///
/// Node ids: edge switches `0..N`, core switches `N..N+C`, then servers rack by rack.
#[derive(Debug, Clone, PartialEq)]
pub struct PhysicalTopology {
    config: TopologyConfig,
    spines: usize,
    nodes: Vec<Node>,
    links: Vec<Link>,
    index: HashMap<(NodeId, NodeId), LinkId>,
}

pub fn build_topology(cfg: &TopologyConfig) -> Result<PhysicalTopology, TopologyError> {
    cfg.validate()?;
    let leaves = cfg.leaves;
    let spines = cfg.spines()?;
    let servers = cfg.servers_per_rack;

    let mut nodes = Vec::with_capacity(leaves + spines + leaves * servers);
    let mut push = |role, index| {
        let id = NodeId(nodes.len());
        nodes.push(Node {
            id,
            role,
            index,
            dxc_ports: cfg.dxc_ports,
            dxc_rate: cfg.dxc_rate,
        });
        id
    };
    for leaf in 0..leaves {
        push(Role::EdgeSwitch, leaf);
    }
    for spine in 0..spines {
        push(Role::CoreSwitch, spine);
    }
    for rack in 0..leaves {
        for _ in 0..servers {
            push(Role::Server, rack);
        }
    }

    let mut topo = PhysicalTopology {
        config: cfg.clone(),
        spines,
        nodes,
        links: Vec::new(),
        index: HashMap::new(),
    };
    for leaf in 0..leaves {
        for spine in 0..spines {
            let d = cfg.leaf_spine_distance(leaf, spine, spines);
            let gain = channel::channel_gain(&cfg.channel, d)?;
            let (es, cs) = (topo.edge_switch(leaf), topo.core_switch(spine));
            topo.add_link(es, cs, d, gain);
            topo.add_link(cs, es, d, gain);
        }
    }
    let access_gain = channel::channel_gain(&cfg.channel, cfg.server_distance)?;
    for rack in 0..leaves {
        let es = topo.edge_switch(rack);
        for k in 0..servers {
            let s = topo.server(rack, k);
            topo.add_link(s, es, cfg.server_distance, access_gain);
            topo.add_link(es, s, cfg.server_distance, access_gain);
        }
    }
    Ok(topo)
}

impl PhysicalTopology {
    fn add_link(&mut self, from: NodeId, to: NodeId, distance: f64, gain: f64) {
        let id = LinkId(self.links.len());
        self.links.push(Link {
            id,
            from,
            to,
            distance,
            gain,
        });
        self.index.insert((from, to), id);
    }

    pub fn config(&self) -> &TopologyConfig {
        &self.config
    }

    pub fn leaves(&self) -> usize {
        self.config.leaves
    }

    pub fn spines(&self) -> usize {
        self.spines
    }

    pub fn servers_per_rack(&self) -> usize {
        self.config.servers_per_rack
    }

    pub fn server_count(&self) -> usize {
        self.config.leaves * self.config.servers_per_rack
    }

    pub fn wavelengths(&self) -> usize {
        self.config.wavelengths
    }

    pub fn bandwidth(&self) -> f64 {
        self.config.channel.bandwidth
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id.0]
    }

    pub fn link(&self, id: LinkId) -> &Link {
        &self.links[id.0]
    }

    pub fn gain(&self, id: LinkId) -> f64 {
        self.links[id.0].gain
    }

    pub fn edge_switch(&self, rack: usize) -> NodeId {
        assert!(rack < self.leaves());
        NodeId(rack)
    }

    pub fn core_switch(&self, spine: usize) -> NodeId {
        assert!(spine < self.spines);
        NodeId(self.leaves() + spine)
    }

    pub fn server(&self, rack: usize, k: usize) -> NodeId {
        assert!(rack < self.leaves() && k < self.servers_per_rack());
        NodeId(self.leaves() + self.spines + rack * self.servers_per_rack() + k)
    }

    pub fn servers(&self) -> impl Iterator<Item = NodeId> + '_ {
        let first = self.leaves() + self.spines;
        (first..first + self.server_count()).map(NodeId)
    }

    pub fn is_server(&self, id: NodeId) -> bool {
        id.0 < self.nodes.len() && self.nodes[id.0].role == Role::Server
    }

    /// Rack of a server or edge switch.
    pub fn rack_of(&self, id: NodeId) -> Option<usize> {
        let n = self.nodes.get(id.0)?;
        matches!(n.role, Role::Server | Role::EdgeSwitch).then_some(n.index)
    }

    pub fn link_between(&self, from: NodeId, to: NodeId) -> Option<LinkId> {
        self.index.get(&(from, to)).copied()
    }

    fn must_link(&self, from: NodeId, to: NodeId) -> LinkId {
        self.link_between(from, to)
            .unwrap_or_else(|| panic!("no link {from} -> {to}"))
    }

    /// Leaf-spine-leaf links for a rack-to-rack lightpath through `spine`.
    pub fn r2r_route(&self, src_rack: usize, dst_rack: usize, spine: usize) -> [LinkId; 2] {
        let (a, c, b) = (
            self.edge_switch(src_rack),
            self.core_switch(spine),
            self.edge_switch(dst_rack),
        );
        [self.must_link(a, c), self.must_link(c, b)]
    }

    /// Server-to-server route through `spine`: S -> ES -> CS -> ES -> D.
    pub fn server_route(&self, src: NodeId, dst: NodeId, spine: usize) -> [LinkId; 4] {
        let i = self.rack_of(src).expect("source is not a server");
        let j = self.rack_of(dst).expect("destination is not a server");
        let [up, down] = self.r2r_route(i, j, spine);
        [
            self.must_link(src, self.edge_switch(i)),
            up,
            down,
            self.must_link(self.edge_switch(j), dst),
        ]
    }

    pub fn out_links(&self, node: NodeId) -> impl Iterator<Item = &Link> + '_ {
        self.links.iter().filter(move |l| l.from == node)
    }

    pub fn in_links(&self, node: NodeId) -> impl Iterator<Item = &Link> + '_ {
        self.links.iter().filter(move |l| l.to == node)
    }

    /// Deterministic edge list for debugging.
    pub fn dump_edge_list(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "# leaves={} spines={} servers_per_rack={} wavelengths={}",
            self.leaves(),
            self.spines,
            self.servers_per_rack(),
            self.wavelengths()
        );
        let _ = writeln!(out, "# link from to from_role to_role distance_m gain");
        for l in &self.links {
            let _ = writeln!(
                out,
                "{} {} {} {:?} {:?} {} {:e}",
                l.id,
                l.from,
                l.to,
                self.node(l.from).role,
                self.node(l.to).role,
                l.distance,
                l.gain
            );
        }
        out
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReserveError {
    #[error("wavelength {wavelength} already occupied on link {link}")]
    Collision { link: LinkId, wavelength: Wavelength },
    #[error("intensity {requested} exceeds per-wavelength cap {cap} on link {link}")]
    PerWavelengthCap { link: LinkId, requested: f64, cap: f64 },
    #[error("intensity {requested} exceeds residual {residual} on link {link}")]
    Budget {
        link: LinkId,
        requested: f64,
        residual: f64,
    },
    #[error("wavelength {0} not provisioned on this network")]
    NoSuchWavelength(Wavelength),
    #[error("invalid intensity {0}")]
    Intensity(f64),
}

/// Residual intensity and wavelength availability of every directed link.
///
/// Residuals are derived from the per-wavelength allocations rather than kept
/// as a running balance, so a release restores the previous state exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct ResourceState {
    wavelengths: usize,
    max_intensity: f64,
    total_intensity: f64,
    alloc: Vec<f64>,
    busy: Vec<WavelengthSet>,
}

impl ResourceState {
    pub fn new(topo: &PhysicalTopology, max_intensity: f64, total_intensity: f64) -> Self {
        Self::with_links(
            topo.links().len(),
            topo.wavelengths(),
            max_intensity,
            total_intensity,
        )
    }

    pub fn with_links(
        links: usize,
        wavelengths: usize,
        max_intensity: f64,
        total_intensity: f64,
    ) -> Self {
        assert!((1..=MAX_WAVELENGTHS).contains(&wavelengths));
        Self {
            wavelengths,
            max_intensity,
            total_intensity,
            alloc: vec![0.0; links * wavelengths],
            busy: vec![WavelengthSet::empty(); links],
        }
    }

    pub fn wavelengths(&self) -> usize {
        self.wavelengths
    }

    pub fn max_intensity(&self) -> f64 {
        self.max_intensity
    }

    pub fn total_intensity(&self) -> f64 {
        self.total_intensity
    }

    pub fn link_count(&self) -> usize {
        self.busy.len()
    }

    pub fn is_free(&self, link: LinkId, w: Wavelength) -> bool {
        !self.busy[link.0].contains(w)
    }

    pub fn free_set(&self, link: LinkId) -> WavelengthSet {
        let all = WavelengthSet::full(self.wavelengths);
        let busy = self.busy[link.0];
        all.iter().filter(|w| !busy.contains(*w)).collect()
    }

    pub fn free_count(&self, link: LinkId) -> usize {
        self.wavelengths - self.busy[link.0].len()
    }

    pub fn allocated(&self, link: LinkId, w: Wavelength) -> f64 {
        self.alloc[link.0 * self.wavelengths + w.index()]
    }

    pub fn used(&self, link: LinkId) -> f64 {
        let start = link.0 * self.wavelengths;
        self.alloc[start..start + self.wavelengths].iter().sum()
    }

    pub fn residual(&self, link: LinkId) -> f64 {
        self.total_intensity - self.used(link)
    }

    fn slack(&self) -> f64 {
        BUDGET_SLACK * self.total_intensity.max(self.max_intensity)
    }

    /// Occupy `w` on `link` with `intensity`. State is untouched on error.
    pub fn reserve(&mut self, link: LinkId, w: Wavelength, intensity: f64) -> Result<(), ReserveError> {
        if w.number() > self.wavelengths {
            return Err(ReserveError::NoSuchWavelength(w));
        }
        if !(intensity >= 0.0 && intensity.is_finite()) {
            return Err(ReserveError::Intensity(intensity));
        }
        if !self.is_free(link, w) {
            return Err(ReserveError::Collision { link, wavelength: w });
        }
        if intensity > self.max_intensity + self.slack() {
            return Err(ReserveError::PerWavelengthCap {
                link,
                requested: intensity,
                cap: self.max_intensity,
            });
        }
        let residual = self.residual(link);
        if intensity > residual + self.slack() {
            return Err(ReserveError::Budget {
                link,
                requested: intensity,
                residual,
            });
        }
        self.busy[link.0].insert(w);
        self.alloc[link.0 * self.wavelengths + w.index()] = intensity;
        Ok(())
    }

    /// Free `w` on `link`; returns the intensity it held. Releasing a free
    /// wavelength is a no-op.
    pub fn release(&mut self, link: LinkId, w: Wavelength) -> f64 {
        if self.is_free(link, w) {
            return 0.0;
        }
        self.busy[link.0].remove(w);
        std::mem::take(&mut self.alloc[link.0 * self.wavelengths + w.index()])
    }

    /// Verify budget and occupancy invariants on every link.
    pub fn check_invariants(&self) -> Result<(), String> {
        for link in 0..self.busy.len() {
            let id = LinkId(link);
            let used = self.used(id);
            if used > self.total_intensity + self.slack() {
                return Err(format!("link {link}: total {used} > {}", self.total_intensity));
            }
            for i in 0..self.wavelengths {
                let w = Wavelength::from_index(i);
                let e = self.allocated(id, w);
                if e > self.max_intensity + self.slack() {
                    return Err(format!("link {link} w{w}: {e} > cap {}", self.max_intensity));
                }
                if e != 0.0 && self.is_free(id, w) {
                    return Err(format!("link {link} w{w}: intensity on a free wavelength"));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(n: usize, num: u32, den: u32, s: usize, w: usize) -> TopologyConfig {
        TopologyConfig::uniform(n, SpineRatio::new(num, den).unwrap(), s, w)
    }

    #[test]
    fn emulation_scale_counts() {
        let t = build_topology(&cfg(12, 1, 2, 25, 4)).unwrap();
        assert_eq!(t.server_count(), 300);
        assert_eq!(t.spines(), 6);
        assert_eq!(t.nodes().len(), 300 + 12 + 6);
        let es = t.nodes().iter().filter(|n| n.role == Role::EdgeSwitch).count();
        assert_eq!(es, 12);
    }

    #[test]
    fn smallest_mesh() {
        let t = build_topology(&cfg(2, 1, 2, 1, 2)).unwrap();
        assert_eq!(t.server_count(), 2);
        assert_eq!(t.spines(), 1);
        let es_cs = t
            .links()
            .iter()
            .filter(|l| t.node(l.from).role != Role::Server && t.node(l.to).role != Role::Server)
            .count();
        assert_eq!(es_cs, 4);
    }

    #[test]
    fn fig1_shape() {
        let t = build_topology(&cfg(4, 1, 2, 3, 3)).unwrap();
        for rack in 0..4 {
            let es = t.edge_switch(rack);
            let up = t
                .out_links(es)
                .filter(|l| t.node(l.to).role == Role::CoreSwitch)
                .count();
            let down = t
                .in_links(es)
                .filter(|l| t.node(l.from).role == Role::CoreSwitch)
                .count();
            assert_eq!((up, down), (2, 2));
        }
        // no leaf-leaf or spine-spine links
        for l in t.links() {
            assert_ne!(t.node(l.from).role, t.node(l.to).role);
        }
    }

    #[test]
    fn configuration_errors() {
        assert!(matches!(
            build_topology(&cfg(3, 1, 2, 1, 2)),
            Err(TopologyError::SpineCount { .. })
        ));
        let mut c = cfg(4, 1, 2, 1, 2);
        c.layout = Layout::Uniform { distance: 0.0 };
        assert!(matches!(build_topology(&c), Err(TopologyError::Distance(_))));
        let mut c = cfg(4, 1, 2, 1, 2);
        c.layout = Layout::Explicit {
            distances: vec![vec![1.0, 2.0]; 3],
        };
        assert!(matches!(build_topology(&c), Err(TopologyError::MatrixShape { .. })));
    }

    #[test]
    fn min_wavelength_bound() {
        assert_eq!(min_wavelengths(12, SpineRatio::half()), 4);
        assert_eq!(min_wavelengths(2, SpineRatio::half()), 2);
        assert_eq!(min_wavelengths(4, SpineRatio::half()), 3);
        assert_eq!(min_wavelengths(8, SpineRatio::half()), 4);
        assert_eq!(min_wavelengths(6, SpineRatio::new(1, 3).unwrap()), 5);
    }

    #[test]
    fn ratio_parsing() {
        assert_eq!("1/2".parse::<SpineRatio>().unwrap(), SpineRatio::half());
        assert_eq!("2/4".parse::<SpineRatio>().unwrap(), SpineRatio::half());
        assert_eq!("1".parse::<SpineRatio>().unwrap(), SpineRatio::new(1, 1).unwrap());
        assert!("3/2".parse::<SpineRatio>().is_err());
        assert!("0/2".parse::<SpineRatio>().is_err());
    }

    #[test]
    fn line_layout_is_symmetric() {
        let mut c = cfg(4, 1, 2, 1, 2);
        c.layout = Layout::Line {
            pitch: 2.0,
            height: 3.0,
        };
        let t = build_topology(&c).unwrap();
        let d = |leaf, spine| t.link(t.r2r_route(leaf, (leaf + 1) % 4, spine)[0]).distance;
        assert!((d(0, 0) - d(3, 1)).abs() < 1e-12);
        assert!(d(0, 0) < d(0, 1));
    }

    #[test]
    fn routes_have_four_hops() {
        let t = build_topology(&cfg(4, 1, 2, 2, 3)).unwrap();
        let (s, d) = (t.server(0, 1), t.server(2, 0));
        for spine in 0..t.spines() {
            let r = t.server_route(s, d, spine);
            assert_eq!(t.link(r[0]).from, s);
            assert_eq!(t.link(r[3]).to, d);
            for w in r.windows(2) {
                assert_eq!(t.link(w[0]).to, t.link(w[1]).from);
            }
        }
    }

    #[test]
    fn reserve_release_roundtrip() {
        let t = build_topology(&cfg(2, 1, 2, 1, 2)).unwrap();
        let mut st = ResourceState::new(&t, 4.0, 4.0);
        let before = st.clone();
        let l = LinkId(0);
        st.reserve(l, Wavelength::new(1), 0.3).unwrap();
        st.reserve(l, Wavelength::new(2), 1.7).unwrap();
        assert_eq!(st.release(l, Wavelength::new(1)), 0.3);
        assert_eq!(st.release(l, Wavelength::new(2)), 1.7);
        assert_eq!(st, before);
        assert_eq!(st.release(l, Wavelength::new(2)), 0.0);
        assert_eq!(st, before);
    }

    #[test]
    fn reserve_rejections_leave_state_unchanged() {
        let t = build_topology(&cfg(2, 1, 2, 1, 2)).unwrap();
        let mut st = ResourceState::new(&t, 4.0, 4.0);
        let l = LinkId(1);
        st.reserve(l, Wavelength::new(1), 1.0).unwrap();
        let snapshot = st.clone();
        assert!(matches!(
            st.reserve(l, Wavelength::new(1), 0.5),
            Err(ReserveError::Collision { .. })
        ));
        assert!(matches!(
            st.reserve(l, Wavelength::new(2), 5.0),
            Err(ReserveError::PerWavelengthCap { .. })
        ));
        assert_eq!(st, snapshot);

        let mut st = ResourceState::new(&t, 6.0, 4.0);
        assert!(matches!(
            st.reserve(l, Wavelength::new(1), 5.0),
            Err(ReserveError::Budget { .. })
        ));
        st.reserve(l, Wavelength::new(1), 3.0).unwrap();
        assert!(matches!(
            st.reserve(l, Wavelength::new(2), 1.5),
            Err(ReserveError::Budget { .. })
        ));
        st.check_invariants().unwrap();
    }

    #[test]
    fn wavelength_set_ops() {
        let a: WavelengthSet = [1, 3].into_iter().map(Wavelength::new).collect();
        let b: WavelengthSet = [2, 3].into_iter().map(Wavelength::new).collect();
        assert_eq!(a.intersect(&b).first(), Some(Wavelength::new(3)));
        let big = WavelengthSet::full(160);
        assert_eq!(big.len(), 160);
        assert_eq!(big.iter().last(), Some(Wavelength::new(160)));
        assert_eq!(WavelengthSet::empty().first(), None);
    }

    #[test]
    fn build_is_deterministic() {
        let c = cfg(6, 1, 3, 4, 5);
        assert_eq!(build_topology(&c).unwrap(), build_topology(&c).unwrap());
        assert_eq!(
            build_topology(&c).unwrap().dump_edge_list(),
            build_topology(&c).unwrap().dump_edge_list()
        );
    }
}
