//! Traffic grooming policy: 3-step CF/MF aggregation, rack-to-rack lightpath
//! provisioning, and express lightpaths for elephant flows.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{self, capacity, intensity_for_demand};
use crate::topo::{
    min_wavelengths, LinkId, NodeId, PhysicalTopology, ReserveError, ResourceState, Wavelength,
    WavelengthSet,
};

/// Traffic class. CF and MF ride pre-provisioned rack-to-rack lightpaths,
/// EF gets its own express lightpath.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FlowClass {
    #[serde(alias = "cf")]
    Critical,
    #[serde(alias = "mf")]
    Mice,
    #[serde(alias = "ef")]
    Elephant,
}

impl FlowClass {
    pub fn short(self) -> &'static str {
        match self {
            FlowClass::Critical => "CF",
            FlowClass::Mice => "MF",
            FlowClass::Elephant => "EF",
        }
    }

    pub fn is_groomed(self) -> bool {
        self != FlowClass::Elephant
    }
}

impl fmt::Display for FlowClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Flow {
    pub id: u64,
    pub src: NodeId,
    pub dst: NodeId,
    /// Index among flows of the same (src, dst) pair.
    pub index: u32,
    pub class: FlowClass,
    pub bytes: u64,
    /// Seconds.
    pub arrival: f64,
    /// Relative deadline in seconds.
    pub deadline: f64,
}

impl Flow {
    pub fn bits(&self) -> f64 {
        self.bytes as f64 * 8.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Stage {
    S2S,
    S2R,
    R2R,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroomedFlow {
    pub stage: Stage,
    pub class: FlowClass,
    pub epoch: u64,
    pub src_rack: usize,
    pub dst_rack: usize,
    /// Set for S2S and S2R.
    pub src: Option<NodeId>,
    /// Set for S2S only.
    pub dst: Option<NodeId>,
    pub members: Vec<u64>,
    pub bytes: u64,
}

impl GroomedFlow {
    pub fn bits(&self) -> f64 {
        self.bytes as f64 * 8.0
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Grooming {
    pub s2s: Vec<GroomedFlow>,
    pub s2r: Vec<GroomedFlow>,
    pub r2r: Vec<GroomedFlow>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GroomError {
    #[error("flow {0} is an elephant flow; only CF and MF are groomed")]
    NotGroomable(u64),
    #[error("flow {id} has class {got}, expected {want}")]
    MixedClass { id: u64, got: FlowClass, want: FlowClass },
    #[error("flow {0} does not connect two servers")]
    Endpoint(u64),
    #[error("grooming window must be positive, got {0}")]
    Window(f64),
}

/// Aggregate CF or MF flows per epoch: by server pair, then by server to
/// rack, then by rack pair. Sizes are conserved at every stage.
pub fn groom_3step(
    topo: &PhysicalTopology,
    flows: &[Flow],
    class: FlowClass,
    window: f64,
) -> Result<Grooming, GroomError> {
    if !(window > 0.0) {
        return Err(GroomError::Window(window));
    }
    if !class.is_groomed() {
        return Err(GroomError::NotGroomable(flows.first().map_or(0, |f| f.id)));
    }
    let mut s2s: BTreeMap<(u64, NodeId, NodeId), GroomedFlow> = BTreeMap::new();
    for f in flows {
        if f.class != class {
            return Err(GroomError::MixedClass {
                id: f.id,
                got: f.class,
                want: class,
            });
        }
        let (Some(i), Some(j)) = (
            topo.is_server(f.src).then(|| topo.rack_of(f.src)).flatten(),
            topo.is_server(f.dst).then(|| topo.rack_of(f.dst)).flatten(),
        ) else {
            return Err(GroomError::Endpoint(f.id));
        };
        let epoch = (f.arrival / window).floor().max(0.0) as u64;
        let g = s2s.entry((epoch, f.src, f.dst)).or_insert_with(|| GroomedFlow {
            stage: Stage::S2S,
            class,
            epoch,
            src_rack: i,
            dst_rack: j,
            src: Some(f.src),
            dst: Some(f.dst),
            members: Vec::new(),
            bytes: 0,
        });
        g.members.push(f.id);
        g.bytes += f.bytes;
    }

    let mut s2r: BTreeMap<(u64, NodeId, usize), GroomedFlow> = BTreeMap::new();
    for g in s2s.values() {
        let src = g.src.expect("s2s has a source");
        let e = s2r.entry((g.epoch, src, g.dst_rack)).or_insert_with(|| GroomedFlow {
            stage: Stage::S2R,
            dst: None,
            members: Vec::new(),
            bytes: 0,
            ..g.clone()
        });
        e.members.extend_from_slice(&g.members);
        e.bytes += g.bytes;
    }

    let mut r2r: BTreeMap<(u64, usize, usize), GroomedFlow> = BTreeMap::new();
    for g in s2r.values() {
        let e = r2r.entry((g.epoch, g.src_rack, g.dst_rack)).or_insert_with(|| GroomedFlow {
            stage: Stage::R2R,
            src: None,
            dst: None,
            members: Vec::new(),
            bytes: 0,
            ..g.clone()
        });
        e.members.extend_from_slice(&g.members);
        e.bytes += g.bytes;
    }

    let finish = |m: Vec<GroomedFlow>| {
        m.into_iter()
            .map(|mut g| {
                g.members.sort_unstable();
                g
            })
            .collect()
    };
    Ok(Grooming {
        s2s: finish(s2s.into_values().collect()),
        s2r: finish(s2r.into_values().collect()),
        r2r: finish(r2r.into_values().collect()),
    })
}

/// Groomed bits per epoch for every ordered rack pair, per groomed class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct R2rDemand {
    leaves: usize,
    critical: Vec<f64>,
    mice: Vec<f64>,
}

impl R2rDemand {
    pub fn zero(leaves: usize) -> Self {
        Self {
            leaves,
            critical: vec![0.0; leaves * leaves],
            mice: vec![0.0; leaves * leaves],
        }
    }

    /// Same CF and MF bits for every ordered pair.
    pub fn uniform(leaves: usize, cf_bits: f64, mf_bits: f64) -> Self {
        let mut d = Self::zero(leaves);
        for i in 0..leaves {
            for j in 0..leaves {
                if i != j {
                    d.set(FlowClass::Critical, i, j, cf_bits);
                    d.set(FlowClass::Mice, i, j, mf_bits);
                }
            }
        }
        d
    }

    /// Peak per-epoch R2R aggregate of each pair.
    pub fn from_groomed(leaves: usize, groomed: &[GroomedFlow]) -> Self {
        let mut d = Self::zero(leaves);
        for g in groomed.iter().filter(|g| g.stage == Stage::R2R) {
            let cur = d.get(g.class, g.src_rack, g.dst_rack);
            d.set(g.class, g.src_rack, g.dst_rack, cur.max(g.bits()));
        }
        d
    }

    pub fn leaves(&self) -> usize {
        self.leaves
    }

    fn table(&self, class: FlowClass) -> &[f64] {
        match class {
            FlowClass::Critical => &self.critical,
            FlowClass::Mice => &self.mice,
            FlowClass::Elephant => panic!("elephant flows have no rack-to-rack demand"),
        }
    }

    pub fn get(&self, class: FlowClass, i: usize, j: usize) -> f64 {
        self.table(class)[i * self.leaves + j]
    }

    pub fn set(&mut self, class: FlowClass, i: usize, j: usize, bits: f64) {
        assert!(bits >= 0.0 && bits.is_finite(), "demand must be finite and nonnegative");
        let n = self.leaves;
        match class {
            FlowClass::Critical => self.critical[i * n + j] = bits,
            FlowClass::Mice => self.mice[i * n + j] = bits,
            FlowClass::Elephant => panic!("elephant flows have no rack-to-rack demand"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lightpath {
    pub class: FlowClass,
    pub src: NodeId,
    pub dst: NodeId,
    pub src_rack: usize,
    pub dst_rack: usize,
    pub spine: usize,
    pub wavelength: Wavelength,
    pub links: Vec<LinkId>,
    /// Intensity on each entry of `links`.
    pub intensities: Vec<f64>,
    /// Bottleneck capacity in bits/s.
    pub capacity: f64,
    /// EF flow carried, if any.
    pub flow: Option<u64>,
}

impl Lightpath {
    pub fn route_label(&self) -> String {
        let hops: Vec<String> = self.links.iter().map(|l| l.0.to_string()).collect();
        format!("cs{}:{}", self.spine, hops.join("-"))
    }
}

/// Release every wavelength held by `lp`.
pub fn teardown(state: &mut ResourceState, lp: &Lightpath) {
    for &l in &lp.links {
        state.release(l, lp.wavelength);
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProvisionError {
    #[error("no collision-free wavelength for {class} lightpath from rack {src} to rack {dst} (W={wavelengths}, bound requires W>={bound})")]
    NoWavelength {
        class: FlowClass,
        src: usize,
        dst: usize,
        wavelengths: usize,
        bound: usize,
    },
    #[error("intensity budget exhausted on link {link} for {class} lightpath from rack {src} to rack {dst}")]
    Budget {
        class: FlowClass,
        src: usize,
        dst: usize,
        link: LinkId,
    },
    #[error("DXC port limit {ports} reached at rack {rack}")]
    DxcPorts { rack: usize, ports: usize },
    #[error("DXC processing rate exceeded at rack {rack}: {load} > {rate} bit/s")]
    DxcRate { rack: usize, load: f64, rate: f64 },
    #[error("demand matrix is for {demand} racks, topology has {topo}")]
    Shape { demand: usize, topo: usize },
}

/// Shortest-path counts and their intensity costs for every rack pair.
#[derive(Debug, Clone, PartialEq)]
pub struct KspState {
    pub k: Vec<Vec<usize>>,
    pub d: Vec<Vec<f64>>,
}

/// Per-link intensities of an R2R lightpath through `spine`.
fn r2r_intensities(
    topo: &PhysicalTopology,
    links: &[LinkId; 2],
    bits: f64,
    tau: f64,
) -> [f64; 2] {
    let rate = channel::demand_rate(bits, tau);
    let b = topo.bandwidth();
    links.map(|l| intensity_for_demand(topo.gain(l), rate, b))
}

fn fits(state: &ResourceState, link: LinkId, e: f64) -> bool {
    let slack = 1e-9 * state.total_intensity().max(state.max_intensity());
    e <= state.max_intensity() + slack && e <= state.residual(link) + slack
}

/// Candidate (spine, common free set) pairs for rack pair (i, j).
fn r2r_candidates(
    topo: &PhysicalTopology,
    state: &ResourceState,
    i: usize,
    j: usize,
    bits: f64,
    tau: f64,
) -> Vec<(usize, WavelengthSet, [f64; 2])> {
    (0..topo.spines())
        .filter_map(|c| {
            let links = topo.r2r_route(i, j, c);
            let common = state.free_set(links[0]).intersect(&state.free_set(links[1]));
            if common.is_empty() {
                return None;
            }
            let e = r2r_intensities(topo, &links, bits, tau);
            (fits(state, links[0], e[0]) && fits(state, links[1], e[1])).then_some((c, common, e))
        })
        .collect()
}

/// K and D matrices for one groomed class.
pub fn ksp_state(
    topo: &PhysicalTopology,
    state: &ResourceState,
    demand: &R2rDemand,
    class: FlowClass,
    tau: f64,
) -> KspState {
    let n = topo.leaves();
    let mut k = vec![vec![0; n]; n];
    let mut d = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let cands = r2r_candidates(topo, state, i, j, demand.get(class, i, j), tau);
            k[i][j] = cands.len();
            d[i][j] = cands.iter().map(|(_, _, e)| e[0] + e[1]).sum();
        }
    }
    KspState { k, d }
}

struct Builder<'a> {
    topo: &'a PhysicalTopology,
    state: &'a mut ResourceState,
    tau: f64,
    lightpaths: Vec<Lightpath>,
    /// Bits per lightpath, parallel to `lightpaths`.
    bits: Vec<f64>,
    repairs: usize,
}

impl Builder<'_> {
    fn make(&self, class: FlowClass, i: usize, j: usize, spine: usize, w: Wavelength, bits: f64) -> Lightpath {
        let links = self.topo.r2r_route(i, j, spine);
        let e = r2r_intensities(self.topo, &links, bits, self.tau);
        let b = self.topo.bandwidth();
        let cap = links
            .iter()
            .zip(e)
            .map(|(l, e)| capacity(self.topo.gain(*l), e, b))
            .fold(f64::INFINITY, f64::min);
        Lightpath {
            class,
            src: self.topo.edge_switch(i),
            dst: self.topo.edge_switch(j),
            src_rack: i,
            dst_rack: j,
            spine,
            wavelength: w,
            links: links.to_vec(),
            intensities: e.to_vec(),
            capacity: cap,
            flow: None,
        }
    }

    fn reserve(&mut self, lp: &Lightpath) -> Result<(), (LinkId, ReserveError)> {
        for (k, (&l, &e)) in lp.links.iter().zip(&lp.intensities).enumerate() {
            if let Err(err) = self.state.reserve(l, lp.wavelength, e) {
                for &done in &lp.links[..k] {
                    self.state.release(done, lp.wavelength);
                }
                return Err((l, err));
            }
        }
        Ok(())
    }

    /// Every (spine, wavelength) free on the uplinks (or downlinks) of `rack`.
    fn free_colours(&self, rack: usize, uplink: bool) -> Vec<(usize, Wavelength)> {
        let es = self.topo.edge_switch(rack);
        (0..self.topo.spines())
            .flat_map(|c| {
                let cs = self.topo.core_switch(c);
                let l = if uplink {
                    self.topo.link_between(es, cs)
                } else {
                    self.topo.link_between(cs, es)
                };
                self.state.free_set(l.unwrap()).iter().map(move |w| (c, w)).collect::<Vec<_>>()
            })
            .collect()
    }

    /// Place (i, j) through `spine` after moving placed lightpaths off any
    /// hop whose residual is too small. Each mover goes to the other spine
    /// with the most bottleneck residual that still has a common colour.
    /// All or nothing.
    fn relocate_onto(&mut self, class: FlowClass, i: usize, j: usize, spine: usize, bits: f64) -> bool {
        let links = self.topo.r2r_route(i, j, spine);
        let e = r2r_intensities(self.topo, &links, bits, self.tau);
        if e.iter().any(|&x| x > self.state.max_intensity() * (1.0 + 1e-9)) {
            return false;
        }
        let mut moved: Vec<(usize, Lightpath)> = Vec::new();
        let mut ok = true;
        'hops: for (&l, &need) in links.iter().zip(&e) {
            while !fits(self.state, l, need) {
                // Heaviest first so the fewest lightpaths move.
                let mut on_link: Vec<usize> = (0..self.lightpaths.len())
                    .filter(|&k| {
                        self.lightpaths[k].links.contains(&l)
                            && !moved.iter().any(|(m, _)| *m == k)
                            && self.lightpaths[k].intensities.iter().any(|&x| x > 0.0)
                    })
                    .collect();
                on_link.sort_by(|&a, &c| {
                    let ia = self.lightpaths[a].intensities.iter().sum::<f64>();
                    let ic = self.lightpaths[c].intensities.iter().sum::<f64>();
                    ic.total_cmp(&ia).then(a.cmp(&c))
                });
                let mut progressed = false;
                for k in on_link {
                    let old = self.lightpaths[k].clone();
                    teardown(self.state, &old);
                    let target = r2r_candidates(
                        self.topo,
                        self.state,
                        old.src_rack,
                        old.dst_rack,
                        self.bits[k],
                        self.tau,
                    )
                    .into_iter()
                    .filter(|(c, _, _)| *c != old.spine && *c != spine)
                    .max_by(|a, c| {
                        let ra = r2r_bottleneck(self, old.src_rack, old.dst_rack, a.0);
                        let rc = r2r_bottleneck(self, old.src_rack, old.dst_rack, c.0);
                        ra.total_cmp(&rc).then(c.0.cmp(&a.0))
                    });
                    if let Some((c, common, _)) = target {
                        let w = common.first().expect("candidate has a colour");
                        let new = self.make(old.class, old.src_rack, old.dst_rack, c, w, self.bits[k]);
                        if self.reserve(&new).is_ok() {
                            self.lightpaths[k] = new;
                            moved.push((k, old));
                            progressed = true;
                            break;
                        }
                    }
                    self.reserve(&old).expect("restoring a lightpath");
                }
                if !progressed {
                    ok = false;
                    break 'hops;
                }
            }
        }
        let common = self.state.free_set(links[0]).intersect(&self.state.free_set(links[1]));
        if ok {
            if let Some(w) = common.first() {
                let lp = self.make(class, i, j, spine, w, bits);
                if self.reserve(&lp).is_ok() {
                    self.lightpaths.push(lp);
                    self.bits.push(bits);
                    self.repairs += moved.len();
                    return true;
                }
            }
        }
        for (k, old) in moved.into_iter().rev() {
            let cur = self.lightpaths[k].clone();
            teardown(self.state, &cur);
            self.reserve(&old).expect("restoring a lightpath");
            self.lightpaths[k] = old;
        }
        false
    }

    /// Kempe-chain swap: make `alpha` free at `j` by swapping alpha/beta
    /// along the alternating path that starts at `j`. Returns false and
    /// leaves everything untouched if the swapped lightpaths do not fit.
    fn kempe_swap(&mut self, j: usize, alpha: (usize, Wavelength), beta: (usize, Wavelength)) -> bool {
        let colour = |lp: &Lightpath| (lp.spine, lp.wavelength);
        let mut path = Vec::new();
        let mut at_dst = true;
        let mut node = j;
        loop {
            let want = if at_dst { alpha } else { beta };
            let next = self.lightpaths.iter().position(|lp| {
                colour(lp) == want && if at_dst { lp.dst_rack == node } else { lp.src_rack == node }
            });
            let Some(k) = next else { break };
            if path.contains(&k) {
                break;
            }
            path.push(k);
            let lp = &self.lightpaths[k];
            node = if at_dst { lp.src_rack } else { lp.dst_rack };
            at_dst = !at_dst;
        }
        if path.is_empty() {
            return true;
        }
        let old: Vec<Lightpath> = path.iter().map(|&k| self.lightpaths[k].clone()).collect();
        for lp in &old {
            teardown(self.state, lp);
        }
        let mut placed = Vec::new();
        let mut ok = true;
        for (&k, lp) in path.iter().zip(&old) {
            let (c, w) = if colour(lp) == alpha { beta } else { alpha };
            let new = self.make(lp.class, lp.src_rack, lp.dst_rack, c, w, self.bits[k]);
            if self.reserve(&new).is_err() {
                ok = false;
                break;
            }
            placed.push(new);
        }
        if !ok {
            for lp in &placed {
                teardown(self.state, lp);
            }
            for lp in &old {
                self.reserve(lp).expect("restoring previous lightpaths");
            }
            return false;
        }
        for (&k, lp) in path.iter().zip(placed) {
            self.lightpaths[k] = lp;
        }
        self.repairs += 1;
        true
    }
}

/// Result of rack-to-rack provisioning.
#[derive(Debug, Clone, PartialEq)]
pub struct R2rPlan {
    pub lightpaths: Vec<Lightpath>,
    /// Number of Kempe-chain recolourings and relocations needed.
    pub repairs: usize,
    /// True when the greedy pass failed and the colouring fallback placed
    /// the lightpaths.
    pub structured: bool,
}

/// Provision one CF and one MF lightpath for every ordered rack pair.
///
/// CF lightpaths are placed first, then MF. Within a class the pair with
/// the fewest feasible routes goes next, ties to the largest intensity cost,
/// then lexicographic. Route is the candidate with the largest bottleneck
/// residual, wavelength is first-fit. When the greedy order leaves a pair
/// with no common colour, a Kempe-chain recolouring of already placed
/// lightpaths is attempted before giving up.
pub fn provision_r2r(
    topo: &PhysicalTopology,
    state: &mut ResourceState,
    demand: &R2rDemand,
    tau_h: f64,
) -> Result<R2rPlan, ProvisionError> {
    let n = topo.leaves();
    if demand.leaves() != n {
        return Err(ProvisionError::Shape {
            demand: demand.leaves(),
            topo: n,
        });
    }
    let cfg = topo.config();
    for r in 0..n {
        let load: f64 = (0..n)
            .filter(|&o| o != r)
            .flat_map(|o| [(r, o), (o, r)])
            .map(|(a, b)| demand.get(FlowClass::Critical, a, b) + demand.get(FlowClass::Mice, a, b))
            .sum::<f64>()
            / tau_h;
        if load > cfg.dxc_rate {
            return Err(ProvisionError::DxcRate {
                rack: r,
                load,
                rate: cfg.dxc_rate,
            });
        }
        if 2 * (n - 1) > cfg.dxc_ports {
            return Err(ProvisionError::DxcPorts {
                rack: r,
                ports: cfg.dxc_ports,
            });
        }
    }

    let snapshot = state.clone();
    let mut b = Builder {
        topo,
        state,
        tau: tau_h,
        lightpaths: Vec::with_capacity(2 * n * (n - 1)),
        bits: Vec::new(),
        repairs: 0,
    };
    let result = provision_classes(&mut b, demand, n);
    match result {
        Ok(()) => Ok(R2rPlan {
            lightpaths: b.lightpaths,
            repairs: b.repairs,
            structured: false,
        }),
        Err(e) => {
            *b.state = snapshot;
            let mut fb = Builder {
                topo,
                state: b.state,
                tau: tau_h,
                lightpaths: Vec::new(),
                bits: Vec::new(),
                repairs: 0,
            };
            if provision_structured(&mut fb, demand, n) {
                Ok(R2rPlan {
                    lightpaths: fb.lightpaths,
                    repairs: 0,
                    structured: true,
                })
            } else {
                Err(e)
            }
        }
    }
}

/// Colouring fallback. Lightpaths needing more than a fair share of E_T
/// on some hop are heavy; heavy pairs are edge-coloured first and colour k
/// goes to spine k mod C, so every hop carries at most ceil(colours / C)
/// heavy lightpaths, which must fit its budget. Light pairs are coloured
/// into the remaining (spine, wavelength) slots round-robin over spines.
/// Leaves the state untouched on failure.
fn provision_structured(b: &mut Builder<'_>, demand: &R2rDemand, n: usize) -> bool {
    let (c_count, w_count) = (b.topo.spines(), b.topo.wavelengths());
    let fair = b.state.total_intensity() / w_count as f64;
    let mut heavy = Vec::new();
    let mut light = Vec::new();
    for class in [FlowClass::Critical, FlowClass::Mice] {
        for i in 0..n {
            for j in (0..n).filter(|&j| j != i) {
                let bits = demand.get(class, i, j);
                let is_heavy = (0..c_count).any(|c| {
                    let links = b.topo.r2r_route(i, j, c);
                    r2r_intensities(b.topo, &links, bits, b.tau).iter().any(|&e| e > fair)
                });
                if is_heavy { &mut heavy } else { &mut light }.push((class, i, j, bits));
            }
        }
    }
    let edges = |v: &[(FlowClass, usize, usize, f64)]| -> Vec<(usize, usize)> {
        v.iter().map(|&(_, i, j, _)| (i, j)).collect()
    };
    let (he, le) = (edges(&heavy), edges(&light));
    // Heaviest hop intensity decides how many heavy lightpaths share a hop.
    let mut e_heavy: f64 = 0.0;
    for &(_, i, j, bits) in &heavy {
        for c in 0..c_count {
            let links = b.topo.r2r_route(i, j, c);
            for e in r2r_intensities(b.topo, &links, bits, b.tau) {
                e_heavy = e_heavy.max(e);
            }
        }
    }
    let per_hop = if e_heavy > 0.0 {
        ((b.state.total_intensity() / e_heavy).floor() as usize).min(w_count)
    } else {
        w_count
    };
    let (dh, dl) = (max_degree(&he, n), max_degree(&le, n));
    if dh > c_count * per_hop || dh + dl > c_count * w_count {
        return false;
    }
    let hc = bipartite_edge_colouring(&he, n, dh);
    let lc = bipartite_edge_colouring(&le, n, dl);

    let mut used = vec![vec![false; w_count]; c_count];
    let mut heavy_slots = Vec::new();
    for k in 0..dh {
        let (c, w) = (k % c_count, k / c_count);
        used[c][w] = true;
        heavy_slots.push((c, Wavelength::from_index(w)));
    }
    let mut light_slots = Vec::new();
    for w in 0..w_count {
        for c in 0..c_count {
            if !used[c][w] {
                light_slots.push((c, Wavelength::from_index(w)));
            }
        }
    }
    let snapshot = b.state.clone();
    let placements = heavy
        .iter()
        .zip(hc.iter().map(|&k| heavy_slots[k]))
        .chain(light.iter().zip(lc.iter().map(|&k| light_slots[k])));
    for (&(class, i, j, bits), (c, w)) in placements {
        let lp = b.make(class, i, j, c, w, bits);
        if b.reserve(&lp).is_err() {
            *b.state = snapshot;
            b.lightpaths.clear();
            b.bits.clear();
            return false;
        }
        b.lightpaths.push(lp);
        b.bits.push(bits);
    }
    true
}

fn max_degree(edges: &[(usize, usize)], n: usize) -> usize {
    let mut out = vec![0; n];
    let mut inn = vec![0; n];
    for &(i, j) in edges {
        out[i] += 1;
        inn[j] += 1;
    }
    out.into_iter().chain(inn).max().unwrap_or(0)
}

/// Proper edge colouring of a bipartite multigraph (left i, right j) with
/// `colours` >= max degree colours, by alternating-path swaps.
fn bipartite_edge_colouring(edges: &[(usize, usize)], n: usize, colours: usize) -> Vec<usize> {
    const NONE: usize = usize::MAX;
    // at[node][colour] = edge index; left nodes 0..n, right n..2n.
    let mut at = vec![vec![NONE; colours]; 2 * n];
    let mut colour = vec![NONE; edges.len()];
    for (e, &(i, j)) in edges.iter().enumerate() {
        let (u, v) = (i, n + j);
        let a = (0..colours).find(|&k| at[u][k] == NONE).expect("degree within colours");
        let b = (0..colours).find(|&k| at[v][k] == NONE).expect("degree within colours");
        if at[v][a] != NONE {
            // Flip a/b along the path from v; it cannot reach u.
            let mut path = Vec::new();
            let mut node = v;
            let mut want = a;
            while at[node][want] != NONE {
                let f = at[node][want];
                path.push(f);
                let (fi, fj) = edges[f];
                node = if node == fi { n + fj } else { fi };
                want = if want == a { b } else { a };
            }
            for &f in &path {
                let (fi, fj) = edges[f];
                at[fi][colour[f]] = NONE;
                at[n + fj][colour[f]] = NONE;
            }
            for &f in &path {
                let (fi, fj) = edges[f];
                colour[f] = if colour[f] == a { b } else { a };
                at[fi][colour[f]] = f;
                at[n + fj][colour[f]] = f;
            }
        }
        colour[e] = a;
        at[u][a] = e;
        at[v][a] = e;
    }
    colour
}

fn provision_classes(b: &mut Builder<'_>, demand: &R2rDemand, n: usize) -> Result<(), ProvisionError> {
    for class in [FlowClass::Critical, FlowClass::Mice] {
        let mut pending: Vec<(usize, usize)> = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .collect();
        while !pending.is_empty() {
            // Pick the most constrained pair.
            let mut best: Option<(usize, usize, f64, Vec<(usize, WavelengthSet, [f64; 2])>)> = None;
            for (k, &(i, j)) in pending.iter().enumerate() {
                let cands = r2r_candidates(b.topo, b.state, i, j, demand.get(class, i, j), b.tau);
                let cost: f64 = cands.iter().map(|(_, _, e)| e[0] + e[1]).sum();
                let better = match &best {
                    None => true,
                    Some((_, _, bc, bcands)) => match cands.len().cmp(&bcands.len()) {
                        Ordering::Less => true,
                        Ordering::Greater => false,
                        Ordering::Equal => cost > *bc,
                    },
                };
                if better {
                    best = Some((k, 0, cost, cands));
                }
                if best.as_ref().is_some_and(|b| b.3.is_empty()) {
                    break;
                }
            }
            let (k, _, _, cands) = best.expect("pending is nonempty");
            let (i, j) = pending.remove(k);
            let bits = demand.get(class, i, j);

            if cands.is_empty() {
                place_with_repair(b, class, i, j, bits)?;
                continue;
            }
            // Largest bottleneck residual, ties to lowest spine.
            let (spine, free, _) = cands
                .iter()
                .max_by(|a, c| {
                    let ra = r2r_bottleneck(b, i, j, a.0);
                    let rc = r2r_bottleneck(b, i, j, c.0);
                    ra.total_cmp(&rc).then(c.0.cmp(&a.0))
                })
                .cloned()
                .expect("nonempty");
            let w = free.first().expect("candidate has a free wavelength");
            let lp = b.make(class, i, j, spine, w, bits);
            b.reserve(&lp).map_err(|(link, _)| ProvisionError::Budget {
                class,
                src: i,
                dst: j,
                link,
            })?;
            b.lightpaths.push(lp);
            b.bits.push(bits);
        }
    }
    Ok(())
}

fn r2r_bottleneck(b: &Builder<'_>, i: usize, j: usize, spine: usize) -> f64 {
    let links = b.topo.r2r_route(i, j, spine);
    b.state.residual(links[0]).min(b.state.residual(links[1]))
}

fn place_with_repair(
    b: &mut Builder<'_>,
    class: FlowClass,
    i: usize,
    j: usize,
    bits: f64,
) -> Result<(), ProvisionError> {
    let no_wavelength = || ProvisionError::NoWavelength {
        class,
        src: i,
        dst: j,
        wavelengths: b.topo.wavelengths(),
        bound: min_wavelengths(b.topo.leaves(), b.topo.config().spine_ratio),
    };
    // A shared colour that only failed on budget: move placed lightpaths off
    // the saturated hops, else report the budget failure.
    let mut budget_link = None;
    for c in 0..b.topo.spines() {
        let links = b.topo.r2r_route(i, j, c);
        let common = b.state.free_set(links[0]).intersect(&b.state.free_set(links[1]));
        if common.is_empty() {
            continue;
        }
        if b.relocate_onto(class, i, j, c, bits) {
            return Ok(());
        }
        if budget_link.is_none() {
            let e = r2r_intensities(b.topo, &links, bits, b.tau);
            budget_link = Some(if fits(b.state, links[0], e[0]) { links[1] } else { links[0] });
        }
    }
    // Try every free colour pair; each attempt is rolled back on failure.
    let alphas = b.free_colours(i, true);
    let betas = b.free_colours(j, false);
    if budget_link.is_none() && (alphas.is_empty() || betas.is_empty()) {
        return Err(no_wavelength());
    }
    let mut swapped = false;
    for &alpha in &alphas {
        for &beta in &betas {
            let saved = (b.state.clone(), b.lightpaths.clone(), b.repairs);
            if !b.kempe_swap(j, alpha, beta) {
                continue;
            }
            swapped = true;
            let lp = b.make(class, i, j, alpha.0, alpha.1, bits);
            if b.reserve(&lp).is_ok() {
                b.lightpaths.push(lp);
                b.bits.push(bits);
                return Ok(());
            }
            if b.relocate_onto(class, i, j, alpha.0, bits) {
                return Ok(());
            }
            (*b.state, b.lightpaths, b.repairs) = saved;
        }
    }
    match budget_link {
        Some(link) => Err(ProvisionError::Budget {
            class,
            src: i,
            dst: j,
            link,
        }),
        None if swapped => Err(ProvisionError::Budget {
            class,
            src: i,
            dst: j,
            link: b.topo.r2r_route(i, j, alphas[0].0)[0],
        }),
        None => Err(no_wavelength()),
    }
}

/// A candidate EF route S -> ES -> CS -> ES -> D.
#[derive(Debug, Clone, PartialEq)]
pub struct Route {
    pub spine: usize,
    pub links: [LinkId; 4],
    /// Wavelengths free on every hop.
    pub free: WavelengthSet,
}

/// All routes between servers `s` and `d` with a wavelength free on every hop.
pub fn feasible_routes(
    topo: &PhysicalTopology,
    state: &ResourceState,
    s: NodeId,
    d: NodeId,
) -> Vec<Route> {
    (0..topo.spines())
        .filter_map(|c| {
            let links = topo.server_route(s, d, c);
            let free = links
                .iter()
                .map(|l| state.free_set(*l))
                .reduce(|a, b| a.intersect(&b))
                .expect("four links");
            (!free.is_empty()).then_some(Route {
                spine: c,
                links,
                free,
            })
        })
        .collect()
}

/// Bottleneck capacity and per-link intensities an EF of `bits` would get on `route`.
pub fn route_capacity(
    topo: &PhysicalTopology,
    state: &ResourceState,
    route: &Route,
    bits: f64,
    deadline: f64,
) -> (f64, [f64; 4]) {
    let b = topo.bandwidth();
    let mut e = [0.0; 4];
    let mut cap = f64::INFINITY;
    for (k, &l) in route.links.iter().enumerate() {
        let g = topo.gain(l);
        e[k] = channel::ef_intensity(state, l, g, bits, deadline, b).unwrap_or(0.0);
        cap = cap.min(capacity(g, e[k], b));
    }
    (cap, e)
}

/// Routes sorted best first by free-wavelength count times bottleneck
/// capacity, ties to the lowest spine.
pub fn rank_routes(
    topo: &PhysicalTopology,
    state: &ResourceState,
    routes: &[Route],
    bits: f64,
    deadline: f64,
) -> Vec<(Route, f64)> {
    let mut scored: Vec<(Route, f64)> = routes
        .iter()
        .map(|r| {
            let (c, _) = route_capacity(topo, state, r, bits, deadline);
            (r.clone(), r.free.len() as f64 * c)
        })
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.spine.cmp(&b.0.spine)));
    scored
}

pub fn best_fit_route(
    topo: &PhysicalTopology,
    state: &ResourceState,
    routes: &[Route],
    bits: f64,
    deadline: f64,
) -> Option<Route> {
    rank_routes(topo, state, routes, bits, deadline)
        .into_iter()
        .next()
        .map(|(r, _)| r)
}

/// Lowest wavelength free on every hop of `route`.
pub fn first_fit_wavelength(state: &ResourceState, links: &[LinkId]) -> Option<Wavelength> {
    links
        .iter()
        .map(|l| state.free_set(*l))
        .reduce(|a, b| a.intersect(&b))
        .and_then(|s| s.first())
}

/// Shortest job first; ties by arrival then id.
pub fn sjf_cmp(a: &Flow, b: &Flow) -> Ordering {
    a.bytes
        .cmp(&b.bytes)
        .then(a.arrival.total_cmp(&b.arrival))
        .then(a.id.cmp(&b.id))
}

pub fn sjf_order(contending: &[Flow]) -> Vec<Flow> {
    let mut v = contending.to_vec();
    v.sort_by(sjf_cmp);
    v
}

#[derive(Debug, Clone, PartialEq)]
pub enum EfOutcome {
    Provisioned(Lightpath),
    Blocked,
}

/// Express lightpath for an elephant flow. Routes are tried best first; a
/// route whose bottleneck capacity is zero or whose reservation fails is
/// skipped.
pub fn provision_ef(
    topo: &PhysicalTopology,
    state: &mut ResourceState,
    flow: &Flow,
    log: Option<&mut PolicyLog>,
) -> EfOutcome {
    provision_ef_at(topo, state, flow, flow.arrival, log)
}

/// As [`provision_ef`], logging the decision at time `now` (a retry of a
/// waiting flow happens after its arrival).
pub fn provision_ef_at(
    topo: &PhysicalTopology,
    state: &mut ResourceState,
    flow: &Flow,
    now: f64,
    log: Option<&mut PolicyLog>,
) -> EfOutcome {
    assert_eq!(flow.class, FlowClass::Elephant, "provision_ef takes elephant flows");
    let routes = feasible_routes(topo, state, flow.src, flow.dst);
    let ranked = rank_routes(topo, state, &routes, flow.bits(), flow.deadline);
    let mut outcome = EfOutcome::Blocked;
    for (route, _) in ranked {
        let (cap, e) = route_capacity(topo, state, &route, flow.bits(), flow.deadline);
        if !(cap > 0.0) {
            continue;
        }
        let w = route.free.first().expect("feasible route");
        let mut done = 0;
        for (&l, &x) in route.links.iter().zip(&e) {
            if state.reserve(l, w, x).is_err() {
                break;
            }
            done += 1;
        }
        if done < route.links.len() {
            for &l in &route.links[..done] {
                state.release(l, w);
            }
            continue;
        }
        outcome = EfOutcome::Provisioned(Lightpath {
            class: FlowClass::Elephant,
            src: flow.src,
            dst: flow.dst,
            src_rack: topo.rack_of(flow.src).expect("server"),
            dst_rack: topo.rack_of(flow.dst).expect("server"),
            spine: route.spine,
            wavelength: w,
            links: route.links.to_vec(),
            intensities: e.to_vec(),
            capacity: cap,
            flow: Some(flow.id),
        });
        break;
    }
    if let Some(log) = log {
        match &outcome {
            EfOutcome::Provisioned(lp) => log.record(now, flow.id, "provision", Some(lp)),
            EfOutcome::Blocked => log.record(now, flow.id, "blocked", None),
        }
    }
    outcome
}

/// Append-only text log of policy decisions.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PolicyLog {
    lines: Vec<String>,
}

impl PolicyLog {
    pub fn new() -> Self {
        Self::default()
    }

    /// One line: time, flow id, decision, route, wavelength, bottleneck intensity.
    pub fn record(&mut self, time: f64, flow: u64, decision: &str, lp: Option<&Lightpath>) {
        let mut s = String::new();
        let _ = write!(s, "{time:.9} flow={flow} {decision}");
        match lp {
            Some(lp) => {
                let e = lp.intensities.iter().copied().fold(f64::INFINITY, f64::min);
                let _ = write!(s, " route={} w={} e={:.6e}", lp.route_label(), lp.wavelength, e);
            }
            None => s.push_str(" route=- w=- e=-"),
        }
        self.lines.push(s);
    }

    pub fn lines(&self) -> &[String] {
        &self.lines
    }

    pub fn len(&self) -> usize {
        self.lines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lines.is_empty()
    }

    pub fn to_text(&self) -> String {
        let mut s = self.lines.join("\n");
        if !s.is_empty() {
            s.push('\n');
        }
        s
    }
}
