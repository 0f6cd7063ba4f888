//! Exhaustive optimum on tiny instances.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{
    check_solution, Assignment, CandidateSolution, CapacityModel, MilpError, MilpInstance, Objective,
    PlannedLightpath,
};
use crate::channel;
use crate::topo::{LinkId, NodeId};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum IntensitySearch {
    /// `levels` evenly spaced intensities up to the per-wavelength cap.
    Grid { levels: usize },
    /// Exact inverse of the capacity curve.
    Minimal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BruteLimits {
    pub max_flows: usize,
    pub max_options: usize,
    pub max_combinations: u64,
    pub intensity: IntensitySearch,
}

impl Default for BruteLimits {
    fn default() -> Self {
        Self {
            max_flows: 6,
            max_options: 16,
            max_combinations: 20_000_000,
            intensity: IntensitySearch::Grid { levels: 8 },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BruteResult {
    pub assignment: Assignment,
    pub candidate: CandidateSolution,
    /// Value of the instance objective.
    pub objective: f64,
    pub admitted: f64,
    pub evaluated: u64,
    pub feasible: u64,
}

/// A segment: (pair, route index, wavelength).
type Segment = (usize, usize, usize);

/// Route and wavelength choices of every flow; option 0 rejects.
fn flow_options(inst: &MilpInstance, t: usize) -> Vec<Vec<Segment>> {
    let f = &inst.flows[t];
    let w_count = inst.options.wavelengths;
    let by_pair = |src: NodeId, dst: NodeId| inst.pair_index(src, dst).expect("pair built for flow");
    let segs = |pi: usize| -> Vec<Segment> {
        let mut v = Vec::new();
        for r in 0..inst.pairs[pi].routes.len() {
            for w in 0..w_count {
                v.push((pi, r, w));
            }
        }
        v
    };
    let mut out = vec![Vec::new()];
    let users_of = |pi: usize| inst.pairs[pi].users.contains(&t);
    let mine: Vec<usize> = (0..inst.pairs.len()).filter(|&pi| users_of(pi)).collect();
    let direct = mine.iter().find(|&&pi| inst.pairs[pi].src == f.src && inst.pairs[pi].dst == f.dst);
    if let Some(&pi) = direct {
        out.extend(segs(pi).into_iter().map(|s| vec![s]));
    }
    // Chain through the edge switches.
    let up = mine.iter().find(|&&pi| inst.pairs[pi].src == f.src && inst.pairs[pi].dst != f.dst);
    let down = mine.iter().find(|&&pi| inst.pairs[pi].dst == f.dst && inst.pairs[pi].src != f.src);
    if let (Some(&u), Some(&d)) = (up, down) {
        let (ea, eb) = (inst.pairs[u].dst, inst.pairs[d].src);
        let mut chains: Vec<Vec<Segment>> = segs(u).into_iter().map(|s| vec![s]).collect();
        if ea != eb {
            let mid = by_pair(ea, eb);
            chains = chains
                .into_iter()
                .flat_map(|c| {
                    segs(mid).into_iter().map(move |s| {
                        let mut c = c.clone();
                        c.push(s);
                        c
                    })
                })
                .collect();
        }
        for c in chains {
            for s in segs(d) {
                let mut c = c.clone();
                c.push(s);
                out.push(c);
            }
        }
    }
    out
}

struct Eval {
    objective: f64,
    admitted: f64,
    /// (pair, route, wavelength) -> flows, in order of first use.
    lps: Vec<(Segment, Vec<usize>)>,
    intensity: BTreeMap<(LinkId, usize), f64>,
}

fn needed(inst: &MilpInstance, li: usize, load: f64, search: IntensitySearch) -> f64 {
    if load <= 0.0 {
        return 0.0;
    }
    let gain = inst.links[li].gain;
    match search {
        IntensitySearch::Minimal => channel::intensity_for_demand(gain, load, inst.bandwidth),
        IntensitySearch::Grid { levels } => {
            let e_max = inst.options.max_intensity;
            (1..=levels)
                .map(|k| e_max * k as f64 / levels as f64)
                .find(|&e| inst.capacity_of(li, e) >= load * (1.0 - 1e-12))
                .unwrap_or(f64::INFINITY)
        }
    }
}

fn evaluate(inst: &MilpInstance, options: &[Vec<Vec<Segment>>], choice: &[usize], search: IntensitySearch) -> Option<Eval> {
    let mut lps: Vec<(Segment, Vec<usize>)> = Vec::new();
    for (t, &c) in choice.iter().enumerate() {
        for &seg in &options[t][c] {
            match lps.iter_mut().find(|(s, _)| *s == seg) {
                Some((_, v)) => v.push(t),
                None => lps.push((seg, vec![t])),
            }
        }
    }
    let w_count = inst.options.wavelengths;
    // (link position, wavelength) -> lightpath
    let mut used: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut loads = Vec::with_capacity(lps.len());
    for (q, &((pi, r, w), ref flows)) in lps.iter().enumerate() {
        let load: f64 = flows.iter().map(|&t| inst.flows[t].demand).sum();
        loads.push(load);
        for &l in &inst.pairs[pi].routes[r] {
            let li = inst.links.iter().position(|x| x.id == l).expect("route link");
            if used.insert((li, w), q).is_some() {
                return None;
            }
        }
    }
    let mut intensity = BTreeMap::new();
    let mut total_e = 0.0;
    let mut per_link: BTreeMap<usize, f64> = BTreeMap::new();
    match inst.options.capacity {
        CapacityModel::Fixed { intensity: e } => {
            if e > inst.options.max_intensity * (1.0 + 1e-12) || e * w_count as f64 > inst.options.total_intensity * (1.0 + 1e-12) {
                return None;
            }
            for (&(li, _), &q) in &used {
                if inst.capacity_of(li, e) < loads[q] * (1.0 - 1e-12) {
                    return None;
                }
            }
            total_e = e * (inst.links.len() * w_count) as f64;
        }
        CapacityModel::Piecewise { .. } => {
            for (&(li, w), &q) in &used {
                let e = needed(inst, li, loads[q], search);
                if e > inst.options.max_intensity * (1.0 + 1e-12) {
                    return None;
                }
                let acc = per_link.entry(li).or_insert(0.0);
                *acc += e;
                if *acc > inst.options.total_intensity * (1.0 + 1e-12) {
                    return None;
                }
                total_e += e;
                intensity.insert((inst.links[li].id, w), e);
            }
        }
    }
    // DXC ports and rate at grooming nodes.
    for &(node, ports, rate) in &inst.dxc {
        let (mut out, mut inn, mut bits) = (0usize, 0usize, 0.0);
        for (q, &((pi, _, _), _)) in lps.iter().enumerate() {
            let p = &inst.pairs[pi];
            if p.src == node {
                out += 1;
                bits += loads[q];
            }
            if p.dst == node {
                inn += 1;
                bits += loads[q];
            }
        }
        if out > ports || inn > ports || bits > rate * (1.0 + 1e-12) {
            return None;
        }
    }
    let admitted: f64 = choice
        .iter()
        .enumerate()
        .filter(|(_, &c)| c != 0)
        .map(|(t, _)| inst.flows[t].demand)
        .sum();
    let objective = match inst.options.objective {
        Objective::MaxAdmitted => admitted,
        Objective::MinIntensity => total_e,
    };
    Some(Eval {
        objective,
        admitted,
        lps,
        intensity,
    })
}

fn to_assignment(inst: &MilpInstance, options: &[Vec<Vec<Segment>>], choice: &[usize], ev: &Eval) -> Assignment {
    let mut keys: Vec<Segment> = ev.lps.iter().map(|(s, _)| *s).collect();
    keys.sort();
    let mut lightpaths = Vec::with_capacity(keys.len());
    let mut pos = BTreeMap::new();
    for &(pi, r, w) in &keys {
        let slot = lightpaths
            .iter()
            .filter(|l: &&PlannedLightpath| l.pair == pi && l.wavelength == w)
            .count();
        pos.insert((pi, r, w), lightpaths.len());
        lightpaths.push(PlannedLightpath {
            pair: pi,
            wavelength: w,
            slot,
            route: inst.pairs[pi].routes[r].clone(),
        });
    }
    let flows = choice
        .iter()
        .enumerate()
        .map(|(t, &c)| (c != 0).then(|| options[t][c].iter().map(|s| pos[s]).collect()))
        .collect();
    Assignment {
        lightpaths,
        flows,
        intensity: ev.intensity.clone(),
    }
}

/// Best assignment over every route, wavelength and grooming choice, with
/// the least intensity meeting each lightpath's load. Ties go to the first
/// choice vector in lexicographic order.
pub fn brute_force_optimum(inst: &MilpInstance, limits: &BruteLimits) -> Result<BruteResult, MilpError> {
    let n = inst.flows.len();
    if n > limits.max_flows {
        return Err(MilpError::Limits(format!("{n} flows > {}", limits.max_flows)));
    }
    let options: Vec<Vec<Vec<Segment>>> = (0..n).map(|t| flow_options(inst, t)).collect();
    let mut combos: u64 = 1;
    for (t, o) in options.iter().enumerate() {
        if o.len() - 1 > limits.max_options {
            return Err(MilpError::Limits(format!(
                "flow {t} has {} choices > {}",
                o.len() - 1,
                limits.max_options
            )));
        }
        combos = combos.saturating_mul(o.len() as u64);
    }
    if combos > limits.max_combinations {
        return Err(MilpError::Limits(format!("{combos} combinations > {}", limits.max_combinations)));
    }
    let first = if inst.options.objective == Objective::MinIntensity { 1 } else { 0 };
    let better = |a: f64, b: f64| match inst.options.objective {
        Objective::MaxAdmitted => a > b,
        Objective::MinIntensity => a < b,
    };
    let mut choice = vec![first; n];
    let mut best: Option<BruteResult> = None;
    let (mut evaluated, mut feasible) = (0u64, 0u64);
    if options.iter().any(|o| o.len() <= first) {
        return Err(MilpError::Limits("a flow has no route".into()));
    }
    loop {
        evaluated += 1;
        if let Some(ev) = evaluate(inst, &options, &choice, limits.intensity) {
            feasible += 1;
            if best.as_ref().is_none_or(|b| better(ev.objective, b.objective)) {
                let asg = to_assignment(inst, &options, &choice, &ev);
                let cand = inst.candidate(&asg)?;
                if check_solution(inst, &cand).is_pass() {
                    best = Some(BruteResult {
                        objective: inst.objective_value(&cand.values),
                        admitted: ev.admitted,
                        assignment: asg,
                        candidate: cand,
                        evaluated: 0,
                        feasible: 0,
                    });
                }
            }
        }
        // Odometer, last flow fastest.
        let mut k = n;
        loop {
            if k == 0 {
                let mut b = best.ok_or_else(|| MilpError::Limits("no feasible assignment".into()))?;
                b.evaluated = evaluated;
                b.feasible = feasible;
                return Ok(b);
            }
            k -= 1;
            choice[k] += 1;
            if choice[k] < options[k].len() {
                break;
            }
            choice[k] = first;
        }
    }
}
