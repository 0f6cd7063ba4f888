//! Run the provisioning heuristic on a MILP instance and express its
//! decisions as a candidate solution.

use std::collections::BTreeMap;

use super::{Assignment, CandidateSolution, MilpError, MilpInstance, PlannedLightpath};
use crate::channel;
use crate::groom::{self, EfOutcome, Flow, FlowClass, Lightpath, R2rDemand};
use crate::topo::{LinkId, NodeId, PhysicalTopology, ResourceState, Wavelength};

#[derive(Debug, Clone, PartialEq)]
pub struct HeuristicResult {
    pub assignment: Assignment,
    pub candidate: CandidateSolution,
    /// Admitted demand.
    pub admitted: f64,
}

struct Plan<'a> {
    inst: &'a MilpInstance,
    asg: Assignment,
}

impl Plan<'_> {
    fn add(&mut self, src: NodeId, dst: NodeId, w: Wavelength, route: &[LinkId], e: &[f64]) -> Result<usize, MilpError> {
        let pair = self
            .inst
            .pair_index(src, dst)
            .ok_or_else(|| MilpError::Assignment(format!("no pair {src} -> {dst}")))?;
        let w = w.index();
        let slot = self
            .asg
            .lightpaths
            .iter()
            .filter(|l| l.pair == pair && l.wavelength == w)
            .count();
        for (&l, &x) in route.iter().zip(e) {
            self.asg.intensity.insert((l, w), x);
        }
        self.asg.lightpaths.push(PlannedLightpath {
            pair,
            wavelength: w,
            slot,
            route: route.to_vec(),
        });
        Ok(self.asg.lightpaths.len() - 1)
    }
}

/// Groomed flows ride the always-on rack-to-rack lightpaths, each server
/// uplink and downlink carries one access lightpath for its groomed
/// traffic, and elephants get express lightpaths in shortest-job order.
/// An elephant whose express lightpath cannot reach its demand rate is
/// rejected. Rack-to-rack lightpaths that carry nothing are left out.
pub fn heuristic_candidate(
    topo: &PhysicalTopology,
    inst: &MilpInstance,
    state: &ResourceState,
) -> Result<HeuristicResult, MilpError> {
    let mut state = state.clone();
    let flows = &inst.flows;
    let n = topo.leaves();
    let rack = |x: NodeId| topo.rack_of(x).expect("server");

    let mut demand = R2rDemand::zero(n);
    for f in flows.iter().filter(|f| f.class.is_groomed()) {
        let (a, b) = (rack(f.src), rack(f.dst));
        if a != b {
            demand.set(f.class, a, b, demand.get(f.class, a, b) + f.demand);
        }
    }
    let mut trial = state.clone();
    let r2r = match groom::provision_r2r(topo, &mut trial, &demand, 1.0) {
        Ok(plan) => {
            state = trial;
            Some(plan.lightpaths)
        }
        Err(_) => None,
    };

    let mut plan = Plan {
        inst,
        asg: Assignment {
            lightpaths: Vec::new(),
            flows: vec![None; flows.len()],
            intensity: BTreeMap::new(),
        },
    };

    let efs: Vec<Flow> = flows
        .iter()
        .enumerate()
        .filter(|(_, f)| f.class == FlowClass::Elephant)
        .map(|(t, f)| Flow {
            id: t as u64,
            src: f.src,
            dst: f.dst,
            index: 0,
            class: FlowClass::Elephant,
            bytes: (f.demand / 8.0).ceil() as u64,
            arrival: 0.0,
            deadline: 1.0,
        })
        .collect();
    for ef in groom::sjf_order(&efs) {
        let t = ef.id as usize;
        if let EfOutcome::Provisioned(lp) = groom::provision_ef_at(topo, &mut state, &ef, 0.0, None) {
            if lp.capacity >= flows[t].demand * (1.0 - 1e-12) {
                let q = plan.add(lp.src, lp.dst, lp.wavelength, &lp.links, &lp.intensities)?;
                plan.asg.flows[t] = Some(vec![q]);
            } else {
                groom::teardown(&mut state, &lp);
            }
        }
    }

    if let Some(r2r) = r2r {
        let groomed: Vec<usize> = (0..flows.len()).filter(|&t| flows[t].class.is_groomed()).collect();
        let mut used: BTreeMap<(FlowClass, usize, usize), usize> = BTreeMap::new();
        let mut chains: Vec<(usize, Vec<usize>)> = Vec::new();
        let mut access: BTreeMap<(NodeId, NodeId), (usize, f64)> = BTreeMap::new();
        let access_lp = |plan: &mut Plan, state: &mut ResourceState, access: &mut BTreeMap<(NodeId, NodeId), (usize, f64)>, a: NodeId, b: NodeId| {
            if let Some(&(q, _)) = access.get(&(a, b)) {
                return Ok::<usize, MilpError>(q);
            }
            let l = topo.link_between(a, b).expect("access link");
            let w = state
                .free_set(l)
                .first()
                .ok_or_else(|| MilpError::Assignment(format!("no free wavelength on access link {l}")))?;
            let q = plan.add(a, b, w, &[l], &[0.0])?;
            access.insert((a, b), (q, 0.0));
            Ok(q)
        };
        for &t in &groomed {
            let f = &flows[t];
            let (a, b) = (rack(f.src), rack(f.dst));
            let (ea, eb) = (topo.edge_switch(a), topo.edge_switch(b));
            let mut chain = vec![access_lp(&mut plan, &mut state, &mut access, f.src, ea)?];
            if a != b {
                let key = (f.class, a, b);
                let q = match used.get(&key) {
                    Some(&q) => q,
                    None => {
                        let lp: &Lightpath = r2r
                            .iter()
                            .find(|l| l.class == f.class && l.src_rack == a && l.dst_rack == b)
                            .expect("r2r lightpath per class and pair");
                        let q = plan.add(ea, eb, lp.wavelength, &lp.links, &lp.intensities)?;
                        used.insert(key, q);
                        q
                    }
                };
                chain.push(q);
            }
            chain.push(access_lp(&mut plan, &mut state, &mut access, eb, f.dst)?);
            chains.push((t, chain));
        }
        // Size and reserve access intensities now that their loads are known.
        for (&(a, b), &(q, _)) in &access {
            let load: f64 = chains
                .iter()
                .filter(|(_, c)| c.contains(&q))
                .map(|(t, _)| flows[*t].demand)
                .sum();
            let l = topo.link_between(a, b).unwrap();
            let e = channel::intensity_for_demand(topo.gain(l), load, topo.bandwidth());
            let w = Wavelength::from_index(plan.asg.lightpaths[q].wavelength);
            state
                .reserve(l, w, e)
                .map_err(|err| MilpError::Assignment(format!("access link {l}: {err}")))?;
            plan.asg.intensity.insert((l, w.index()), e);
        }
        for (t, chain) in chains {
            plan.asg.flows[t] = Some(chain);
        }
    }

    let admitted = plan.asg.admitted(flows);
    let candidate = inst.candidate(&plan.asg)?;
    Ok(HeuristicResult {
        assignment: plan.asg,
        candidate,
        admitted,
    })
}
