//! MapReduce-shuffle style workload: every rack is split into sets of
//! senders, each set talks to one partner rack.

use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use super::{rng, Stream};
use crate::groom::{Flow, FlowClass};
use crate::topo::PhysicalTopology;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadConfig {
    #[serde(default = "d_sets")]
    pub sets_per_rack: usize,
    #[serde(default = "d_mice")]
    pub mice_per_set: usize,
    #[serde(default = "d_elephants")]
    pub elephants_per_set: usize,
    #[serde(default = "d_mf_bytes")]
    pub mf_bytes: u64,
    #[serde(default = "d_ef_bytes")]
    pub ef_bytes: u64,
    /// Share of mice flows marked mission-critical.
    #[serde(default)]
    pub critical_share: f64,
    /// Seconds between shuffle rounds of mice flows.
    #[serde(default = "d_tau_h")]
    pub round_interval: f64,
    /// EF offered load per elephant sender as a fraction of `link_rate`.
    #[serde(default = "d_load")]
    pub load: f64,
    #[serde(default = "d_link_rate")]
    pub link_rate: f64,
    /// CF/MF deadline.
    #[serde(default = "d_tau_h")]
    pub tau_h: f64,
    /// EF deadline.
    #[serde(default = "d_tau_l")]
    pub tau_l: f64,
    /// Flows are generated in [0, duration).
    #[serde(default = "d_duration")]
    pub duration: f64,
}

fn d_sets() -> usize {
    5
}
fn d_mice() -> usize {
    4
}
fn d_elephants() -> usize {
    1
}
fn d_mf_bytes() -> u64 {
    100_000
}
fn d_ef_bytes() -> u64 {
    100_000_000
}
fn d_tau_h() -> f64 {
    1e-3
}
fn d_tau_l() -> f64 {
    0.1
}
fn d_load() -> f64 {
    0.5
}
fn d_link_rate() -> f64 {
    10e9
}
fn d_duration() -> f64 {
    1.0
}

impl Default for WorkloadConfig {
    fn default() -> Self {
        Self {
            sets_per_rack: d_sets(),
            mice_per_set: d_mice(),
            elephants_per_set: d_elephants(),
            mf_bytes: d_mf_bytes(),
            ef_bytes: d_ef_bytes(),
            critical_share: 0.0,
            round_interval: d_tau_h(),
            load: d_load(),
            link_rate: d_link_rate(),
            tau_h: d_tau_h(),
            tau_l: d_tau_l(),
            duration: d_duration(),
        }
    }
}

impl WorkloadConfig {
    pub fn validate(&self, topo: &PhysicalTopology) -> Result<(), String> {
        let per_set = self.mice_per_set + self.elephants_per_set;
        if self.sets_per_rack * per_set > topo.servers_per_rack() {
            return Err(format!(
                "{} sets of {} senders do not fit in {} servers per rack",
                self.sets_per_rack,
                per_set,
                topo.servers_per_rack()
            ));
        }
        if self.sets_per_rack >= topo.leaves() {
            return Err("need more racks than sets so partner racks differ".into());
        }
        if self.mf_bytes == 0 || self.ef_bytes == 0 {
            return Err("flow sizes must be positive".into());
        }
        for (name, v) in [
            ("round_interval", self.round_interval),
            ("tau_h", self.tau_h),
            ("tau_l", self.tau_l),
            ("duration", self.duration),
            ("link_rate", self.link_rate),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(format!("{name} must be positive"));
            }
        }
        if !(self.load >= 0.0) || !(0.0..=1.0).contains(&self.critical_share) {
            return Err("load must be >= 0 and critical_share in [0, 1]".into());
        }
        Ok(())
    }

    /// Rack that set `g` of rack `i` talks to.
    pub fn partner(&self, leaves: usize, rack: usize, set: usize) -> usize {
        (rack + set + 1) % leaves
    }

    /// Groomed MF bits each communicating rack pair sends per round.
    pub fn mf_bits_per_round(&self) -> f64 {
        (self.mice_per_set as u64 * self.mf_bytes) as f64 * 8.0 * (1.0 - self.critical_share)
    }

    pub fn cf_bits_per_round(&self) -> f64 {
        (self.mice_per_set as u64 * self.mf_bytes) as f64 * 8.0 * self.critical_share
    }

    /// Ordered rack pairs that carry traffic.
    pub fn communicating_pairs(&self, leaves: usize) -> Vec<(usize, usize)> {
        let mut v: Vec<(usize, usize)> = (0..leaves)
            .flat_map(|i| (0..self.sets_per_rack).map(move |g| (i, g)))
            .map(|(i, g)| (i, self.partner(leaves, i, g)))
            .collect();
        v.sort_unstable();
        v.dedup();
        v
    }
}

/// Generate every flow of the run, sorted by arrival then id.
pub fn generate(topo: &PhysicalTopology, cfg: &WorkloadConfig, seed: u64) -> Vec<Flow> {
    let mut arrivals = rng(seed, Stream::Arrivals);
    let mut classes = rng(seed, Stream::Classes);
    let n = topo.leaves();
    let per_set = cfg.mice_per_set + cfg.elephants_per_set;
    let mut flows = Vec::new();
    let mut next_id = 0u64;
    let mut counter = std::collections::HashMap::new();
    let mut push = |flows: &mut Vec<Flow>, src, dst, class, bytes, arrival, deadline| {
        let index = counter.entry((src, dst)).or_insert(0u32);
        flows.push(Flow {
            id: next_id,
            src,
            dst,
            index: *index,
            class,
            bytes,
            arrival,
            deadline,
        });
        *index += 1;
        next_id += 1;
    };

    // Mice: one flow per sender per round, uniformly placed inside the round.
    let rounds = (cfg.duration / cfg.round_interval).ceil() as u64;
    for r in 0..rounds {
        let base = r as f64 * cfg.round_interval;
        for i in 0..n {
            for g in 0..cfg.sets_per_rack {
                let j = cfg.partner(n, i, g);
                for k in 0..cfg.mice_per_set {
                    let slot = g * per_set + k;
                    let t = base + arrivals.random::<f64>() * cfg.round_interval;
                    if t >= cfg.duration {
                        continue;
                    }
                    let class = if classes.random::<f64>() < cfg.critical_share {
                        FlowClass::Critical
                    } else {
                        FlowClass::Mice
                    };
                    let (s, d) = (topo.server(i, slot), topo.server(j, slot));
                    push(&mut flows, s, d, class, cfg.mf_bytes, t, cfg.tau_h);
                }
            }
        }
    }

    // Elephants: Poisson per sender.
    let rate = cfg.load * cfg.link_rate / (cfg.ef_bytes as f64 * 8.0);
    if rate > 0.0 {
        let exp = Exp::new(rate).expect("positive rate");
        for i in 0..n {
            for g in 0..cfg.sets_per_rack {
                let j = cfg.partner(n, i, g);
                for k in 0..cfg.elephants_per_set {
                    let slot = g * per_set + cfg.mice_per_set + k;
                    let (s, d) = (topo.server(i, slot), topo.server(j, slot));
                    let mut t = exp.sample(&mut arrivals);
                    while t < cfg.duration {
                        push(&mut flows, s, d, FlowClass::Elephant, cfg.ef_bytes, t, cfg.tau_l);
                        t += exp.sample(&mut arrivals);
                    }
                }
            }
        }
    }
    flows.sort_by(|a, b| a.arrival.total_cmp(&b.arrival).then(a.id.cmp(&b.id)));
    flows
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topo::{build_topology, SpineRatio, TopologyConfig};

    fn topo() -> PhysicalTopology {
        build_topology(&TopologyConfig::uniform(12, SpineRatio::half(), 25, 4)).unwrap()
    }

    #[test]
    fn mice_fill_four_per_pair_per_round() {
        let t = topo();
        let cfg = WorkloadConfig {
            load: 0.0,
            duration: 1e-3,
            ..Default::default()
        };
        cfg.validate(&t).unwrap();
        let f = generate(&t, &cfg, 1);
        assert_eq!(f.len(), 12 * 5 * 4);
        assert!((cfg.mf_bits_per_round() - 3.2e6).abs() < 1e-6);
        assert_eq!(cfg.communicating_pairs(12).len(), 60);
        for x in &f {
            assert_ne!(t.rack_of(x.src), t.rack_of(x.dst));
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let t = topo();
        let cfg = WorkloadConfig {
            duration: 0.05,
            ..Default::default()
        };
        assert_eq!(generate(&t, &cfg, 5), generate(&t, &cfg, 5));
        assert_ne!(generate(&t, &cfg, 5), generate(&t, &cfg, 6));
    }
}
