//! CF and EF flows sharing one lightpath, served packet by packet.
//!
//! Under two-priority service a CF arrival waits for at most the packet of
//! an EF that is on the wire; EF service resumes when the high queue is
//! empty. Under a single queue flows are sent whole in arrival order.
//! EF runs are simulated in chunks, so cost scales with flows, not packets.

use std::collections::VecDeque;

use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use super::queueing::Discipline;
use super::{mean, percentile, rng, EventQueue, SimError, Stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkFctConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "d_capacity")]
    pub capacity: f64,
    /// Offered load as a fraction of capacity.
    #[serde(default = "d_load")]
    pub load: f64,
    #[serde(default = "d_cf_bytes")]
    pub cf_bytes: u64,
    #[serde(default = "d_ef_bytes")]
    pub ef_bytes: u64,
    /// Share of flows that are CF.
    #[serde(default = "d_cf_share")]
    pub cf_share: f64,
    #[serde(default = "d_packet")]
    pub packet_bytes: u64,
    /// Number of flows to generate.
    #[serde(default = "d_flows")]
    pub flows: usize,
    #[serde(default = "d_discipline")]
    pub discipline: Discipline,
}

fn d_capacity() -> f64 {
    10e9
}
fn d_load() -> f64 {
    0.75
}
fn d_cf_bytes() -> u64 {
    100_000
}
fn d_ef_bytes() -> u64 {
    100_000_000
}
fn d_cf_share() -> f64 {
    0.8
}
fn d_packet() -> u64 {
    1500
}
fn d_flows() -> usize {
    20_000
}
fn d_discipline() -> Discipline {
    Discipline::TwoPriority
}

impl Default for LinkFctConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            capacity: d_capacity(),
            load: d_load(),
            cf_bytes: d_cf_bytes(),
            ef_bytes: d_ef_bytes(),
            cf_share: d_cf_share(),
            packet_bytes: d_packet(),
            flows: d_flows(),
            discipline: d_discipline(),
        }
    }
}

impl LinkFctConfig {
    fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::Config(m.into()));
        if !(self.capacity > 0.0) {
            return bad("capacity must be positive");
        }
        if !(self.load > 0.0 && self.load < 1.0) {
            return bad("load must be in (0, 1)");
        }
        if self.cf_bytes == 0 || self.ef_bytes == 0 || self.packet_bytes == 0 {
            return bad("sizes must be positive");
        }
        if !(0.0..=1.0).contains(&self.cf_share) {
            return bad("cf_share must be in [0, 1]");
        }
        Ok(())
    }

    /// Flow arrival rate giving the configured load.
    pub fn arrival_rate(&self) -> f64 {
        let mean_bits =
            8.0 * (self.cf_share * self.cf_bytes as f64 + (1.0 - self.cf_share) * self.ef_bytes as f64);
        self.load * self.capacity / mean_bits
    }

    fn packets(&self, bytes: u64) -> u64 {
        bytes.div_ceil(self.packet_bytes)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkFctResult {
    pub discipline: Discipline,
    pub cf_fct: Vec<f64>,
    pub ef_fct: Vec<f64>,
    pub horizon: f64,
}

impl LinkFctResult {
    pub fn cf_mean(&self) -> f64 {
        mean(&self.cf_fct)
    }

    pub fn ef_mean(&self) -> f64 {
        mean(&self.ef_fct)
    }

    pub fn cf_p99(&self) -> f64 {
        percentile(&self.cf_fct, 99.0)
    }
}

#[derive(Debug, Clone, Copy)]
struct Job {
    arrival: f64,
    critical: bool,
    remaining: u64,
}

#[derive(Debug, Clone, Copy)]
enum Ev {
    RunEnd(u64),
    Arrive(usize),
}

struct Run {
    job: Job,
    from_high: bool,
    start: f64,
    planned: u64,
    gen: u64,
}

pub fn run_link_fct(cfg: &LinkFctConfig) -> Result<LinkFctResult, SimError> {
    cfg.validate()?;
    let mut arr = rng(cfg.seed, Stream::Arrivals);
    let mut cls = rng(cfg.seed, Stream::Classes);
    let exp = Exp::new(cfg.arrival_rate()).map_err(|e| SimError::Config(e.to_string()))?;
    let mut jobs = Vec::with_capacity(cfg.flows);
    let mut t = 0.0;
    for _ in 0..cfg.flows {
        t += exp.sample(&mut arr);
        let critical = cls.random::<f64>() < cfg.cf_share;
        let bytes = if critical { cfg.cf_bytes } else { cfg.ef_bytes };
        jobs.push(Job {
            arrival: t,
            critical,
            remaining: cfg.packets(bytes),
        });
    }

    let pt = cfg.packet_bytes as f64 * 8.0 / cfg.capacity;
    let two = cfg.discipline == Discipline::TwoPriority;
    let mut events = EventQueue::new();
    for (k, j) in jobs.iter().enumerate() {
        events.push(j.arrival, 1, Ev::Arrive(k));
    }
    let mut high: VecDeque<Job> = VecDeque::new();
    let mut low: VecDeque<Job> = VecDeque::new();
    let mut run: Option<Run> = None;
    let mut gen = 0u64;
    let mut out = LinkFctResult {
        discipline: cfg.discipline,
        cf_fct: Vec::new(),
        ef_fct: Vec::new(),
        horizon: 0.0,
    };

    // Start the next run if idle.
    let start = |now: f64,
                 run: &mut Option<Run>,
                 high: &mut VecDeque<Job>,
                 low: &mut VecDeque<Job>,
                 gen: &mut u64,
                 events: &mut EventQueue<Ev>| {
        if run.is_some() {
            return;
        }
        let (job, from_high) = match high.pop_front() {
            Some(j) => (j, true),
            None => match low.pop_front() {
                Some(j) => (j, false),
                None => return,
            },
        };
        *gen += 1;
        events.push(now + job.remaining as f64 * pt, 0, Ev::RunEnd(*gen));
        *run = Some(Run {
            job,
            from_high,
            start: now,
            planned: job.remaining,
            gen: *gen,
        });
    };

    while let Some((now, ev)) = events.pop() {
        out.horizon = now;
        match ev {
            Ev::Arrive(k) => {
                let j = jobs[k];
                if two && j.critical {
                    high.push_back(j);
                    // Cut the EF run short at the next packet boundary.
                    if let Some(r) = run.as_mut().filter(|r| !r.from_high && !r.job.critical) {
                        let sent = ((now - r.start) / pt).floor() as u64;
                        let stop = (sent + 1).min(r.planned);
                        if stop < r.planned {
                            gen += 1;
                            r.planned = stop;
                            r.gen = gen;
                            events.push(r.start + stop as f64 * pt, 0, Ev::RunEnd(gen));
                        }
                    }
                } else {
                    low.push_back(j);
                }
                start(now, &mut run, &mut high, &mut low, &mut gen, &mut events);
            }
            Ev::RunEnd(g) => {
                if run.as_ref().is_none_or(|r| r.gen != g) {
                    continue;
                }
                let mut r = run.take().expect("checked");
                r.job.remaining -= r.planned;
                if r.job.remaining == 0 {
                    let fct = now - r.job.arrival;
                    if r.job.critical {
                        out.cf_fct.push(fct);
                    } else {
                        out.ef_fct.push(fct);
                    }
                } else {
                    low.push_front(r.job);
                }
                start(now, &mut run, &mut high, &mut low, &mut gen, &mut events);
            }
        }
        if high.len() + low.len() > 10_000_000 {
            return Err(SimError::Unstable {
                location: "lightpath queue".into(),
                cap: 10_000_000,
                time: now,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lone_flows_take_their_transmission_time() {
        let cfg = LinkFctConfig {
            flows: 1,
            cf_share: 1.0,
            ..Default::default()
        };
        let r = run_link_fct(&cfg).unwrap();
        let want = 67.0 * 1500.0 * 8.0 / 10e9;
        assert!((r.cf_fct[0] - want).abs() < 1e-15);
    }

    #[test]
    fn priority_helps_cf_and_conserves_work() {
        let base = LinkFctConfig {
            flows: 3000,
            seed: 4,
            ..Default::default()
        };
        let two = run_link_fct(&base).unwrap();
        let one = run_link_fct(&LinkFctConfig {
            discipline: Discipline::SingleQueue,
            ..base
        })
        .unwrap();
        assert_eq!(two.cf_fct.len(), one.cf_fct.len());
        assert!(two.cf_mean() * 10.0 < one.cf_mean());
        // Same work, same last departure.
        assert!((two.horizon - one.horizon).abs() < 1e-9);
    }
}
