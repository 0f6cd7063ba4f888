//! Tandem of single-server switches with two-priority (or FIFO) queues,
//! Poisson arrivals at the first switch and service resampled at every hop.

use std::collections::VecDeque;

use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use super::{rng, EventQueue, SimError, Stream};
use crate::queue::{HopModel, PathModel, ResidualMode, ServiceModel, TrafficMix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Discipline {
    /// Non-preemptive head-of-line priority.
    TwoPriority,
    /// One FIFO for both classes.
    SingleQueue,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum ServiceLaw {
    Exponential { mean: f64 },
    Deterministic { mean: f64 },
}

impl ServiceLaw {
    pub fn mean(&self) -> f64 {
        match *self {
            ServiceLaw::Exponential { mean } | ServiceLaw::Deterministic { mean } => mean,
        }
    }

    pub fn model(&self) -> ServiceModel {
        match *self {
            ServiceLaw::Exponential { mean } => ServiceModel::exponential(mean),
            ServiceLaw::Deterministic { mean } => ServiceModel::deterministic(mean),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TandemConfig {
    pub seed: u64,
    pub hops: usize,
    pub mix: TrafficMix,
    pub service: ServiceLaw,
    /// Propagation delay in front of every switch, seconds.
    pub propagation: f64,
    pub discipline: Discipline,
    /// Packets injected at the first switch.
    pub packets: u64,
    pub queue_cap: usize,
    /// Keep a per-event trace (memory heavy).
    pub trace: bool,
}

impl TandemConfig {
    pub fn new(seed: u64, hops: usize, mix: TrafficMix, service: ServiceLaw, packets: u64) -> Self {
        Self {
            seed,
            hops,
            mix,
            service,
            propagation: 0.0,
            discipline: Discipline::TwoPriority,
            packets,
            queue_cap: 10_000_000,
            trace: false,
        }
    }

    /// Matching analytic path model.
    pub fn path_model(&self, t_qos: f64) -> PathModel {
        let hop = HopModel {
            mix: self.mix,
            service: self.service.model(),
            propagation: self.propagation,
        };
        PathModel {
            hops: vec![hop; self.hops],
            t_qos,
            mode: ResidualMode::Standard,
        }
    }

    fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::Config(m.to_string()));
        if self.hops == 0 {
            return bad("hops must be >= 1");
        }
        if !(self.service.mean() > 0.0) {
            return bad("service mean must be positive");
        }
        if !(self.propagation >= 0.0) {
            return bad("propagation must be >= 0");
        }
        self.mix.validate().map_err(|e| SimError::Config(e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TraceKind {
    Arrive,
    Start,
    Depart,
}

/// Queue state once an event at one switch has been fully handled.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub time: f64,
    pub switch: usize,
    pub kind: TraceKind,
    pub high: bool,
    pub queued_high: usize,
    pub queued_low: usize,
    pub busy: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassStats {
    pub arrivals: u64,
    pub wait_sum: f64,
    pub wait_sq_sum: f64,
    /// Integral of the number waiting over time.
    pub area: f64,
}

impl ClassStats {
    pub fn mean_wait(&self) -> f64 {
        if self.arrivals == 0 {
            0.0
        } else {
            self.wait_sum / self.arrivals as f64
        }
    }

    pub fn second_wait(&self) -> f64 {
        if self.arrivals == 0 {
            0.0
        } else {
            self.wait_sq_sum / self.arrivals as f64
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct HopStats {
    pub high: ClassStats,
    pub low: ClassStats,
    pub busy_time: f64,
    pub max_queue: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TandemResult {
    pub hops: Vec<HopStats>,
    /// Time the last packet left.
    pub horizon: f64,
    /// End-to-end delays of high- and low-priority packets.
    pub delays_high: Vec<f64>,
    pub delays_low: Vec<f64>,
    pub trace: Vec<TraceEvent>,
}

impl TandemResult {
    /// |L - lambda W| / L for one class at one hop, over the whole run.
    pub fn little_error(&self, hop: usize, high: bool) -> f64 {
        let s = if high { &self.hops[hop].high } else { &self.hops[hop].low };
        if s.area == 0.0 {
            return 0.0;
        }
        let l = s.area / self.horizon;
        let lw = s.arrivals as f64 / self.horizon * s.mean_wait();
        (l - lw).abs() / l
    }

    /// Empirical late fraction weighted like the analytic formula.
    pub fn late_fraction(&self, t_qos: f64, flat: f64) -> f64 {
        let frac = |v: &[f64]| {
            if v.is_empty() {
                0.0
            } else {
                v.iter().filter(|d| **d > t_qos).count() as f64 / v.len() as f64
            }
        };
        (1.0 - flat) * frac(&self.delays_high) + flat * frac(&self.delays_low)
    }
}

#[derive(Debug, Clone, Copy)]
struct Packet {
    high: bool,
    born: f64,
    queued_at: f64,
}

#[derive(Debug)]
enum Ev {
    Inject,
    Arrive { hop: usize, pkt: Packet },
    Depart { hop: usize },
}

const RANK_DEPART: u8 = 0;
const RANK_ARRIVE: u8 = 1;
const RANK_INJECT: u8 = 2;

struct Switch {
    high: VecDeque<Packet>,
    low: VecDeque<Packet>,
    serving: Option<Packet>,
    last: f64,
    stats: HopStats,
}

impl Switch {
    fn account(&mut self, now: f64) {
        let dt = now - self.last;
        self.stats.high.area += self.high.len() as f64 * dt;
        self.stats.low.area += self.low.len() as f64 * dt;
        if self.serving.is_some() {
            self.stats.busy_time += dt;
        }
        self.last = now;
    }
}

/// Run the tandem until every injected packet has left the last switch.
pub fn run_tandem(cfg: &TandemConfig) -> Result<TandemResult, SimError> {
    cfg.validate()?;
    let mut arr_rng = rng(cfg.seed, Stream::Arrivals);
    let mut cls_rng = rng(cfg.seed, Stream::Classes);
    let mut svc_rng = rng(cfg.seed, Stream::Service);
    let total = cfg.mix.lambda_m + cfg.mix.lambda_e;
    let exp_arr = (total > 0.0).then(|| Exp::new(total).expect("positive rate"));
    let exp_svc = Exp::new(1.0 / cfg.service.mean()).expect("positive mean");
    let ef_share = if total > 0.0 { cfg.mix.lambda_e / total } else { 0.0 };
    let mut sample_service = |r: &mut rand_chacha::ChaCha12Rng| match cfg.service {
        ServiceLaw::Exponential { .. } => exp_svc.sample(r),
        ServiceLaw::Deterministic { mean } => mean,
    };

    let mut sw: Vec<Switch> = (0..cfg.hops)
        .map(|_| Switch {
            high: VecDeque::new(),
            low: VecDeque::new(),
            serving: None,
            last: 0.0,
            stats: HopStats::default(),
        })
        .collect();
    let mut q = EventQueue::new();
    let mut injected = 0u64;
    let mut out = TandemResult {
        hops: Vec::new(),
        horizon: 0.0,
        delays_high: Vec::new(),
        delays_low: Vec::new(),
        trace: Vec::new(),
    };
    if let Some(e) = &exp_arr {
        if cfg.packets > 0 {
            q.push(e.sample(&mut arr_rng), RANK_INJECT, Ev::Inject);
        }
    }

    let two = cfg.discipline == Discipline::TwoPriority;
    while let Some((now, ev)) = q.pop() {
        match ev {
            Ev::Inject => {
                injected += 1;
                let is_ef = cls_rng.random::<f64>() < ef_share;
                let high = !(is_ef && cls_rng.random::<f64>() < cfg.mix.flat);
                let pkt = Packet {
                    high,
                    born: now,
                    queued_at: 0.0,
                };
                q.push(now + cfg.propagation, RANK_ARRIVE, Ev::Arrive { hop: 0, pkt });
                if injected < cfg.packets {
                    let dt = exp_arr.as_ref().expect("rate").sample(&mut arr_rng);
                    q.push(now + dt, RANK_INJECT, Ev::Inject);
                }
            }
            Ev::Arrive { hop, mut pkt } => {
                let s = &mut sw[hop];
                s.account(now);
                pkt.queued_at = now;
                let stats = if pkt.high { &mut s.stats.high } else { &mut s.stats.low };
                stats.arrivals += 1;
                if two && !pkt.high {
                    s.low.push_back(pkt);
                } else {
                    s.high.push_back(pkt);
                }
                let len = s.high.len() + s.low.len();
                s.stats.max_queue = s.stats.max_queue.max(len);
                if len > cfg.queue_cap {
                    return Err(SimError::Unstable {
                        location: format!("switch {hop}"),
                        cap: cfg.queue_cap,
                        time: now,
                    });
                }
                start(&mut q, &mut sw[hop], hop, now, &mut svc_rng, &mut sample_service, cfg.trace, &mut out.trace);
                if cfg.trace {
                    out.trace.push(trace(now, hop, TraceKind::Arrive, pkt.high, &sw[hop]));
                }
            }
            Ev::Depart { hop } => {
                let s = &mut sw[hop];
                s.account(now);
                let pkt = s.serving.take().expect("departure from busy switch");
                if hop + 1 < cfg.hops {
                    q.push(now + cfg.propagation, RANK_ARRIVE, Ev::Arrive { hop: hop + 1, pkt });
                } else if pkt.high {
                    out.delays_high.push(now - pkt.born);
                } else {
                    out.delays_low.push(now - pkt.born);
                }
                out.horizon = now;
                start(&mut q, &mut sw[hop], hop, now, &mut svc_rng, &mut sample_service, cfg.trace, &mut out.trace);
                if cfg.trace {
                    out.trace.push(trace(now, hop, TraceKind::Depart, pkt.high, &sw[hop]));
                }
            }
        }
    }
    for s in &mut sw {
        s.account(out.horizon);
    }
    out.hops = sw.into_iter().map(|s| s.stats).collect();
    Ok(out)
}

fn trace(time: f64, switch: usize, kind: TraceKind, high: bool, s: &Switch) -> TraceEvent {
    TraceEvent {
        time,
        switch,
        kind,
        high,
        queued_high: s.high.len(),
        queued_low: s.low.len(),
        busy: s.serving.is_some(),
    }
}

#[allow(clippy::too_many_arguments)]
fn start<F>(
    q: &mut EventQueue<Ev>,
    s: &mut Switch,
    hop: usize,
    now: f64,
    r: &mut rand_chacha::ChaCha12Rng,
    sample: &mut F,
    tracing: bool,
    out: &mut Vec<TraceEvent>,
) where
    F: FnMut(&mut rand_chacha::ChaCha12Rng) -> f64,
{
    if s.serving.is_some() {
        return;
    }
    let Some(pkt) = s.high.pop_front().or_else(|| s.low.pop_front()) else {
        return;
    };
    let w = now - pkt.queued_at;
    let stats = if pkt.high { &mut s.stats.high } else { &mut s.stats.low };
    stats.wait_sum += w;
    stats.wait_sq_sum += w * w;
    s.serving = Some(pkt);
    if tracing {
        out.push(trace(now, hop, TraceKind::Start, pkt.high, s));
    }
    q.push(now + sample(r), RANK_DEPART, Ev::Depart { hop });
}

/// Monte-Carlo estimate of the probability that end-to-end delay exceeds
/// `t_qos`, weighting the two classes by `1 - flat` and `flat`.
pub fn mc_blocking(cfg: &TandemConfig, t_qos: f64) -> Result<f64, SimError> {
    Ok(run_tandem(cfg)?.late_fraction(t_qos, cfg.mix.flat))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(seed: u64, rho_h: f64, rho_l: f64, packets: u64) -> TandemConfig {
        let mix = TrafficMix::from_classes(rho_h, rho_l).unwrap();
        TandemConfig::new(seed, 1, mix, ServiceLaw::Exponential { mean: 1.0 }, packets)
    }

    #[test]
    fn zero_rate_gives_empty_metrics() {
        let r = run_tandem(&cfg(1, 0.0, 0.0, 1000)).unwrap();
        assert!(r.delays_high.is_empty() && r.delays_low.is_empty());
        assert_eq!(r.hops[0].high.arrivals, 0);
        assert_eq!(r.horizon, 0.0);
    }

    #[test]
    fn deterministic_per_seed() {
        let a = run_tandem(&cfg(3, 0.3, 0.2, 5000)).unwrap();
        let b = run_tandem(&cfg(3, 0.3, 0.2, 5000)).unwrap();
        assert_eq!(a, b);
        let c = run_tandem(&cfg(4, 0.3, 0.2, 5000)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn trace_respects_priority_and_work_conservation() {
        let mut c = cfg(9, 0.4, 0.3, 20_000);
        c.trace = true;
        c.hops = 2;
        let r = run_tandem(&c).unwrap();
        assert!(!r.trace.is_empty());
        for e in &r.trace {
            if e.kind == TraceKind::Start && !e.high {
                assert_eq!(e.queued_high, 0);
            }
            if !e.busy {
                assert_eq!(e.queued_high + e.queued_low, 0);
            }
        }
    }

    #[test]
    fn single_queue_is_fifo() {
        let mut c = cfg(5, 0.3, 0.3, 50_000);
        c.discipline = Discipline::SingleQueue;
        let r = run_tandem(&c).unwrap();
        let (h, l) = (r.hops[0].high.mean_wait(), r.hops[0].low.mean_wait());
        assert!((h - l).abs() / h < 0.1, "{h} vs {l}");
    }

    #[test]
    fn mc_limits() {
        let c = cfg(2, 0.3, 0.2, 2000);
        assert_eq!(mc_blocking(&c, f64::INFINITY).unwrap(), 0.0);
        assert_eq!(mc_blocking(&c, 0.0).unwrap(), 1.0);
    }

    #[test]
    fn queue_cap_aborts() {
        let mut c = cfg(1, 1.5, 0.0, 100_000);
        c.queue_cap = 100;
        assert!(matches!(run_tandem(&c), Err(SimError::Unstable { .. })));
    }
}
