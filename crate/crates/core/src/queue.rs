//! Two-priority non-preemptive M/G/1 delay analytics: waiting-time moments,
//! residual-time moments, maximum hop count and deadline-violation
//! probability under a normal approximation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QueueError {
    #[error("unstable queue: utilisation {rho} >= 1")]
    Unstable { rho: f64 },
    #[error("invalid parameter `{name}`: {value}")]
    Invalid { name: &'static str, value: f64 },
}

/// Arrival rates seen by one switch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrafficMix {
    /// MF packet rate, 1/s.
    pub lambda_m: f64,
    /// EF packet rate, 1/s.
    pub lambda_e: f64,
    /// Probability an EF packet stays low priority.
    pub flat: f64,
}

impl TrafficMix {
    pub fn new(lambda_m: f64, lambda_e: f64, flat: f64) -> Result<Self, QueueError> {
        let m = Self {
            lambda_m,
            lambda_e,
            flat,
        };
        m.validate()?;
        Ok(m)
    }

    /// Mix with the given class rates directly (no EF split).
    pub fn from_classes(lambda_h: f64, lambda_l: f64) -> Result<Self, QueueError> {
        if lambda_l == 0.0 {
            return Self::new(lambda_h, 0.0, 1.0);
        }
        Self::new(lambda_h, lambda_l, 1.0)
    }

    pub fn validate(&self) -> Result<(), QueueError> {
        for (name, value) in [("lambda_m", self.lambda_m), ("lambda_e", self.lambda_e)] {
            if !(value >= 0.0 && value.is_finite()) {
                return Err(QueueError::Invalid { name, value });
            }
        }
        if !(0.0..=1.0).contains(&self.flat) {
            return Err(QueueError::Invalid {
                name: "flat",
                value: self.flat,
            });
        }
        Ok(())
    }

    /// EF packets promoted to high priority.
    pub fn lambda_c(&self) -> f64 {
        (1.0 - self.flat) * self.lambda_e
    }

    pub fn lambda_h(&self) -> f64 {
        self.lambda_m + self.lambda_c()
    }

    pub fn lambda_l(&self) -> f64 {
        self.flat * self.lambda_e
    }

    pub fn total(&self) -> f64 {
        self.lambda_h() + self.lambda_l()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ServiceDist {
    Exponential,
    Deterministic,
    General,
}

/// First three raw moments of the service time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ServiceModel {
    pub dist: ServiceDist,
    pub m1: f64,
    pub m2: f64,
    pub m3: f64,
}

impl ServiceModel {
    pub fn exponential(mean: f64) -> Self {
        Self {
            dist: ServiceDist::Exponential,
            m1: mean,
            m2: 2.0 * mean * mean,
            m3: 6.0 * mean * mean * mean,
        }
    }

    pub fn deterministic(mean: f64) -> Self {
        Self {
            dist: ServiceDist::Deterministic,
            m1: mean,
            m2: mean * mean,
            m3: mean * mean * mean,
        }
    }

    pub fn general(m1: f64, m2: f64, m3: f64) -> Result<Self, QueueError> {
        let s = Self {
            dist: ServiceDist::General,
            m1,
            m2,
            m3,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), QueueError> {
        for (name, value) in [("m1", self.m1), ("m2", self.m2), ("m3", self.m3)] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(QueueError::Invalid { name, value });
            }
        }
        if self.m2 < self.m1 * self.m1 * (1.0 - 1e-12) {
            return Err(QueueError::Invalid {
                name: "m2",
                value: self.m2,
            });
        }
        Ok(())
    }

    pub fn variance(&self) -> f64 {
        (self.m2 - self.m1 * self.m1).max(0.0)
    }
}

/// Scaling applied to the residual-time moments.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ResidualMode {
    /// Plain M/G/1 residual.
    #[default]
    Standard,
    /// Residual mean times `nbar`, second moment times `nbar^2`.
    Scaled { nbar: f64 },
}

impl ResidualMode {
    fn factor(self) -> f64 {
        match self {
            ResidualMode::Standard => 1.0,
            ResidualMode::Scaled { nbar } => nbar,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Residual {
    pub mean: f64,
    pub second: f64,
    pub var: f64,
}

/// First and second moment of a waiting time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean: f64,
    pub second: f64,
}

impl Moments {
    pub fn variance(&self) -> f64 {
        (self.second - self.mean * self.mean).max(0.0)
    }
}

fn utilisations(mix: &TrafficMix, svc: &ServiceModel) -> Result<(f64, f64), QueueError> {
    mix.validate()?;
    svc.validate()?;
    let rho_h = mix.lambda_h() * svc.m1;
    let rho_l = mix.lambda_l() * svc.m1;
    if rho_h + rho_l >= 1.0 {
        return Err(QueueError::Unstable { rho: rho_h + rho_l });
    }
    Ok((rho_h, rho_l))
}

/// Residual service time seen by an arrival.
pub fn residual_moments(
    mix: &TrafficMix,
    svc: &ServiceModel,
    mode: ResidualMode,
) -> Result<Residual, QueueError> {
    let (rho_h, rho_l) = utilisations(mix, svc)?;
    let rho = rho_h + rho_l;
    let n = mode.factor();
    let mean = n * rho * svc.m2 / (2.0 * svc.m1);
    let second = n * n * rho * svc.m3 / (3.0 * svc.m1);
    Ok(Residual {
        mean,
        second,
        var: second - mean * mean,
    })
}

pub fn waiting_time_high(
    mix: &TrafficMix,
    svc: &ServiceModel,
    mode: ResidualMode,
) -> Result<Moments, QueueError> {
    let (rho_h, _) = utilisations(mix, svc)?;
    let r = residual_moments(mix, svc, mode)?;
    let mean = r.mean / (1.0 - rho_h);
    let n_h = mix.lambda_h() * mean;
    // Var(N_h) term dropped.
    let second = n_h * svc.variance() + r.var;
    Ok(Moments { mean, second })
}

/// Low-priority waiting time. With no low-priority traffic at all the
/// class is empty and the high-priority moments are returned.
pub fn waiting_time_low(
    mix: &TrafficMix,
    svc: &ServiceModel,
    mode: ResidualMode,
) -> Result<Moments, QueueError> {
    let (rho_h, rho_l) = utilisations(mix, svc)?;
    if mix.lambda_l() == 0.0 {
        return waiting_time_high(mix, svc, mode);
    }
    let r = residual_moments(mix, svc, mode)?;
    let high = waiting_time_high(mix, svc, mode)?;
    let mean = r.mean / ((1.0 - rho_h) * (1.0 - rho_h - rho_l));
    let n_h = mix.lambda_h() * high.mean;
    let n_l = mix.lambda_l() * mean;
    let v = n_l + n_h + mix.lambda_h() * mean;
    let x = svc.m1;
    let second = r.second + v * svc.variance() + v * v * x * x + 2.0 * v * x * r.mean;
    Ok(Moments { mean, second })
}

/// One switch on a path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HopModel {
    pub mix: TrafficMix,
    pub service: ServiceModel,
    /// Propagation delay into this switch, seconds.
    pub propagation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathModel {
    pub hops: Vec<HopModel>,
    pub t_qos: f64,
    #[serde(default)]
    pub mode: ResidualMode,
}

impl PathModel {
    pub fn homogeneous(hop: HopModel, count: usize, t_qos: f64) -> Self {
        Self {
            hops: vec![hop; count],
            t_qos,
            mode: ResidualMode::Standard,
        }
    }

    pub fn validate(&self) -> Result<(), QueueError> {
        if self.hops.is_empty() {
            return Err(QueueError::Invalid {
                name: "hops",
                value: 0.0,
            });
        }
        for h in &self.hops {
            if !(h.propagation >= 0.0) {
                return Err(QueueError::Invalid {
                    name: "propagation",
                    value: h.propagation,
                });
            }
        }
        Ok(())
    }
}

/// Analytic per-hop report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HopReport {
    pub rho_h: f64,
    pub rho_l: f64,
    pub residual: Residual,
    pub high: Moments,
    pub low: Moments,
    /// Mean sojourn including service and propagation.
    pub mean_delay: f64,
}

pub fn analyse_hop(hop: &HopModel, flat: f64, mode: ResidualMode) -> Result<HopReport, QueueError> {
    let (rho_h, rho_l) = utilisations(&hop.mix, &hop.service)?;
    let residual = residual_moments(&hop.mix, &hop.service, mode)?;
    let high = waiting_time_high(&hop.mix, &hop.service, mode)?;
    let low = waiting_time_low(&hop.mix, &hop.service, mode)?;
    let mean_delay =
        (1.0 - flat) * high.mean + flat * low.mean + hop.service.m1 + hop.propagation;
    Ok(HopReport {
        rho_h,
        rho_l,
        residual,
        high,
        low,
        mean_delay,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HopCount {
    /// Largest H with cumulative mean delay within T_QoS. Hops past the
    /// end of the path repeat the last hop.
    pub exact: usize,
    /// floor(T_QoS / T) from the first hop, meaningful for identical switches.
    pub shortcut: usize,
    /// First-order light-traffic approximation.
    pub taylor: f64,
}

/// Cumulative mean delay after each of the first `count` hops.
pub fn cumulative_delays(path: &PathModel, flat: f64, count: usize) -> Result<Vec<f64>, QueueError> {
    path.validate()?;
    let per: Vec<f64> = path
        .hops
        .iter()
        .map(|h| analyse_hop(h, flat, path.mode).map(|r| r.mean_delay))
        .collect::<Result<_, _>>()?;
    let last = *per.last().expect("nonempty");
    let mut acc = 0.0;
    Ok((0..count)
        .map(|i| {
            acc += per.get(i).copied().unwrap_or(last);
            acc
        })
        .collect())
}

/// Relative slack under which a cumulative delay still meets T_QoS, so a
/// threshold that is an exact multiple of the hop delay is not lost to
/// rounding.
pub const HOP_SLACK: f64 = 1e-12;

pub fn max_hop_count(path: &PathModel, flat: f64) -> Result<HopCount, QueueError> {
    path.validate()?;
    let reports: Vec<HopReport> = path
        .hops
        .iter()
        .map(|h| analyse_hop(h, flat, path.mode))
        .collect::<Result<_, _>>()?;
    let last = reports.last().expect("nonempty").mean_delay;
    if !(last > 0.0) {
        return Err(QueueError::Invalid {
            name: "mean_delay",
            value: last,
        });
    }
    let mut exact = 0;
    let mut acc = 0.0;
    loop {
        let t = reports.get(exact).map_or(last, |r| r.mean_delay);
        if acc + t > path.t_qos * (1.0 + HOP_SLACK) {
            break;
        }
        acc += t;
        exact += 1;
    }

    let first = &reports[0];
    let shortcut = (path.t_qos * (1.0 + HOP_SLACK) / first.mean_delay).floor().max(0.0) as usize;

    let hop = &path.hops[0];
    let base = hop.service.m1 + hop.propagation;
    let rho = first.rho_h + first.rho_l;
    let taylor = path.t_qos / base * (1.0 - rho * first.residual.mean / base);
    Ok(HopCount {
        exact,
        shortcut,
        taylor,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Blocking {
    pub mu_h: f64,
    pub sigma_h: f64,
    pub mu_l: f64,
    pub sigma_l: f64,
    pub probability: f64,
}

fn tail(t: f64, mu: f64, sigma: f64) -> f64 {
    if sigma > 0.0 {
        0.5 * (1.0 - libm::erf((t - mu) / (std::f64::consts::SQRT_2 * sigma)))
    } else if t < mu {
        1.0
    } else if t == mu {
        0.5
    } else {
        0.0
    }
}

/// Probability that end-to-end delay exceeds `path.t_qos`.
///
/// Delay per class is approximated as normal with mean and variance summed
/// over hops (service plus waiting). Propagation is a deterministic shift.
pub fn blocking_probability(path: &PathModel, flat: f64) -> Result<Blocking, QueueError> {
    path.validate()?;
    let (mut mu_h, mut var_h, mut mu_l, mut var_l) = (0.0, 0.0, 0.0, 0.0);
    for hop in &path.hops {
        let r = analyse_hop(hop, flat, path.mode)?;
        let fixed = hop.service.m1 + hop.propagation;
        mu_h += fixed + r.high.mean;
        mu_l += fixed + r.low.mean;
        var_h += hop.service.variance() + r.high.variance();
        var_l += hop.service.variance() + r.low.variance();
    }
    let (sigma_h, sigma_l) = (var_h.sqrt(), var_l.sqrt());
    let p = (1.0 - flat) * tail(path.t_qos, mu_h, sigma_h) + flat * tail(path.t_qos, mu_l, sigma_l);
    Ok(Blocking {
        mu_h,
        sigma_h,
        mu_l,
        sigma_l,
        probability: p.clamp(0.0, 1.0),
    })
}

/// Everything the analysis produces for one path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayReport {
    pub hops: Vec<HopReport>,
    pub hop_count: HopCount,
    pub blocking: Blocking,
}

pub fn delay_report(path: &PathModel, flat: f64) -> Result<DelayReport, QueueError> {
    let hops = path
        .hops
        .iter()
        .map(|h| analyse_hop(h, flat, path.mode))
        .collect::<Result<_, _>>()?;
    Ok(DelayReport {
        hops,
        hop_count: max_hop_count(path, flat)?,
        blocking: blocking_probability(path, flat)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mix(h: f64, l: f64) -> TrafficMix {
        TrafficMix::from_classes(h, l).unwrap()
    }

    #[test]
    fn traffic_split() {
        let m = TrafficMix::new(3.0, 5.0, 0.2).unwrap();
        assert!((m.lambda_c() - 4.0).abs() < 1e-12);
        assert!((m.lambda_h() - 7.0).abs() < 1e-12);
        assert!((m.lambda_l() - 1.0).abs() < 1e-12);
        assert!((m.total() - 8.0).abs() < 1e-12);
        assert!(TrafficMix::new(1.0, 1.0, 1.5).is_err());
    }

    #[test]
    fn residual_exponential_half_load() {
        let svc = ServiceModel::exponential(1.0);
        let r = residual_moments(&mix(0.25, 0.25), &svc, ResidualMode::Standard).unwrap();
        assert!((r.mean - 0.5).abs() < 1e-12);
        assert!((r.second - 1.0).abs() < 1e-12);
        assert!((r.var - 0.75).abs() < 1e-12);
        let z = residual_moments(&mix(0.0, 0.0), &svc, ResidualMode::Standard).unwrap();
        assert_eq!(z.mean, 0.0);
    }

    #[test]
    fn scaled_residual_mode() {
        let svc = ServiceModel::exponential(1.0);
        let r = residual_moments(&mix(0.5, 0.0), &svc, ResidualMode::Scaled { nbar: 2.0 }).unwrap();
        assert!((r.mean - 1.0).abs() < 1e-12);
        assert!((r.second - 4.0).abs() < 1e-12);
    }

    #[test]
    fn high_priority_matches_mm1() {
        let svc = ServiceModel::exponential(1.0);
        let w = waiting_time_high(&mix(0.5, 0.0), &svc, ResidualMode::Standard).unwrap();
        assert!((w.mean - 1.0).abs() < 1e-12);
        let lo = waiting_time_high(&mix(0.5, 0.1), &svc, ResidualMode::Standard).unwrap();
        assert!(lo.mean > w.mean);
    }

    #[test]
    fn low_priority_example() {
        let svc = ServiceModel::exponential(1.0);
        let w = waiting_time_low(&mix(0.25, 0.25), &svc, ResidualMode::Standard).unwrap();
        assert!((w.mean - 4.0 / 3.0).abs() < 1e-12);
        let h = waiting_time_high(&mix(0.25, 0.25), &svc, ResidualMode::Standard).unwrap();
        assert!(w.mean >= h.mean);
    }

    #[test]
    fn empty_low_class_degenerates() {
        let svc = ServiceModel::exponential(1e-3);
        let m = TrafficMix::new(300.0, 0.0, 0.2).unwrap();
        let h = waiting_time_high(&m, &svc, ResidualMode::Standard).unwrap();
        let l = waiting_time_low(&m, &svc, ResidualMode::Standard).unwrap();
        assert_eq!(h, l);
    }

    #[test]
    fn instability_is_reported() {
        let svc = ServiceModel::exponential(1.0);
        assert!(matches!(
            waiting_time_low(&mix(0.6, 0.4), &svc, ResidualMode::Standard),
            Err(QueueError::Unstable { .. })
        ));
    }

    #[test]
    fn hop_count_identical_switches() {
        // T = 2 per hop: service 1, propagation 1, no load.
        let hop = HopModel {
            mix: mix(0.0, 0.0),
            service: ServiceModel::deterministic(1.0),
            propagation: 1.0,
        };
        let p = PathModel::homogeneous(hop, 3, 10.0);
        let h = max_hop_count(&p, 0.2).unwrap();
        assert_eq!(h.exact, 5);
        assert_eq!(h.shortcut, 5);
        assert!((h.taylor - 5.0).abs() < 1e-12);
        let tight = PathModel { t_qos: 1.5, ..p };
        assert_eq!(max_hop_count(&tight, 0.2).unwrap().exact, 0);
    }

    #[test]
    fn blocking_degenerate_cases() {
        let hop = HopModel {
            mix: TrafficMix::new(200.0, 100.0, 0.0).unwrap(),
            service: ServiceModel::exponential(1e-3),
            propagation: 0.0,
        };
        let mut p = PathModel::homogeneous(hop, 3, f64::INFINITY);
        assert_eq!(blocking_probability(&p, 0.0).unwrap().probability, 0.0);
        p.t_qos = 0.0;
        let b = blocking_probability(&p, 0.0).unwrap();
        p.t_qos = b.mu_h;
        let half = blocking_probability(&p, 0.0).unwrap();
        assert_eq!(half.mu_h, half.mu_l);
        assert_eq!(half.probability, 0.5);
    }
}
