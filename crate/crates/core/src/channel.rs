//! Indoor FSO channel: distance-driven gain, intensity-limited capacity, and the
//! two intensity-allocation rules used by the grooming policy.
//!
//! Intensities are in an abstract unit normalised so that receiver noise has unit
//! variance. Capacities are in bits/s (base-2 logarithm).

use std::f64::consts::{E, LN_2, PI};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::topo::{LinkId, ResourceState};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChannelError {
    #[error("link distance must be positive, got {0}")]
    Distance(f64),
    #[error("channel parameter `{name}` out of range: {value}")]
    Parameter { name: &'static str, value: f64 },
}

/// Transceiver and optics parameters shared by every FSO link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelParams {
    /// Carrier wavelength in metres.
    pub carrier_wavelength: f64,
    /// Transmitter lens diameter in metres.
    pub tx_lens_diameter: f64,
    /// Planar beam diameter at the receiver in metres.
    pub rx_beam_diameter: f64,
    pub tx_efficiency: f64,
    pub rx_efficiency: f64,
    pub pointing_loss: f64,
    pub filter_transmission: f64,
    /// Electrical bandwidth of a single wavelength in Hz.
    pub bandwidth: f64,
}

impl Default for ChannelParams {
    fn default() -> Self {
        Self {
            carrier_wavelength: 1550e-9,
            tx_lens_diameter: 0.01,
            rx_beam_diameter: 0.01,
            tx_efficiency: 0.8,
            rx_efficiency: 0.8,
            pointing_loss: 0.9,
            filter_transmission: 0.9,
            bandwidth: 2.5e9,
        }
    }
}

impl ChannelParams {
    pub fn validate(&self) -> Result<(), ChannelError> {
        let positive = [
            ("carrier_wavelength", self.carrier_wavelength),
            ("tx_lens_diameter", self.tx_lens_diameter),
            ("rx_beam_diameter", self.rx_beam_diameter),
            ("bandwidth", self.bandwidth),
        ];
        for (name, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(ChannelError::Parameter { name, value });
            }
        }
        let efficiencies = [
            ("tx_efficiency", self.tx_efficiency),
            ("rx_efficiency", self.rx_efficiency),
            ("pointing_loss", self.pointing_loss),
            ("filter_transmission", self.filter_transmission),
        ];
        for (name, value) in efficiencies {
            if !(value > 0.0 && value <= 1.0) {
                return Err(ChannelError::Parameter { name, value });
            }
        }
        Ok(())
    }

    pub fn tx_gain(&self) -> f64 {
        4.0 * self.tx_lens_diameter / self.carrier_wavelength
    }

    pub fn rx_gain(&self) -> f64 {
        4.0 * self.rx_beam_diameter / self.carrier_wavelength
    }
}

/// Channel gain of a focused-beam link over `distance` metres.
///
/// Inverse-square free-space path loss scaled by the transmit and receive
/// aperture gains and the four efficiency factors.
pub fn channel_gain(p: &ChannelParams, distance: f64) -> Result<f64, ChannelError> {
    if !(distance > 0.0 && distance.is_finite()) {
        return Err(ChannelError::Distance(distance));
    }
    let path = p.carrier_wavelength / (4.0 * PI * distance);
    let tx = p.tx_gain() * p.tx_efficiency * p.pointing_loss;
    let rx = p.rx_gain() * p.rx_efficiency * p.filter_transmission;
    Ok(tx * path * path * rx)
}

/// High-SNR capacity of an intensity-modulated wavelength, bits/s.
pub fn capacity(gain: f64, intensity: f64, bandwidth: f64) -> f64 {
    let snr = E * gain * gain * intensity * intensity / (2.0 * PI);
    0.5 * bandwidth * snr.ln_1p() / LN_2
}

/// Intensity that makes [`capacity`] equal `demand` bits/s. Exact inverse.
///
/// Returns `f64::INFINITY` for a zero gain with positive demand. Whether the
/// result fits the per-wavelength cap is for the caller to decide.
pub fn intensity_for_demand(gain: f64, demand: f64, bandwidth: f64) -> f64 {
    if demand <= 0.0 {
        return 0.0;
    }
    if gain <= 0.0 {
        return f64::INFINITY;
    }
    let growth = (2.0 * demand / bandwidth * LN_2).exp_m1();
    (2.0 * PI * growth / (E * gain * gain)).sqrt()
}

/// Rate needed to move `bits` within `deadline` seconds.
pub fn demand_rate(bits: f64, deadline: f64) -> f64 {
    bits / deadline
}

/// Fair-share EF intensity rule on a single link.
///
/// `available` is the residual intensity, `free` the number of wavelengths
/// still unoccupied on the link. The first term keeps `E_T/W` in reserve for
/// every other free wavelength; the second is the exact demand.
pub fn fair_share_intensity(
    available: f64,
    free: usize,
    total: f64,
    wavelengths: usize,
    demand_intensity: f64,
) -> f64 {
    if free == 0 {
        return 0.0;
    }
    let headroom = available - (free as f64 - 1.0) * total / wavelengths as f64;
    headroom.min(demand_intensity).max(0.0)
}

/// EF intensity on `link` for a flow of `bits` that should finish within `deadline`.
///
/// `None` when the link has no free wavelength. The result is also capped at
/// the per-wavelength limit.
pub fn ef_intensity(
    state: &ResourceState,
    link: LinkId,
    gain: f64,
    bits: f64,
    deadline: f64,
    bandwidth: f64,
) -> Option<f64> {
    let free = state.free_count(link);
    if free == 0 {
        return None;
    }
    let demand = intensity_for_demand(gain, demand_rate(bits, deadline), bandwidth);
    let e = fair_share_intensity(
        state.residual(link),
        free,
        state.total_intensity(),
        state.wavelengths(),
        demand,
    );
    Some(e.min(state.max_intensity()))
}

/// Intensity limits for one link: per-wavelength cap `E` and total budget `E_T`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntensityLimits {
    pub per_wavelength: f64,
    pub total: f64,
}

/// Budget such that `wavelengths` equal shares of `total` add up to `target` bits/s
/// on a link of gain `gain`. The per-wavelength cap is set to the total.
pub fn calibrate_max_intensity(
    target: f64,
    gain: f64,
    bandwidth: f64,
    wavelengths: usize,
) -> IntensityLimits {
    let share = intensity_for_demand(gain, target / wavelengths as f64, bandwidth);
    let total = share * wavelengths as f64;
    IntensityLimits {
        per_wavelength: total,
        total,
    }
}

/// Static budget of one link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkBudget {
    pub gain: f64,
    pub bandwidth: f64,
    /// Capacity of a single wavelength driven at the per-wavelength cap.
    pub max_capacity: f64,
}

impl LinkBudget {
    pub fn new(gain: f64, bandwidth: f64, max_intensity: f64) -> Self {
        Self {
            gain,
            bandwidth,
            max_capacity: capacity(gain, max_intensity, bandwidth),
        }
    }

    pub fn capacity_at(&self, intensity: f64) -> f64 {
        capacity(self.gain, intensity, self.bandwidth)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_params() -> ChannelParams {
        ChannelParams {
            carrier_wavelength: 1550e-9,
            tx_lens_diameter: 0.01,
            rx_beam_diameter: 0.01,
            tx_efficiency: 1.0,
            rx_efficiency: 1.0,
            pointing_loss: 1.0,
            filter_transmission: 1.0,
            bandwidth: 1e9,
        }
    }

    #[test]
    fn gain_matches_hand_evaluation() {
        // (4 D/λ)^2 (λ/(4π δ))^2 = (D/(π δ))^2 with D = 0.01, δ = 10.
        let expected = (0.01f64 / (PI * 10.0)).powi(2);
        let h = channel_gain(&unit_params(), 10.0).unwrap();
        assert!((h - expected).abs() / expected < 1e-12);
        assert!((h - 1.0132e-7).abs() < 1e-10);
    }

    #[test]
    fn gain_inverse_square() {
        let p = ChannelParams::default();
        for d in [0.5, 1.0, 3.7, 12.0, 80.0] {
            let near = channel_gain(&p, d).unwrap();
            let far = channel_gain(&p, 2.0 * d).unwrap();
            assert!((near / far - 4.0).abs() < 1e-12);
        }
    }

    #[test]
    fn gain_total_pointing_loss_is_zero() {
        let mut p = unit_params();
        p.pointing_loss = 0.0;
        assert_eq!(channel_gain(&p, 5.0).unwrap(), 0.0);
    }

    #[test]
    fn gain_rejects_nonpositive_distance() {
        assert!(channel_gain(&unit_params(), 0.0).is_err());
        assert!(channel_gain(&unit_params(), -1.0).is_err());
    }

    #[test]
    fn capacity_zero_intensity() {
        assert_eq!(capacity(1e-3, 0.0, 1e9), 0.0);
    }

    #[test]
    fn capacity_hits_bandwidth_at_snr_three() {
        let h = 0.25;
        let e = (6.0 * PI / E).sqrt() / h;
        let c = capacity(h, e, 2.5e9);
        assert!((c - 2.5e9).abs() / 2.5e9 < 1e-12);
    }

    #[test]
    fn demand_zero_needs_no_intensity() {
        assert_eq!(intensity_for_demand(1e-4, 0.0, 1e9), 0.0);
    }

    #[test]
    fn groomed_mice_need_3_2_gbps() {
        let bits = 4.0 * 100_000.0 * 8.0;
        let rate = demand_rate(bits, 1e-3);
        assert!((rate - 3.2e9).abs() < 1e-3);
        let h = 2e-3;
        let e = intensity_for_demand(h, rate, 2.5e9);
        assert!((capacity(h, e, 2.5e9) - 3.2e9).abs() / 3.2e9 < 1e-9);
    }

    #[test]
    fn fair_share_picks_smaller_term() {
        assert_eq!(fair_share_intensity(10.0, 2, 8.0, 4, 1.5), 1.5);
        // exact fair shares left: first term collapses to E_T/W
        for free in 1..=4 {
            let avail = free as f64 * 8.0 / 4.0;
            let e = fair_share_intensity(avail, free, 8.0, 4, f64::INFINITY);
            assert!((e - 2.0).abs() < 1e-12);
        }
        assert_eq!(fair_share_intensity(1.0, 3, 8.0, 4, 5.0), 0.0);
        assert_eq!(fair_share_intensity(8.0, 4, 8.0, 4, 0.0), 0.0);
    }

    #[test]
    fn calibration_splits_target_evenly() {
        let h = 3e-3;
        let lim = calibrate_max_intensity(10e9, h, 2.5e9, 4);
        let share = capacity(h, lim.total / 4.0, 2.5e9);
        assert!((share - 2.5e9).abs() / 2.5e9 < 1e-9);
        assert_eq!(lim.per_wavelength, lim.total);

        let single = calibrate_max_intensity(10e9, h, 2.5e9, 1);
        assert!((capacity(h, single.total, 2.5e9) - 10e9).abs() / 10e9 < 1e-9);

        let half = calibrate_max_intensity(5e9, h, 2.5e9, 4);
        assert!(half.total < lim.total);
    }

    #[test]
    fn params_validation() {
        assert!(ChannelParams::default().validate().is_ok());
        let mut p = ChannelParams::default();
        p.rx_efficiency = 1.2;
        assert!(p.validate().is_err());
        p = ChannelParams::default();
        p.bandwidth = 0.0;
        assert!(p.validate().is_err());
    }
}
