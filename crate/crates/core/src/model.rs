//! Physical-layer and traffic primitives.
//!
//! Users are indexed from 0 in increasing distance from the base station and
//! the SIC receiver decodes them in that fixed order: user `k` sees
//! interference only from active users with a larger index.

use alloc::vec::Vec;
use core::f64::consts::LN_2;

#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;
use rand::Rng;
use rand_distr::{Distribution, Exp};

use crate::error::{invalid, Error, Result};

/// dBm to watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// Watts to dBm. Zero power maps to negative infinity.
pub fn watts_to_dbm(watts: f64) -> f64 {
    10.0 * watts.log10() + 30.0
}

/// Noise power `N0 * B` in watts from a spectral density in dBm/Hz.
pub fn noise_power_from_density(n0_dbm_per_hz: f64, bandwidth_hz: f64) -> Result<f64> {
    if !(bandwidth_hz > 0.0) || !bandwidth_hz.is_finite() {
        return Err(invalid("bandwidth_hz", "must be positive and finite"));
    }
    if !n0_dbm_per_hz.is_finite() {
        return Err(invalid("n0_dbm_per_hz", "must be finite"));
    }
    Ok(dbm_to_watts(n0_dbm_per_hz) * bandwidth_hz)
}

fn positive(name: &'static str, value: f64) -> Result<f64> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(invalid(name, alloc::format!("must be positive and finite, got {value}")))
    }
}

/// Slot length, bandwidth, receiver noise and per-user peak power, all linear units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemParams {
    slot_duration_s: f64,
    bandwidth_hz: f64,
    noise_power_w: f64,
    peak_power_w: f64,
}

impl SystemParams {
    pub fn new(
        slot_duration_s: f64,
        bandwidth_hz: f64,
        noise_power_w: f64,
        peak_power_w: f64,
    ) -> Result<Self> {
        Ok(Self {
            slot_duration_s: positive("slot_duration_s", slot_duration_s)?,
            bandwidth_hz: positive("bandwidth_hz", bandwidth_hz)?,
            noise_power_w: positive("noise_power_w", noise_power_w)?,
            peak_power_w: positive("peak_power_w", peak_power_w)?,
        })
    }

    /// Builds the parameters from a noise spectral density instead of a noise power.
    pub fn from_noise_density(
        slot_duration_s: f64,
        bandwidth_hz: f64,
        n0_dbm_per_hz: f64,
        peak_power_w: f64,
    ) -> Result<Self> {
        let noise = noise_power_from_density(n0_dbm_per_hz, bandwidth_hz)?;
        Self::new(slot_duration_s, bandwidth_hz, noise, peak_power_w)
    }

    pub fn slot_duration_s(&self) -> f64 {
        self.slot_duration_s
    }

    pub fn bandwidth_hz(&self) -> f64 {
        self.bandwidth_hz
    }

    pub fn noise_power_w(&self) -> f64 {
        self.noise_power_w
    }

    pub fn peak_power_w(&self) -> f64 {
        self.peak_power_w
    }

    /// Bits carried per slot per unit of spectral efficiency, `T_s * B`.
    pub fn bits_per_slot_hz(&self) -> f64 {
        self.slot_duration_s * self.bandwidth_hz
    }
}

/// Per-user geometry, traffic, circuitry and delay requirement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UserProfile {
    distance_m: f64,
    path_loss_exp: f64,
    arrival_prob: f64,
    mean_burst_bits: f64,
    circuit_power_w: f64,
    delay_bound_s: f64,
    delay_tolerance: f64,
}

impl UserProfile {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        distance_m: f64,
        path_loss_exp: f64,
        arrival_prob: f64,
        mean_burst_bits: f64,
        circuit_power_w: f64,
        delay_bound_s: f64,
        delay_tolerance: f64,
    ) -> Result<Self> {
        if !(arrival_prob > 0.0 && arrival_prob <= 1.0) {
            return Err(invalid(
                "arrival_prob",
                alloc::format!("must lie in (0, 1], got {arrival_prob}"),
            ));
        }
        if !(delay_tolerance > 0.0 && delay_tolerance < 1.0) {
            return Err(invalid(
                "delay_tolerance",
                alloc::format!("must lie in (0, 1), got {delay_tolerance}"),
            ));
        }
        if !(circuit_power_w >= 0.0) || !circuit_power_w.is_finite() {
            return Err(invalid("circuit_power_w", "must be non-negative"));
        }
        if !path_loss_exp.is_finite() || path_loss_exp < 0.0 {
            return Err(invalid("path_loss_exp", "must be non-negative"));
        }
        Ok(Self {
            distance_m: positive("distance_m", distance_m)?,
            path_loss_exp,
            arrival_prob,
            mean_burst_bits: positive("mean_burst_bits", mean_burst_bits)?,
            circuit_power_w,
            delay_bound_s: positive("delay_bound_s", delay_bound_s)?,
            delay_tolerance,
        })
    }

    pub fn distance_m(&self) -> f64 {
        self.distance_m
    }

    pub fn path_loss_exp(&self) -> f64 {
        self.path_loss_exp
    }

    pub fn arrival_prob(&self) -> f64 {
        self.arrival_prob
    }

    pub fn mean_burst_bits(&self) -> f64 {
        self.mean_burst_bits
    }

    pub fn circuit_power_w(&self) -> f64 {
        self.circuit_power_w
    }

    pub fn delay_bound_s(&self) -> f64 {
        self.delay_bound_s
    }

    pub fn delay_tolerance(&self) -> f64 {
        self.delay_tolerance
    }

    pub fn with_delay_bound(self, delay_bound_s: f64) -> Result<Self> {
        Ok(Self {
            delay_bound_s: positive("delay_bound_s", delay_bound_s)?,
            ..self
        })
    }

    pub fn with_delay_tolerance(self, delay_tolerance: f64) -> Result<Self> {
        Self::new(
            self.distance_m,
            self.path_loss_exp,
            self.arrival_prob,
            self.mean_burst_bits,
            self.circuit_power_w,
            self.delay_bound_s,
            delay_tolerance,
        )
    }

    pub fn with_arrival_prob(self, arrival_prob: f64) -> Result<Self> {
        Self::new(
            self.distance_m,
            self.path_loss_exp,
            arrival_prob,
            self.mean_burst_bits,
            self.circuit_power_w,
            self.delay_bound_s,
            self.delay_tolerance,
        )
    }

    pub fn with_circuit_power(self, circuit_power_w: f64) -> Result<Self> {
        Self::new(
            self.distance_m,
            self.path_loss_exp,
            self.arrival_prob,
            self.mean_burst_bits,
            circuit_power_w,
            self.delay_bound_s,
            self.delay_tolerance,
        )
    }

    /// Rate of the exponential channel gain, `d^beta`. The mean gain is its inverse.
    pub fn channel_rate(&self) -> f64 {
        self.distance_m.powf(self.path_loss_exp)
    }
}

/// `chi_k = d_k^beta` for a single profile.
pub fn channel_rate_param(profile: &UserProfile) -> Result<f64> {
    positive("distance_m", profile.distance_m)?;
    Ok(profile.channel_rate())
}

/// One block-fading draw of the power gains `|h_k|^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    gains: Vec<f64>,
}

impl ChannelRealization {
    pub fn new(gains: Vec<f64>) -> Result<Self> {
        if gains.iter().any(|g| !(*g >= 0.0) || !g.is_finite()) {
            return Err(invalid("gains", "every gain must be finite and non-negative"));
        }
        Ok(Self { gains })
    }

    pub fn gains(&self) -> &[f64] {
        &self.gains
    }

    pub fn len(&self) -> usize {
        self.gains.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gains.is_empty()
    }
}

/// Transmit powers in watts, one per user, each within `[0, P_max]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerAllocation {
    tx_power_w: Vec<f64>,
}

impl PowerAllocation {
    pub fn new(tx_power_w: Vec<f64>, params: &SystemParams) -> Result<Self> {
        let peak = params.peak_power_w();
        for &p in &tx_power_w {
            if !(p >= 0.0) || p > peak {
                return Err(invalid(
                    "tx_power_w",
                    alloc::format!("{p} W is outside [0, {peak}] W"),
                ));
            }
        }
        Ok(Self { tx_power_w })
    }

    // Finite differences step just past the peak; callers own the bounds.
    pub(crate) fn unchecked(tx_power_w: Vec<f64>) -> Self {
        Self { tx_power_w }
    }

    /// Every user at the same power, clamped to the peak.
    pub fn uniform(users: usize, power_w: f64, params: &SystemParams) -> Result<Self> {
        Self::new(alloc::vec![power_w; users], params)
    }

    pub fn powers(&self) -> &[f64] {
        &self.tx_power_w
    }

    pub fn len(&self) -> usize {
        self.tx_power_w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tx_power_w.is_empty()
    }
}

/// Draws one independent exponential gain per user with rate `chi_k`.
pub fn sample_gains<R: Rng>(
    profiles: &[UserProfile],
    rng: &mut R,
) -> Result<ChannelRealization> {
    if profiles.is_empty() {
        return Err(invalid("profiles", "at least one user is required"));
    }
    let mut gains = Vec::with_capacity(profiles.len());
    for profile in profiles {
        gains.push(sample_gain(profile.channel_rate(), rng)?);
    }
    Ok(ChannelRealization { gains })
}

pub(crate) fn sample_gain<R: Rng>(rate: f64, rng: &mut R) -> Result<f64> {
    let exp = Exp::new(rate).map_err(|_| invalid("channel_rate", "must be positive"))?;
    Ok(exp.sample(rng))
}

/// SINR of user `k` under SIC in ascending index order.
///
/// Only users flagged in `active` transmit; interference comes from active
/// users with index greater than `k`.
pub fn sinr(
    k: usize,
    alloc: &PowerAllocation,
    gains: &ChannelRealization,
    active: &[bool],
    params: &SystemParams,
) -> Result<f64> {
    let n = alloc.len();
    if gains.len() != n || active.len() != n {
        return Err(Error::InvalidCall(alloc::format!(
            "length mismatch: {} powers, {} gains, {} activity flags",
            n,
            gains.len(),
            active.len()
        )));
    }
    if k >= n || !active[k] {
        return Err(Error::InvalidCall(alloc::format!(
            "user {k} is not transmitting"
        )));
    }
    Ok(sinr_unchecked(k, alloc.powers(), gains.gains(), active, params.noise_power_w()))
}

pub(crate) fn sinr_unchecked(
    k: usize,
    powers: &[f64],
    gains: &[f64],
    active: &[bool],
    noise_w: f64,
) -> f64 {
    let interference: f64 = (k + 1..powers.len())
        .filter(|&i| active[i])
        .map(|i| powers[i] * gains[i])
        .sum();
    powers[k] * gains[k] / (interference + noise_w)
}

/// Shannon rate `B log2(1 + sinr)` in bits per second.
pub fn achievable_rate(sinr: f64, params: &SystemParams) -> Result<f64> {
    if !(sinr >= 0.0) {
        return Err(invalid("sinr", alloc::format!("must be non-negative, got {sinr}")));
    }
    Ok(params.bandwidth_hz() * sinr.ln_1p() / LN_2)
}

/// One slot of Bernoulli-exponential traffic: zero with probability `1 - p`,
/// otherwise an exponential burst with mean `L` bits.
pub fn sample_arrival<R: Rng>(profile: &UserProfile, rng: &mut R) -> f64 {
    let u: f64 = rng.random();
    if u >= profile.arrival_prob() {
        return 0.0;
    }
    let burst: f64 = rng.sample(rand_distr::Exp1);
    burst * profile.mean_burst_bits()
}

/// Mean arrival rate `p L / T_s` in bits per second.
pub fn mean_arrival_rate(profile: &UserProfile, params: &SystemParams) -> f64 {
    profile.arrival_prob() * profile.mean_burst_bits() / params.slot_duration_s()
}
