//! Effective bandwidth of Bernoulli-exponential traffic and effective capacity
//! of the SIC service process.
//!
//! Three independent routes evaluate the effective capacity
//! `-ln E[exp(-u S_k)] / (u T_s)` with `S_k = T_s B log2(1 + gamma_k)`:
//!
//! * [`effcap_k_user`] integrates the SINR tail `P(gamma_k > x(t))` over the
//!   variable `t = (1 + x)^(-theta)` on `[0, 1]`,
//! * [`effcap_two_user_first`] / [`effcap_two_user_second`] integrate the
//!   two-user SINR densities directly over `x`,
//! * [`effcap_monte_carlo`] samples channels and interferer modes.
//!
//! Here `theta = u T_s B / ln 2`, so that `exp(-u S) = (1 + gamma)^(-theta)`.

use alloc::vec::Vec;
use core::f64::consts::LN_2;

#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;
use rand::Rng;

use crate::error::{invalid, Error, Result};
use crate::model::{sample_gain, PowerAllocation, SystemParams, UserProfile};
use crate::quadrature::AdaptiveQuadrature;

/// QoS exponent `u` in 1/bit.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct QosExponent(f64);

impl QosExponent {
    pub fn new(u: f64) -> Result<Self> {
        if u > 0.0 && u.is_finite() {
            Ok(Self(u))
        } else {
            Err(invalid("u", alloc::format!("QoS exponent must be positive, got {u}")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// `u T_s B / ln 2`: the power of `(1 + gamma)^(-theta)`.
    pub fn service_exponent(self, params: &SystemParams) -> f64 {
        self.0 * params.bits_per_slot_hz() / LN_2
    }
}

/// Effective bandwidth `ln(p/(1 - uL) + 1 - p) / (u T_s)` of the arrival process.
pub fn effective_bandwidth(
    profile: &UserProfile,
    u: QosExponent,
    params: &SystemParams,
) -> Result<f64> {
    let ul = u.value() * profile.mean_burst_bits();
    if ul >= 1.0 {
        return Err(Error::DivergentMoment { product: ul });
    }
    let p = profile.arrival_prob();
    // p/(1-uL) + 1 - p = 1 + p uL / (1 - uL)
    Ok((p * ul / (1.0 - ul)).ln_1p() / (u.value() * params.slot_duration_s()))
}

/// Everything needed to evaluate user `k`'s effective capacity.
///
/// `tx_probs[i]` is the probability that user `i` transmits in a slot; only
/// entries with `i > k` matter for user `k`, which is assumed to transmit.
#[derive(Debug, Clone, Copy)]
pub struct EffCapQuery<'a> {
    pub k: usize,
    pub alloc: &'a PowerAllocation,
    pub tx_probs: &'a [f64],
    pub u: QosExponent,
    pub params: &'a SystemParams,
    pub profiles: &'a [UserProfile],
}

impl EffCapQuery<'_> {
    pub fn validate(&self) -> Result<()> {
        let n = self.profiles.len();
        if self.alloc.len() != n || self.tx_probs.len() != n {
            return Err(Error::InvalidCall(alloc::format!(
                "length mismatch: {} users, {} powers, {} transmission probabilities",
                n,
                self.alloc.len(),
                self.tx_probs.len()
            )));
        }
        if self.k >= n {
            return Err(Error::InvalidCall(alloc::format!(
                "user index {} out of range for {} users",
                self.k,
                n
            )));
        }
        if self.tx_probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(invalid("tx_probs", "every probability must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Which power normalizes the substitution variable `s` in the interferer
/// factors of the K-user integral.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SubstitutionPower {
    /// `s = sigma^2 x / P_k`, with `P_k` the decoded user's power.
    #[default]
    DecodedUser,
    /// `s = sigma^2 x / P_i` inside each interferer factor. This reading drops
    /// the interferer power altogether and is kept only as a negative control.
    Interferer,
}

/// Tail of the SINR, `P(gamma_k > x)`, as a product of independent factors.
#[derive(Debug, Clone)]
struct SinrTail {
    /// `chi_k sigma^2 / P_k`
    noise_rate: f64,
    /// `(p_i, c_i)` with `c_i = chi_k P_i / (chi_i P_k)`
    interferers: Vec<(f64, f64)>,
}

impl SinrTail {
    fn new(q: &EffCapQuery<'_>, binding: SubstitutionPower) -> Self {
        let k = q.k;
        let powers = q.alloc.powers();
        let chi_k = q.profiles[k].channel_rate();
        let pk = powers[k];
        let interferers = (k + 1..powers.len())
            .filter(|&i| powers[i] > 0.0 && q.tx_probs[i] > 0.0)
            .map(|i| {
                let c = match binding {
                    SubstitutionPower::DecodedUser => {
                        chi_k * powers[i] / (q.profiles[i].channel_rate() * pk)
                    }
                    SubstitutionPower::Interferer => 1.0,
                };
                (q.tx_probs[i], c)
            })
            .collect();
        Self {
            noise_rate: chi_k * q.params.noise_power_w() / pk,
            interferers,
        }
    }

    fn eval(&self, x: f64) -> f64 {
        if x.is_infinite() {
            return 0.0;
        }
        let mut tail = (-self.noise_rate * x).exp();
        for &(p, c) in &self.interferers {
            tail *= 1.0 - p + p / (1.0 + c * x);
        }
        tail
    }

    /// SINR levels where the tail changes shape: the mean SNR and the
    /// interference-limited ratios.
    fn scales(&self) -> Vec<f64> {
        let mut s = Vec::with_capacity(1 + self.interferers.len());
        s.push(1.0 / self.noise_rate);
        s.extend(self.interferers.iter().map(|&(_, c)| 1.0 / c));
        s
    }
}

fn breakpoints_around(scales: &[f64], map: impl Fn(f64) -> f64) -> Vec<f64> {
    let mut pts: Vec<f64> = scales
        .iter()
        .flat_map(|&s| [-3, 0, 2].map(move |j| s * 10f64.powi(j)))
        .filter(|x| x.is_finite() && *x > 0.0)
        .map(map)
        .filter(|t| t.is_finite())
        .collect();
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pts.dedup();
    pts
}

fn finish(neg_log_mgf: f64, u: QosExponent, slot_s: f64) -> Result<f64> {
    let alpha = neg_log_mgf / (u.value() * slot_s);
    if alpha.is_nan() {
        return Err(Error::FormulaDomain("effective capacity evaluated to NaN".into()));
    }
    Ok(alpha.max(0.0))
}

// -ln(1 + m) for m = E[exp(-uS)] - 1 in (-1, 0], with the argument clamped at 1e-300.
fn neg_log_one_plus(m: f64) -> Result<f64> {
    if !(m > -1.0 + 1e-300) {
        return Err(Error::FormulaDomain(alloc::format!(
            "log argument {} is not positive",
            1.0 + m
        )));
    }
    Ok(-m.ln_1p())
}

/// K-user effective capacity of user `k` through the single integral over
/// `t in [0, 1]`, where `x(t) = 2^(-ln t / (u B T_s)) - 1`.
pub fn effcap_k_user(query: &EffCapQuery<'_>, quad: &AdaptiveQuadrature) -> Result<f64> {
    effcap_k_user_with(query, quad, SubstitutionPower::DecodedUser)
}

/// [`effcap_k_user`] with an explicit choice of substitution power.
pub fn effcap_k_user_with(
    query: &EffCapQuery<'_>,
    quad: &AdaptiveQuadrature,
    binding: SubstitutionPower,
) -> Result<f64> {
    query.validate()?;
    if query.alloc.powers()[query.k] == 0.0 {
        return Ok(0.0);
    }
    let theta = query.u.service_exponent(query.params);
    let tail = SinrTail::new(query, binding);
    // t -> x(t): x = exp(-ln t / theta) - 1, x(0) = inf, x(1) = 0.
    let x_of_t = |t: f64| {
        if t <= 0.0 {
            f64::INFINITY
        } else {
            (-t.ln() / theta).exp_m1()
        }
    };
    let breaks = breakpoints_around(&tail.scales(), |x| (-theta * x.ln_1p()).exp());
    let est = quad.integrate_with_breaks(0.0, 1.0, &breaks, |t| tail.eval(x_of_t(t)))?;
    // E[(1+gamma)^-theta] = 1 - integral
    finish(neg_log_one_plus(-est.value)?, query.u, query.params.slot_duration_s())
}

// E[(1+gamma)^-theta] - 1 for a SINR with density `pdf`, integrated over x in
// [0, inf) through x = s y / (1 - y).
fn mgf_minus_one_over_density(
    pdf: impl Fn(f64) -> f64,
    scale: f64,
    feature_scales: &[f64],
    theta: f64,
    quad: &AdaptiveQuadrature,
) -> Result<f64> {
    let integrand = |y: f64| {
        if y >= 1.0 {
            return 0.0;
        }
        let x = scale * y / (1.0 - y);
        let jac = scale / ((1.0 - y) * (1.0 - y));
        let v = (-theta * x.ln_1p()).exp_m1() * pdf(x) * jac;
        if v.is_finite() {
            v
        } else {
            0.0
        }
    };
    let breaks = breakpoints_around(feature_scales, |x| x / (scale + x));
    Ok(quad.integrate_with_breaks(0.0, 1.0, &breaks, integrand)?.value)
}

/// Interference-free effective capacity of a user with power `power_w` and
/// channel rate `chi`, integrating the exponential SNR density.
pub fn effcap_single_user(
    power_w: f64,
    chi: f64,
    u: QosExponent,
    params: &SystemParams,
    quad: &AdaptiveQuadrature,
) -> Result<f64> {
    if power_w == 0.0 {
        return Ok(0.0);
    }
    let a = chi * params.noise_power_w() / power_w;
    let theta = u.service_exponent(params);
    let m = mgf_minus_one_over_density(|x| a * (-a * x).exp(), 1.0 / a, &[1.0 / a], theta, quad)?;
    finish(neg_log_one_plus(m)?, u, params.slot_duration_s())
}

/// Two-user effective capacity of the first-decoded user, mixing the SINR
/// densities for a sleeping and a transmitting second user.
///
/// With `a = chi_1 sigma^2 / P_1` and `c = chi_1 P_2 / (chi_2 P_1)` the
/// densities are `a e^(-ax)` (second user asleep) and
/// `e^(-ax) [a / (1 + cx) + c / (1 + cx)^2]` (second user transmitting).
pub fn effcap_two_user_first(
    alloc: &PowerAllocation,
    tx_prob_2: f64,
    u: QosExponent,
    params: &SystemParams,
    profiles: &[UserProfile],
    quad: &AdaptiveQuadrature,
) -> Result<f64> {
    two_user_check(alloc, profiles)?;
    if !(0.0..=1.0).contains(&tx_prob_2) {
        return Err(invalid("tx_prob_2", "must lie in [0, 1]"));
    }
    let (p1, p2) = (alloc.powers()[0], alloc.powers()[1]);
    if p1 == 0.0 {
        return Ok(0.0);
    }
    let (chi1, chi2) = (profiles[0].channel_rate(), profiles[1].channel_rate());
    let theta = u.service_exponent(params);
    let a = chi1 * params.noise_power_w() / p1;
    let asleep = mgf_minus_one_over_density(|x| a * (-a * x).exp(), 1.0 / a, &[1.0 / a], theta, quad)?;
    let awake = if p2 > 0.0 && tx_prob_2 > 0.0 {
        let c = chi1 * p2 / (chi2 * p1);
        let pdf = |x: f64| {
            let d = 1.0 + c * x;
            (-a * x).exp() * (a / d + c / (d * d))
        };
        mgf_minus_one_over_density(pdf, 1.0 / a, &[1.0 / a, 1.0 / c], theta, quad)?
    } else {
        asleep
    };
    let m = tx_prob_2 * awake + (1.0 - tx_prob_2) * asleep;
    finish(neg_log_one_plus(m)?, u, params.slot_duration_s())
}

/// Two-user effective capacity of the last-decoded user, which sees only noise.
pub fn effcap_two_user_second(
    alloc: &PowerAllocation,
    u: QosExponent,
    params: &SystemParams,
    profiles: &[UserProfile],
    quad: &AdaptiveQuadrature,
) -> Result<f64> {
    two_user_check(alloc, profiles)?;
    effcap_single_user(alloc.powers()[1], profiles[1].channel_rate(), u, params, quad)
}

fn two_user_check(alloc: &PowerAllocation, profiles: &[UserProfile]) -> Result<()> {
    if alloc.len() != 2 || profiles.len() != 2 {
        return Err(Error::InvalidCall(alloc::format!(
            "two-user formula called with {} powers and {} profiles",
            alloc.len(),
            profiles.len()
        )));
    }
    Ok(())
}

/// Monte Carlo effective-capacity estimate with its delta-method standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub value: f64,
    pub std_error: f64,
    pub samples: u64,
}

/// Streaming plug-in estimator of `-ln E[exp(-u S)] / (u T_s)` from per-slot
/// service samples (bits).
///
/// Accumulates `exp(-u S) - 1` so the small-`u` limit keeps its precision.
#[derive(Debug, Clone)]
pub struct ServiceMgfEstimator {
    u: QosExponent,
    slot_s: f64,
    n: u64,
    mean: f64,
    m2: f64,
}

impl ServiceMgfEstimator {
    pub fn new(u: QosExponent, params: &SystemParams) -> Self {
        Self {
            u,
            slot_s: params.slot_duration_s(),
            n: 0,
            mean: 0.0,
            m2: 0.0,
        }
    }

    /// Adds one service sample in bits.
    pub fn push_bits(&mut self, service_bits: f64) {
        self.push_term((-self.u.value() * service_bits).exp_m1());
    }

    // One sample of exp(-uS) - 1.
    fn push_term(&mut self, y: f64) {
        self.n += 1;
        let delta = y - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (y - self.mean);
    }

    pub fn estimate(&self) -> Result<McEstimate> {
        if self.n < 2 {
            return Err(Error::UndefinedStatistic("need at least two service samples".into()));
        }
        let value = finish(neg_log_one_plus(self.mean)?, self.u, self.slot_s)?;
        let var = self.m2 / (self.n - 1) as f64;
        let mgf = 1.0 + self.mean;
        let std_error = (var / self.n as f64).sqrt() / (mgf * self.u.value() * self.slot_s);
        Ok(McEstimate {
            value,
            std_error,
            samples: self.n,
        })
    }
}

/// Monte Carlo estimate of user `k`'s effective capacity: gains are drawn
/// from their exponential laws and each interferer `i > k` transmits
/// independently with probability `tx_probs[i]`.
pub fn effcap_monte_carlo<R: Rng>(
    query: &EffCapQuery<'_>,
    n_samples: u64,
    rng: &mut R,
) -> Result<McEstimate> {
    query.validate()?;
    if n_samples < 10_000 {
        return Err(invalid("n_samples", "Monte Carlo needs at least 1e4 samples"));
    }
    let k = query.k;
    let powers = query.alloc.powers();
    let theta = query.u.service_exponent(query.params);
    let noise = query.params.noise_power_w();
    let rates: Vec<f64> = query.profiles.iter().map(|p| p.channel_rate()).collect();
    let mut est = ServiceMgfEstimator::new(query.u, query.params);
    for _ in 0..n_samples {
        let own = powers[k] * sample_gain(rates[k], rng)?;
        let mut interference = 0.0;
        for i in k + 1..powers.len() {
            let on: f64 = rng.random();
            let g = sample_gain(rates[i], rng)?;
            if on < query.tx_probs[i] {
                interference += powers[i] * g;
            }
        }
        let gamma = own / (interference + noise);
        est.push_term((-theta * gamma.ln_1p()).exp_m1());
    }
    est.estimate()
}

/// Sum of the users' effective capacities, each at its own exponent.
pub fn sum_effective_capacity(
    alloc: &PowerAllocation,
    exponents: &[QosExponent],
    tx_probs: &[f64],
    params: &SystemParams,
    profiles: &[UserProfile],
    quad: &AdaptiveQuadrature,
) -> Result<f64> {
    if exponents.len() != profiles.len() {
        return Err(Error::InvalidCall(alloc::format!(
            "{} exponents for {} users",
            exponents.len(),
            profiles.len()
        )));
    }
    let mut total = 0.0;
    for (k, &u) in exponents.iter().enumerate() {
        total += effcap_k_user(
            &EffCapQuery {
                k,
                alloc,
                tx_probs,
                u,
                params,
                profiles,
            },
            quad,
        )?;
    }
    Ok(total)
}
