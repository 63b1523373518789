//! Delay-outage algebra: from a `(D_max, epsilon)` requirement to the QoS
//! exponent, the nonempty-buffer and transmission probabilities, and the
//! large-deviation tail approximations of delay and backlog.

#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;

use crate::effcap::{effective_bandwidth, QosExponent};
use crate::error::{invalid, Error, Result};
use crate::model::{mean_arrival_rate, SystemParams, UserProfile};

/// Derived per-user QoS quantities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QosState {
    pub u_star: QosExponent,
    /// `p_b = 1 - u* L`
    pub nonempty_buffer_prob: f64,
    /// `p_tx = p + p_b - p p_b`
    pub tx_prob: f64,
}

impl QosState {
    /// State implied by an arbitrary exponent `u` with `u L < 1`.
    pub fn at_exponent(profile: &UserProfile, u: QosExponent) -> Result<Self> {
        let ul = u.value() * profile.mean_burst_bits();
        if ul >= 1.0 {
            return Err(Error::DivergentMoment { product: ul });
        }
        let p = profile.arrival_prob();
        let pb = 1.0 - ul;
        Ok(Self {
            u_star: u,
            nonempty_buffer_prob: pb,
            tx_prob: p + pb - p * pb,
        })
    }
}

fn check_delay(d_max: f64, params: &SystemParams) -> Result<()> {
    if !(d_max >= params.slot_duration_s()) {
        return Err(Error::InfeasibleDelay {
            d_max_s: d_max,
            slot_s: params.slot_duration_s(),
        });
    }
    Ok(())
}

/// Smallest exponent meeting `P(D > D_max) <= epsilon`:
/// `u* = (beta - 1) / ((p + beta - 1) L)` with `beta = epsilon^(-T_s / D_max)`.
pub fn optimal_qos_exponent(profile: &UserProfile, params: &SystemParams) -> Result<QosExponent> {
    check_delay(profile.delay_bound_s(), params)?;
    let ratio = params.slot_duration_s() / profile.delay_bound_s();
    // beta - 1 without cancellation for epsilon close to one
    let beta_minus_one = (-ratio * profile.delay_tolerance().ln()).exp_m1();
    let u = beta_minus_one
        / ((profile.arrival_prob() + beta_minus_one) * profile.mean_burst_bits());
    QosExponent::new(u)
}

// (1 - uL) / (1 - uL + p uL), the per-slot decay of the delay tail.
fn delay_decay(u: QosExponent, profile: &UserProfile) -> Result<f64> {
    let ul = u.value() * profile.mean_burst_bits();
    if ul >= 1.0 {
        return Err(Error::DivergentMoment { product: ul });
    }
    Ok((1.0 - ul) / (1.0 - ul + profile.arrival_prob() * ul))
}

/// `P(D > d_max)` from the exponent, with `D = D_q + T_s`.
pub fn delay_violation_approx(
    u: QosExponent,
    profile: &UserProfile,
    params: &SystemParams,
    d_max: f64,
) -> Result<f64> {
    check_delay(d_max, params)?;
    Ok(delay_decay(u, profile)?.powf(d_max / params.slot_duration_s()))
}

/// `P(D_q > t)` for queueing delay `t >= 0`.
pub fn queueing_delay_ccdf(
    u: QosExponent,
    profile: &UserProfile,
    params: &SystemParams,
    t: f64,
) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(invalid("t", "queueing delay must be non-negative"));
    }
    Ok(delay_decay(u, profile)?.powf(t / params.slot_duration_s() + 1.0))
}

/// `P(Q > threshold) = p_b exp(-u* threshold)`.
pub fn backlog_ccdf(state: &QosState, threshold_bits: f64) -> Result<f64> {
    if !(threshold_bits >= 0.0) {
        return Err(invalid("threshold_bits", "must be non-negative"));
    }
    Ok(state.nonempty_buffer_prob * (-state.u_star.value() * threshold_bits).exp())
}

/// Exponent, nonempty-buffer and transmission probabilities for one user.
pub fn qos_state(profile: &UserProfile, params: &SystemParams) -> Result<QosState> {
    let u = optimal_qos_exponent(profile, params)?;
    QosState::at_exponent(profile, u)
}

/// Root of `alpha_b(u) = alpha_c(u)` on `(0, 1/L)` by bisection.
///
/// `effcap` evaluates the service process's effective capacity at `u`. The
/// interval is shrunk until it is narrower than `1e-10` absolute and `1e-9`
/// relative to `u`.
pub fn balance_qos_exponent<F>(
    profile: &UserProfile,
    mut effcap: F,
    params: &SystemParams,
) -> Result<QosExponent>
where
    F: FnMut(QosExponent) -> Result<f64>,
{
    let upper = 1.0 / profile.mean_burst_bits();
    let mut lo = upper * 1e-12;
    let mut hi = upper * (1.0 - 1e-12);
    let gap = |u: f64, effcap: &mut F| -> Result<f64> {
        let u = QosExponent::new(u)?;
        Ok(effective_bandwidth(profile, u, params)? - effcap(u)?)
    };
    let g_lo = gap(lo, &mut effcap)?;
    if g_lo >= 0.0 {
        let service = effcap(QosExponent::new(lo)?)?;
        return Err(Error::StabilityInfeasible {
            arrival_bps: mean_arrival_rate(profile, params),
            service_bps: service,
        });
    }
    if gap(hi, &mut effcap)? <= 0.0 {
        return Err(Error::Convergence {
            solver: "balance_qos_exponent",
            iterations: 0,
            residual: f64::NAN,
        });
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if gap(mid, &mut effcap)? < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        let width = hi - lo;
        if width <= 1e-10 && width <= 1e-9 * lo {
            break;
        }
    }
    QosExponent::new(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> SystemParams {
        SystemParams::new(1e-3, 18_000.0, 7.166e-17, 39.81).unwrap()
    }

    fn profile(p: f64, d_max: f64, eps: f64) -> UserProfile {
        UserProfile::new(300.0, 4.0, p, 1000.0, 0.01, d_max, eps).unwrap()
    }

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn exponent_example() {
        let prof = profile(0.5, 10e-3, 0.1);
        let u = optimal_qos_exponent(&prof, &params()).unwrap();
        let beta = 10f64.powf(0.1);
        assert!(rel(beta, 1.258_925_4) < 1e-7);
        assert!(rel(u.value(), (beta - 1.0) / ((0.5 + beta - 1.0) * 1000.0)) < 1e-12);
        assert!(rel(u.value(), 3.4118e-4) < 1e-4);
        let eps = delay_violation_approx(u, &prof, &params(), 10e-3).unwrap();
        assert!((eps - 0.1).abs() < 1e-12);
    }

    #[test]
    fn exponent_limits() {
        let loose = optimal_qos_exponent(&profile(0.5, 10e-3, 1.0 - 1e-9), &params()).unwrap();
        assert!(loose.value() < 1e-12);
        let prof = profile(1.0, 10e-3, 0.1);
        let u = optimal_qos_exponent(&prof, &params()).unwrap();
        let beta = 10f64.powf(0.1);
        assert!(rel(u.value(), (beta - 1.0) / (beta * 1000.0)) < 1e-12);
    }

    #[test]
    fn infeasible_delay() {
        let prof = profile(0.5, 0.5e-3, 0.1);
        assert!(matches!(
            optimal_qos_exponent(&prof, &params()),
            Err(Error::InfeasibleDelay { .. })
        ));
        let u = QosExponent::new(1e-4).unwrap();
        assert!(delay_violation_approx(u, &prof, &params(), 0.2e-3).is_err());
    }

    #[test]
    fn violation_tends_to_one_for_small_u() {
        let prof = profile(0.5, 10e-3, 0.1);
        let u = QosExponent::new(1e-12).unwrap();
        let v = delay_violation_approx(u, &prof, &params(), 10e-3).unwrap();
        assert!(v > 1.0 - 1e-8 && v <= 1.0);
    }

    #[test]
    fn delay_ccdf_consistency() {
        let prof = profile(0.5, 10e-3, 0.1);
        let u = QosExponent::new(3.4118e-4).unwrap();
        let at9 = queueing_delay_ccdf(u, &prof, &params(), 9e-3).unwrap();
        assert!((at9 - 0.1).abs() < 1e-4);
        let eq28 = delay_violation_approx(u, &prof, &params(), 10e-3).unwrap();
        assert_eq!(at9, eq28);
        let at0 = queueing_delay_ccdf(u, &prof, &params(), 0.0).unwrap();
        let ul = 3.4118e-4 * 1000.0;
        assert!(rel(at0, (1.0 - ul) / (1.0 - ul + 0.5 * ul)) < 1e-15);
        let mut prev = 1.0;
        for i in 0..100 {
            let v = queueing_delay_ccdf(u, &prof, &params(), i as f64 * 0.5e-3).unwrap();
            assert!(v <= prev);
            prev = v;
        }
        assert!(queueing_delay_ccdf(u, &prof, &params(), -1.0).is_err());
    }

    #[test]
    fn backlog_examples() {
        let state = QosState {
            u_star: QosExponent::new(3.4118e-4).unwrap(),
            nonempty_buffer_prob: 0.6588,
            tx_prob: 0.8294,
        };
        assert_eq!(backlog_ccdf(&state, 0.0).unwrap(), 0.6588);
        assert!(rel(backlog_ccdf(&state, 1000.0).unwrap(), 0.6588 * (-0.34118f64).exp()) < 1e-12);
        assert!(rel(backlog_ccdf(&state, 1000.0).unwrap(), 0.4684) < 1e-3);
        assert!(backlog_ccdf(&state, 1e9).unwrap() < 1e-300);
    }

    #[test]
    fn state_example() {
        let s = qos_state(&profile(0.5, 10e-3, 0.1), &params()).unwrap();
        assert!(rel(s.u_star.value(), 3.4118e-4) < 1e-4);
        assert!(rel(s.nonempty_buffer_prob, 0.65882) < 1e-4);
        assert!(rel(s.tx_prob, 0.82941) < 1e-4);
        let p = s.nonempty_buffer_prob;
        assert_eq!(s.tx_prob, 0.5 + p - 0.5 * p);
        let full = qos_state(&profile(1.0, 10e-3, 0.1), &params()).unwrap();
        assert_eq!(full.tx_prob, 1.0);
    }

    #[test]
    fn strict_requirement_limits() {
        // very small epsilon and p: u*L -> 1, p_b -> 0, p_tx -> p
        let s = qos_state(&profile(1e-3, 1e-3, 1e-12), &params()).unwrap();
        assert!(s.nonempty_buffer_prob < 1e-6);
        assert!((s.tx_prob - 1e-3).abs() < 1e-6);
    }

    #[test]
    fn balance_recovers_constant_service_root() {
        let prof = profile(0.5, 10e-3, 0.1);
        let target = QosExponent::new(2.5e-4).unwrap();
        let rate = effective_bandwidth(&prof, target, &params()).unwrap();
        let u = balance_qos_exponent(&prof, |_| Ok(rate), &params()).unwrap();
        assert!((u.value() - 2.5e-4).abs() < 1e-10);
        let resid = (effective_bandwidth(&prof, u, &params()).unwrap() - rate).abs();
        assert!(resid <= 1e-6 * rate);
    }

    #[test]
    fn balance_rejects_unstable_queue() {
        let prof = profile(0.5, 10e-3, 0.1);
        let err = balance_qos_exponent(&prof, |_| Ok(400_000.0), &params()).unwrap_err();
        assert!(matches!(err, Error::StabilityInfeasible { .. }));
    }
}
