//! Energy-efficiency maximization.
//!
//! The objective is `eta = sum_k alpha_k(u_k*) / sum_k P_k` with
//! `P_k = P_c + p_tx P_k^tx` (two-mode) or `P_c + P_k^tx` (single-mode).
//! Dinkelbach's method turns the ratio into a sequence of parametric problems
//! `F(q) = max sum alpha - q sum P`, each solved by a dual loop around a
//! cyclic per-user golden-section line search on `[0, P_max]`.

use alloc::vec::Vec;
use core::f64::consts::LN_2;

#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;

use crate::effcap::{effcap_k_user, effective_bandwidth, EffCapQuery, QosExponent};
use crate::error::{invalid, Error, Result};
use crate::model::{PowerAllocation, SystemParams, UserProfile};
use crate::qos::{qos_state, QosState};
use crate::quadrature::AdaptiveQuadrature;

/// Circuitry power model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EnergyModel {
    /// Transmit power is spent only in transmission mode, with probability `p_tx`.
    #[default]
    TwoMode,
    /// The transmitter never sleeps.
    SingleMode,
}

impl EnergyModel {
    /// Fraction of slots in which transmit power is spent.
    pub fn tx_duty(self, state: &QosState) -> f64 {
        match self {
            EnergyModel::TwoMode => state.tx_prob,
            EnergyModel::SingleMode => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            EnergyModel::TwoMode => "two-mode",
            EnergyModel::SingleMode => "single-mode",
        }
    }
}

/// Average power drawn by one user: circuit power plus the duty-weighted transmit power.
pub fn total_power(profile: &UserProfile, state: &QosState, p_tx_w: f64, model: EnergyModel) -> f64 {
    profile.circuit_power_w() + model.tx_duty(state) * p_tx_w
}

/// Sign convention of the multiplier update.
///
/// `Reversed` is `lambda <- [lambda + beta (P_max - P)]^+`, paired with a
/// Lagrangian that adds `lambda (P - P_max)`. `Standard` is the projected dual
/// step for the constraint `P <= P_max`: `lambda <- [lambda - beta (P_max - P)]^+`,
/// paired with a Lagrangian that subtracts `lambda (P - P_max)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MultiplierSign {
    Reversed,
    #[default]
    Standard,
}

impl MultiplierSign {
    pub fn name(self) -> &'static str {
        match self {
            MultiplierSign::Reversed => "reversed",
            MultiplierSign::Standard => "standard",
        }
    }

    // Coefficient of lambda_k * P_k in the Lagrangian.
    fn lagrangian_sign(self) -> f64 {
        match self {
            MultiplierSign::Reversed => 1.0,
            MultiplierSign::Standard => -1.0,
        }
    }
}

/// Tolerances and caps of the solvers. Every trace records the values used.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    /// Stop when `|F(q)| <= dinkelbach_tol * sum P`.
    pub dinkelbach_tol: f64,
    pub dinkelbach_max_iter: usize,
    pub dual_max_iter: usize,
    /// Cyclic line searches stop when no power moves by more than this
    /// fraction of the largest power (or of the line-search resolution).
    pub power_rel_tol: f64,
    pub max_cycles: usize,
    /// Golden-section bracket width as a fraction of `P_max`, and then of
    /// the located optimum (optimal powers are often far below `P_max`).
    pub line_search_rel_tol: f64,
    /// `beta_0` in the step size `beta_0 / sqrt(j)`.
    pub subgradient_step0: f64,
    pub multiplier_sign: MultiplierSign,
    /// Relative step of the central differences used in KKT residuals.
    pub fd_rel_step: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            dinkelbach_tol: 1e-6,
            dinkelbach_max_iter: 50,
            dual_max_iter: 500,
            power_rel_tol: 1e-6,
            max_cycles: 200,
            line_search_rel_tol: 1e-7,
            subgradient_step0: 1e-2,
            multiplier_sign: MultiplierSign::Standard,
            fd_rel_step: 1e-5,
        }
    }
}

/// A fully specified energy-efficiency problem: system, users, their QoS
/// states, the circuitry model and solver settings.
#[derive(Debug, Clone)]
pub struct EeProblem {
    params: SystemParams,
    profiles: Vec<UserProfile>,
    qos: Vec<QosState>,
    tx_probs: Vec<f64>,
    model: EnergyModel,
    settings: SolverSettings,
    quad: AdaptiveQuadrature,
}

impl EeProblem {
    /// Builds the problem with each user's exponent at its delay-outage boundary.
    pub fn new(
        params: SystemParams,
        profiles: Vec<UserProfile>,
        model: EnergyModel,
        settings: SolverSettings,
    ) -> Result<Self> {
        let qos = profiles
            .iter()
            .map(|p| qos_state(p, &params))
            .collect::<Result<Vec<_>>>()?;
        Self::with_qos(params, profiles, qos, model, settings)
    }

    /// Builds the problem from explicit QoS states.
    pub fn with_qos(
        params: SystemParams,
        profiles: Vec<UserProfile>,
        qos: Vec<QosState>,
        model: EnergyModel,
        settings: SolverSettings,
    ) -> Result<Self> {
        if profiles.is_empty() {
            return Err(invalid("profiles", "at least one user is required"));
        }
        if qos.len() != profiles.len() {
            return Err(Error::InvalidCall(alloc::format!(
                "{} QoS states for {} users",
                qos.len(),
                profiles.len()
            )));
        }
        let tx_probs = qos.iter().map(|s| s.tx_prob).collect();
        Ok(Self {
            params,
            profiles,
            qos,
            tx_probs,
            model,
            settings,
            quad: AdaptiveQuadrature::default(),
        })
    }

    pub fn with_model(mut self, model: EnergyModel) -> Self {
        self.model = model;
        self
    }

    pub fn with_settings(mut self, settings: SolverSettings) -> Self {
        self.settings = settings;
        self
    }

    pub fn params(&self) -> &SystemParams {
        &self.params
    }

    pub fn profiles(&self) -> &[UserProfile] {
        &self.profiles
    }

    pub fn qos(&self) -> &[QosState] {
        &self.qos
    }

    pub fn model(&self) -> EnergyModel {
        self.model
    }

    pub fn settings(&self) -> &SolverSettings {
        &self.settings
    }

    pub fn quadrature(&self) -> &AdaptiveQuadrature {
        &self.quad
    }

    pub fn users(&self) -> usize {
        self.profiles.len()
    }

    fn peak(&self) -> f64 {
        self.params.peak_power_w()
    }

    fn raw_alloc(&self, powers: &[f64]) -> PowerAllocation {
        PowerAllocation::unchecked(powers.to_vec())
    }

    /// Effective capacity of user `k` at its exponent, for any non-negative powers.
    pub fn effcap(&self, k: usize, powers: &[f64]) -> Result<f64> {
        let alloc = self.raw_alloc(powers);
        effcap_k_user(
            &EffCapQuery {
                k,
                alloc: &alloc,
                tx_probs: &self.tx_probs,
                u: self.qos[k].u_star,
                params: &self.params,
                profiles: &self.profiles,
            },
            &self.quad,
        )
    }

    /// Effective capacities of every user.
    pub fn effcaps(&self, powers: &[f64]) -> Result<Vec<f64>> {
        (0..self.users()).map(|k| self.effcap(k, powers)).collect()
    }

    pub fn sum_effcap(&self, powers: &[f64]) -> Result<f64> {
        Ok(self.effcaps(powers)?.iter().sum())
    }

    /// Per-user average power consumption.
    pub fn user_powers(&self, powers: &[f64]) -> Vec<f64> {
        powers
            .iter()
            .zip(self.profiles.iter().zip(&self.qos))
            .map(|(&p, (prof, state))| total_power(prof, state, p, self.model))
            .collect()
    }

    pub fn sum_power(&self, powers: &[f64]) -> f64 {
        self.user_powers(powers).iter().sum()
    }

    // Sum of the effective capacities that depend on P_k: users 0..=k.
    fn coupled_effcap(&self, k: usize, powers: &[f64]) -> Result<f64> {
        let mut s = 0.0;
        for j in 0..=k {
            s += self.effcap(j, powers)?;
        }
        Ok(s)
    }

    /// Derivative of the sum effective capacity in `P_k` by central differences
    /// (one-sided at zero power).
    pub fn sum_effcap_gradient(&self, k: usize, powers: &[f64]) -> Result<f64> {
        let mut p = powers.to_vec();
        let x = powers[k];
        let h = self.settings.fd_rel_step * x.max(self.settings.fd_rel_step * self.peak());
        if x - h < 0.0 {
            p[k] = x + h;
            let up = self.coupled_effcap(k, &p)?;
            p[k] = x;
            let here = self.coupled_effcap(k, &p)?;
            return Ok((up - here) / h);
        }
        p[k] = x + h;
        let up = self.coupled_effcap(k, &p)?;
        p[k] = x - h;
        let down = self.coupled_effcap(k, &p)?;
        Ok((up - down) / (2.0 * h))
    }
}

/// Energy efficiency of an allocation in bits per joule.
pub fn energy_efficiency(alloc: &PowerAllocation, problem: &EeProblem) -> Result<f64> {
    check_alloc(alloc, problem)?;
    let denom = problem.sum_power(alloc.powers());
    if !(denom > 0.0) {
        return Err(Error::InvalidModel(alloc::format!(
            "total power {denom} W is not positive"
        )));
    }
    Ok(problem.sum_effcap(alloc.powers())? / denom)
}

fn check_alloc(alloc: &PowerAllocation, problem: &EeProblem) -> Result<()> {
    if alloc.len() != problem.users() {
        return Err(Error::InvalidCall(alloc::format!(
            "{} powers for {} users",
            alloc.len(),
            problem.users()
        )));
    }
    Ok(())
}

/// Result of one parametric subproblem.
#[derive(Debug, Clone, PartialEq)]
pub struct InnerSolution {
    pub alloc: PowerAllocation,
    pub multipliers: Vec<f64>,
    /// `sum alpha - q sum P` at the returned powers.
    pub objective: f64,
    /// Last subgradient `P_max - P_k` per user.
    pub dual_residuals: Vec<f64>,
    pub dual_iterations: usize,
    pub dual_converged: bool,
}

/// Maximizes `sum alpha - q sum P` over `[0, P_max]^K`, starting every user at `P_max / 2`.
pub fn inner_maximize(q: f64, problem: &EeProblem) -> Result<InnerSolution> {
    let start = alloc::vec![0.5 * problem.peak(); problem.users()];
    inner_maximize_from(q, problem, &start)
}

/// [`inner_maximize`] warm-started from `start`.
pub fn inner_maximize_from(q: f64, problem: &EeProblem, start: &[f64]) -> Result<InnerSolution> {
    if !(q >= 0.0) {
        return Err(invalid("q", "the Dinkelbach parameter must be non-negative"));
    }
    if start.len() != problem.users() {
        return Err(Error::InvalidCall("start vector has the wrong length".into()));
    }
    let s = &problem.settings;
    let peak = problem.peak();
    let line_tol = s.line_search_rel_tol * peak;
    let sign = s.multiplier_sign.lagrangian_sign();
    let duty: Vec<f64> = problem
        .qos
        .iter()
        .map(|st| problem.model.tx_duty(st))
        .collect();

    let mut powers: Vec<f64> = start.iter().map(|p| p.clamp(0.0, peak)).collect();
    let mut lambda = alloc::vec![0.0; problem.users()];
    let mut dual_iterations = 0;
    let mut dual_converged = false;

    for j in 1..=s.dual_max_iter {
        dual_iterations = j;
        let mut converged = false;
        for _ in 0..s.max_cycles {
            let previous = powers.clone();
            for k in 0..problem.users() {
                let lam = lambda[k];
                let cost = q * duty[k];
                let mut trial = powers.clone();
                let mut objective = |x: f64| -> Result<f64> {
                    trial[k] = x;
                    Ok(problem.coupled_effcap(k, &trial)? - cost * x + sign * lam * (x - peak))
                };
                let mut x = line_maximize(&mut objective, peak, line_tol, s.line_search_rel_tol)
                    .map_err(|e| match e {
                        Error::LineSearch { reason, .. } => Error::LineSearch { user: k, reason },
                        other => other,
                    })?;
                // a gain over zero power below the quadrature resolution is noise
                if x > 0.0 {
                    let gain = objective(x)? - objective(0.0)?;
                    trial[k] = x;
                    let resolution = problem.quad.rel_tol() * problem.coupled_effcap(k, &trial)?;
                    if gain <= resolution {
                        x = 0.0;
                    }
                }
                powers[k] = x;
            }
            let largest = powers.iter().cloned().fold(0.0, f64::max);
            let moved = powers
                .iter()
                .zip(&previous)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            if moved <= (s.power_rel_tol * largest).max(1e-11 * peak) {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::Convergence {
                solver: "cyclic line search",
                iterations: s.max_cycles,
                residual: f64::NAN,
            });
        }
        let alloc = PowerAllocation::unchecked(powers.clone());
        let next = subgradient_step(&lambda, &alloc, j, &problem.params, s.subgradient_step0, s.multiplier_sign)?;
        if next == lambda {
            dual_converged = true;
            break;
        }
        lambda = next;
    }

    let objective = problem.sum_effcap(&powers)? - q * problem.sum_power(&powers);
    let dual_residuals = powers.iter().map(|p| peak - p).collect();
    Ok(InnerSolution {
        alloc: PowerAllocation::new(powers, &problem.params)?,
        multipliers: lambda,
        objective,
        dual_residuals,
        dual_iterations,
        dual_converged,
    })
}

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Maximizes `f` on `[0, hi]`: a log-spaced scan brackets the best point,
/// then golden-section search refines it.
///
/// The scan matters because raising one user's power adds interference that
/// is convex in that power for every earlier-decoded user, so the 1-D
/// objective need not be unimodal. Ties go to the smaller argument.
fn line_maximize<F>(f: &mut F, hi: f64, tol: f64, rel_tol: f64) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    let mut grid = alloc::vec![0.0];
    grid.extend((0..=24).map(|i| hi * 10f64.powf(-12.0 + 0.5 * i as f64)));
    let mut values = Vec::with_capacity(grid.len());
    for &x in &grid {
        let v = f(x)?;
        if !v.is_finite() {
            return Err(Error::LineSearch {
                user: 0,
                reason: alloc::format!("objective is {v} at {x} W"),
            });
        }
        values.push(v);
    }
    let mut i_best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[i_best] {
            i_best = i;
        }
    }
    let lo = grid[i_best.saturating_sub(1)];
    let up = grid[(i_best + 1).min(grid.len() - 1)];
    let x = golden_section_max(f, lo, up, tol, rel_tol)?;
    let fx = f(x)?;
    if fx > values[i_best] || (fx == values[i_best] && x < grid[i_best]) {
        Ok(x)
    } else {
        Ok(grid[i_best])
    }
}

/// Golden-section maximization of a unimodal function on `[lo, hi]`.
///
/// The endpoints are compared with the final bracket so boundary optima are
/// hit exactly; ties go to the smaller argument.
fn golden_section_max<F>(f: &mut F, lo: f64, hi: f64, tol: f64, rel_tol: f64) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    let floor = 1e-12 * hi.max(1e-300);
    let f_lo = f(lo)?;
    let f_hi = f(hi)?;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    // resolution relative to the located optimum, floored for optima at zero
    while b - a > tol.min(hi - lo) * 0.999 || (b - a > rel_tol * 0.5 * (a + b) && b - a > floor) {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d)?;
        }
    }
    let (mut best, mut f_best) = if fc >= fd { (c, fc) } else { (d, fd) };
    if f_lo >= f_best {
        best = lo;
        f_best = f_lo;
    }
    if f_hi > f_best {
        best = hi;
    }
    Ok(best)
}

/// One projected subgradient update of the peak-power multipliers with step
/// `step0 / sqrt(j)`.
pub fn subgradient_step(
    lambda: &[f64],
    alloc: &PowerAllocation,
    j: usize,
    params: &SystemParams,
    step0: f64,
    sign: MultiplierSign,
) -> Result<Vec<f64>> {
    if lambda.len() != alloc.len() {
        return Err(Error::InvalidCall("multiplier and power vectors differ in length".into()));
    }
    if j == 0 {
        return Err(invalid("j", "iteration index starts at 1"));
    }
    if lambda.iter().any(|l| !(*l >= 0.0)) {
        return Err(invalid("lambda", "multipliers must be non-negative"));
    }
    let step = step0 / (j as f64).sqrt();
    let direction = match sign {
        MultiplierSign::Reversed => 1.0,
        MultiplierSign::Standard => -1.0,
    };
    Ok(lambda
        .iter()
        .zip(alloc.powers())
        .map(|(l, p)| (l + direction * step * (params.peak_power_w() - p)).max(0.0))
        .collect())
}

/// KKT residuals of one user.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktResidual {
    /// `|dL/dP_k|` in bits/J.
    pub stationarity: f64,
    /// Stationarity divided by the power price `q * p_tx` (or `q`, single-mode).
    pub relative: f64,
    /// `lambda_k (P_k - P_max)`.
    pub slackness: f64,
    /// `0 < P_k < P_max`.
    pub interior: bool,
}

/// Stationarity and complementary-slackness residuals at `alloc`.
pub fn kkt_residual(
    alloc: &PowerAllocation,
    q: f64,
    multipliers: &[f64],
    problem: &EeProblem,
) -> Result<Vec<KktResidual>> {
    check_alloc(alloc, problem)?;
    if multipliers.len() != problem.users() {
        return Err(Error::InvalidCall("one multiplier per user is required".into()));
    }
    let sign = problem.settings.multiplier_sign.lagrangian_sign();
    let peak = problem.peak();
    let mut out = Vec::with_capacity(problem.users());
    for k in 0..problem.users() {
        let p = alloc.powers()[k];
        let price = q * problem.model.tx_duty(&problem.qos[k]);
        let grad = problem.sum_effcap_gradient(k, alloc.powers())?;
        let stationarity = (grad - price + sign * multipliers[k]).abs();
        let scale = if price > 0.0 { price } else { grad.abs().max(1.0) };
        out.push(KktResidual {
            stationarity,
            relative: stationarity / scale,
            slackness: multipliers[k] * (p - peak),
            interior: p > 0.0 && p < peak,
        });
    }
    Ok(out)
}

/// Output of the closed-form power map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosedFormPower {
    pub power_w: f64,
    /// `q p <= lambda`: the map has no finite value and `P_max` is returned.
    pub unbounded: bool,
}

/// `[B gamma / (ln 2 (1 + gamma) (q p - lambda))]^+`, clipped to `[0, P_max]`.
pub fn closed_form_power(
    gamma_k: f64,
    q: f64,
    p_k: f64,
    lambda_k: f64,
    params: &SystemParams,
) -> Result<ClosedFormPower> {
    if !(gamma_k >= 0.0) {
        return Err(invalid("gamma_k", "SINR must be non-negative"));
    }
    let price = q * p_k - lambda_k;
    if !(price > 0.0) {
        return Ok(ClosedFormPower {
            power_w: params.peak_power_w(),
            unbounded: true,
        });
    }
    let ratio = if gamma_k.is_infinite() { 1.0 } else { gamma_k / (1.0 + gamma_k) };
    let p = params.bandwidth_hz() * ratio / (LN_2 * price);
    Ok(ClosedFormPower {
        power_w: p.clamp(0.0, params.peak_power_w()),
        unbounded: false,
    })
}

/// Mean SINR of user `k`: own mean received power over mean interference plus noise.
pub fn mean_sinr(k: usize, powers: &[f64], problem: &EeProblem) -> f64 {
    let rate = |i: usize| problem.profiles[i].channel_rate();
    let interference: f64 = (k + 1..powers.len())
        .map(|i| problem.tx_probs[i] * powers[i] / rate(i))
        .sum();
    powers[k] / rate(k) / (interference + problem.params.noise_power_w())
}

/// Fixed point of the closed-form map for user `k` with the other powers held.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedPoint {
    pub power_w: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Iterates `P <- closed_form_power(mean_sinr(P))` from `P_max / 2`.
pub fn closed_form_fixed_point(
    k: usize,
    q: f64,
    lambda_k: f64,
    powers: &[f64],
    problem: &EeProblem,
) -> Result<FixedPoint> {
    let duty = problem.model.tx_duty(&problem.qos[k]);
    let mut p = powers.to_vec();
    p[k] = 0.5 * problem.peak();
    for it in 1..=200 {
        let gamma = mean_sinr(k, &p, problem);
        let next = closed_form_power(gamma, q, duty, lambda_k, &problem.params)?.power_w;
        let moved = (next - p[k]).abs();
        p[k] = next;
        if moved <= 1e-12 * next.max(1e-300) {
            return Ok(FixedPoint { power_w: next, iterations: it, converged: true });
        }
    }
    Ok(FixedPoint { power_w: p[k], iterations: 200, converged: false })
}

/// One Dinkelbach iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct DinkelbachStep {
    pub q: f64,
    /// `F(q) = sum alpha - q sum P` at the inner maximizer.
    pub f_value: f64,
    pub powers: Vec<f64>,
    pub dual_residuals: Vec<f64>,
    pub dual_iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DinkelbachTrace {
    pub steps: Vec<DinkelbachStep>,
}

/// Solution of the energy-efficiency problem.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimalAllocation {
    pub alloc: PowerAllocation,
    pub qos: Vec<QosState>,
    pub eta: f64,
    pub effcaps: Vec<f64>,
    pub user_powers: Vec<f64>,
    pub multipliers: Vec<f64>,
    pub kkt_residuals: Vec<KktResidual>,
    pub trace: DinkelbachTrace,
}

impl OptimalAllocation {
    pub fn sum_effcap(&self) -> f64 {
        self.effcaps.iter().sum()
    }

    pub fn sum_power(&self) -> f64 {
        self.user_powers.iter().sum()
    }
}

/// A failed solve keeps the iterations completed so far.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveFailure {
    pub error: Error,
    pub trace: DinkelbachTrace,
}

impl core::fmt::Display for SolveFailure {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "{} (after {} Dinkelbach steps)", self.error, self.trace.steps.len())
    }
}

impl core::error::Error for SolveFailure {}

/// Maximizes the energy efficiency by Dinkelbach's method.
pub fn dinkelbach_solve(problem: &EeProblem) -> core::result::Result<OptimalAllocation, SolveFailure> {
    let mut trace = DinkelbachTrace::default();
    let fail = |error: Error, trace: &DinkelbachTrace| SolveFailure { error, trace: trace.clone() };
    let s = problem.settings;

    let mut powers = alloc::vec![0.5 * problem.peak(); problem.users()];
    let ratio = |p: &[f64]| -> Result<(f64, f64)> {
        let num = problem.sum_effcap(p)?;
        let den = problem.sum_power(p);
        if !(den > 0.0) {
            return Err(Error::InvalidModel(alloc::format!("total power {den} W is not positive")));
        }
        Ok((num, den))
    };
    let (num, den) = ratio(&powers).map_err(|e| fail(e, &trace))?;
    let mut q = num / den;

    for _ in 0..s.dinkelbach_max_iter {
        let inner = inner_maximize_from(q, problem, &powers).map_err(|e| fail(e, &trace))?;
        let mut candidate = inner.alloc.powers().to_vec();
        let (mut num, mut den) = ratio(&candidate).map_err(|e| fail(e, &trace))?;
        let mut f_value = num - q * den;
        // the previous iterate has F = 0 by construction of q
        if f_value < 0.0 {
            candidate = powers.clone();
            (num, den) = ratio(&candidate).map_err(|e| fail(e, &trace))?;
            f_value = 0.0;
        }
        trace.steps.push(DinkelbachStep {
            q,
            f_value,
            powers: candidate.clone(),
            dual_residuals: inner.dual_residuals.clone(),
            dual_iterations: inner.dual_iterations,
        });
        if f_value.abs() <= s.dinkelbach_tol * den {
            let alloc = PowerAllocation::new(candidate, &problem.params).map_err(|e| fail(e, &trace))?;
            let effcaps = problem.effcaps(alloc.powers()).map_err(|e| fail(e, &trace))?;
            let user_powers = problem.user_powers(alloc.powers());
            let eta = effcaps.iter().sum::<f64>() / user_powers.iter().sum::<f64>();
            let multipliers = if candidate_is(&inner, &alloc) {
                inner.multipliers.clone()
            } else {
                alloc::vec![0.0; problem.users()]
            };
            let kkt_residuals =
                kkt_residual(&alloc, q, &multipliers, problem).map_err(|e| fail(e, &trace))?;
            return Ok(OptimalAllocation {
                alloc,
                qos: problem.qos.clone(),
                eta,
                effcaps,
                user_powers,
                multipliers,
                kkt_residuals,
                trace,
            });
        }
        q = num / den;
        powers = candidate;
    }
    let residual = trace.steps.last().map_or(f64::NAN, |s| s.f_value);
    Err(fail(
        Error::Convergence {
            solver: "dinkelbach",
            iterations: s.dinkelbach_max_iter,
            residual,
        },
        &trace,
    ))
}

fn candidate_is(inner: &InnerSolution, alloc: &PowerAllocation) -> bool {
    inner.alloc == *alloc
}

/// How a scaled exponent propagates into the power model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ExponentCoupling {
    /// Only the effective capacities see the scaled exponent; the
    /// transmission probabilities stay at their delay-outage values.
    #[default]
    CapacityOnly,
    /// Nonempty-buffer and transmission probabilities are recomputed at the
    /// scaled exponent as well.
    FullState,
}

/// Optimized energy efficiency with every user's exponent scaled by `scale`.
pub fn ee_at_exponent_scale(
    problem: &EeProblem,
    scale: f64,
    coupling: ExponentCoupling,
) -> core::result::Result<OptimalAllocation, SolveFailure> {
    let wrap = |error| SolveFailure { error, trace: DinkelbachTrace::default() };
    let mut states = Vec::with_capacity(problem.users());
    for (profile, state) in problem.profiles.iter().zip(&problem.qos) {
        let u = QosExponent::new(state.u_star.value() * scale).map_err(wrap)?;
        let scaled = crate::qos::QosState::at_exponent(profile, u).map_err(wrap)?;
        states.push(match coupling {
            ExponentCoupling::CapacityOnly => QosState { u_star: u, ..*state },
            ExponentCoupling::FullState => scaled,
        });
    }
    let scaled = EeProblem::with_qos(
        problem.params,
        problem.profiles.clone(),
        states,
        problem.model,
        problem.settings,
    )
    .map_err(wrap)?;
    dinkelbach_solve(&scaled)
}

/// `(scale, optimized eta)` over an increasing grid of exponent scales.
pub fn ee_vs_exponent_curve(
    problem: &EeProblem,
    scales: &[f64],
    coupling: ExponentCoupling,
) -> core::result::Result<Vec<(f64, f64)>, SolveFailure> {
    if scales.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(SolveFailure {
            error: invalid("scales", "grid must be strictly increasing"),
            trace: DinkelbachTrace::default(),
        });
    }
    scales
        .iter()
        .map(|&s| ee_at_exponent_scale(problem, s, coupling).map(|o| (s, o.eta)))
        .collect()
}

/// Smallest powers for which every user's effective capacity at its
/// exponent covers its effective bandwidth, found by bisection from the last
/// decoded user backwards.
pub fn qos_balanced_powers(problem: &EeProblem) -> Result<PowerAllocation> {
    let n = problem.users();
    let peak = problem.peak();
    let mut powers = alloc::vec![0.0; n];
    for k in (0..n).rev() {
        let demand = effective_bandwidth(&problem.profiles[k], problem.qos[k].u_star, &problem.params)?;
        let mut p = powers.clone();
        p[k] = peak;
        let best = problem.effcap(k, &p)?;
        if best < demand {
            return Err(Error::StabilityInfeasible {
                arrival_bps: demand,
                service_bps: best,
            });
        }
        let (mut lo, mut hi) = (0.0, peak);
        while hi - lo > 1e-12 * peak {
            let mid = 0.5 * (lo + hi);
            p[k] = mid;
            if problem.effcap(k, &p)? >= demand {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        powers[k] = hi;
    }
    PowerAllocation::new(powers, &problem.params)
}
