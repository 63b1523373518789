//! Property suite behind `noma-ee validate`: independent cross-checks of the
//! analytical models and the optimizer on a scenario, each with a measured
//! margin against its threshold.

use std::path::Path;

use noma_ee_core::effcap::{
    effcap_k_user_with, effcap_monte_carlo, effcap_two_user_first, effcap_two_user_second, EffCapQuery,
    QosExponent, SubstitutionPower,
};
use noma_ee_core::model::{PowerAllocation, SystemParams, UserProfile};
use noma_ee_core::optimizer::{dinkelbach_solve, ee_vs_exponent_curve, EeProblem, EnergyModel};
use noma_ee_core::qos::{delay_violation_approx, optimal_qos_exponent};
use noma_ee_core::quadrature::AdaptiveQuadrature;
use noma_ee_core::sim::simulate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::commands::{problem_for, scenario_problem, sim_config, CliError};
use crate::config::{Scenario, SubstitutionName};
use crate::output::{num, OutputDir, Table};

pub const PROPERTIES: [&str; 10] = [
    "round-trip",
    "quadrature-vs-monte-carlo",
    "two-user-closed-forms",
    "effcap-monotonicity",
    "sum-concavity",
    "ee-exponent-monotonicity",
    "kkt",
    "two-mode-advantage",
    "delay-bound-monotonicity",
    "conservation",
];

pub fn check_selection<S: AsRef<str>>(names: &[S]) -> Result<(), String> {
    if names.is_empty() {
        return Err("empty property selection".into());
    }
    if let Some(bad) = names.iter().find(|n| !PROPERTIES.contains(&n.as_ref())) {
        return Err(format!("unknown property `{}`; known: {}", bad.as_ref(), PROPERTIES.join(", ")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropertyResult {
    pub name: &'static str,
    pub passed: bool,
    pub measured: f64,
    pub threshold: f64,
    /// Positive when the property holds with room to spare.
    pub margin: f64,
    pub samples: usize,
    pub detail: String,
}

impl PropertyResult {
    /// `measured <= threshold`.
    fn at_most(name: &'static str, measured: f64, threshold: f64, samples: usize, detail: String) -> Self {
        Self {
            name,
            passed: measured <= threshold,
            measured,
            threshold,
            margin: threshold - measured,
            samples,
            detail,
        }
    }

    /// `measured >= threshold`.
    fn at_least(name: &'static str, measured: f64, threshold: f64, samples: usize, detail: String) -> Self {
        Self {
            name,
            passed: measured >= threshold,
            measured,
            threshold,
            margin: measured - threshold,
            samples,
            detail,
        }
    }

    fn errored(name: &'static str, e: impl std::fmt::Display) -> Self {
        Self {
            name,
            passed: false,
            measured: f64::NAN,
            threshold: f64::NAN,
            margin: f64::NAN,
            samples: 0,
            detail: format!("error: {e}"),
        }
    }
}

type Check = fn(&Scenario, &mut ChaCha8Rng) -> Result<PropertyResult, CliError>;

fn check_for(name: &str) -> (&'static str, Check) {
    let f: Check = match name {
        "round-trip" => round_trip,
        "quadrature-vs-monte-carlo" => quadrature_vs_monte_carlo,
        "two-user-closed-forms" => two_user_closed_forms,
        "effcap-monotonicity" => effcap_monotonicity,
        "sum-concavity" => sum_concavity,
        "ee-exponent-monotonicity" => ee_exponent_monotonicity,
        "kkt" => kkt,
        "two-mode-advantage" => two_mode_advantage,
        "delay-bound-monotonicity" => delay_bound_monotonicity,
        "conservation" => conservation,
        _ => unreachable!("selection is checked before dispatch"),
    };
    (PROPERTIES.iter().find(|p| **p == name).expect("known property"), f)
}

/// Runs the selected properties; each gets its own stream of the base seed.
pub fn run_validate(scn: &Scenario, selection: &[String]) -> Result<Vec<PropertyResult>, CliError> {
    check_selection(selection).map_err(CliError::Usage)?;
    let seed = scn.raw.simulation.seed;
    Ok(selection
        .par_iter()
        .map(|name| {
            let (name, f) = check_for(name);
            let idx = PROPERTIES.iter().position(|p| *p == name).unwrap() as u64;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(idx);
            f(scn, &mut rng).unwrap_or_else(|e| PropertyResult::errored(name, e))
        })
        .collect())
}

pub const REPORT_HEADER: [&str; 7] = ["property", "passed", "measured", "threshold", "margin", "samples", "detail"];

pub fn report_table(results: &[PropertyResult]) -> Table {
    let mut t = Table::new(&REPORT_HEADER);
    for r in results {
        t.push(vec![
            r.name.into(),
            r.passed.to_string(),
            num(r.measured),
            num(r.threshold),
            num(r.margin),
            r.samples.to_string(),
            r.detail.clone(),
        ]);
    }
    t
}

pub fn cmd_validate(scn: &Scenario, selection: &[String], out: &Path) -> Result<Vec<PropertyResult>, CliError> {
    let results = run_validate(scn, selection)?;
    let mut dir = OutputDir::create(out)?;
    dir.write_table("validate.csv", &report_table(&results))?;
    dir.write_provenance("validate", scn, &[("properties", selection.join(","))])?;
    Ok(results)
}

/// Fails when any property failed.
pub fn verdict(results: &[PropertyResult]) -> Result<(), CliError> {
    let failed: Vec<&str> = results.iter().filter(|r| !r.passed).map(|r| r.name).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::PropertiesFailed { failed: failed.len(), total: results.len(), names: failed.join(",") })
    }
}

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    10f64.powf(rng.random_range(lo.log10()..hi.log10()))
}

fn round_trip(scn: &Scenario, rng: &mut ChaCha8Rng) -> Result<PropertyResult, CliError> {
    let n = scn.raw.validate.roundtrip_points;
    let slot = scn.params.slot_duration_s();
    let mut worst = 0.0f64;
    for _ in 0..n {
        let p = rng.random_range(1e-3..=1.0);
        let l = log_uniform(rng, 1.0, 1e5);
        let eps = rng.random_range(1e-6..0.999);
        let d = slot * rng.random_range(1.0..200.0);
        let prof = UserProfile::new(300.0, 4.0, p, l, 0.01, d, eps)?;
        let u = optimal_qos_exponent(&prof, &scn.params)?;
        let back = delay_violation_approx(u, &prof, &scn.params, d)?;
        worst = worst.max((back - eps).abs());
    }
    Ok(PropertyResult::at_most("round-trip", worst, 1e-12, n, "max |eps - back| over random profiles".into()))
}

fn substitution(scn: &Scenario) -> SubstitutionPower {
    match scn.raw.validate.substitution {
        SubstitutionName::DecodedUser => SubstitutionPower::DecodedUser,
        SubstitutionName::Interferer => SubstitutionPower::Interferer,
    }
}

/// Random configurations with up to four users around the scenario's link budget.
pub struct RandomConfig {
    pub profiles: Vec<UserProfile>,
    pub alloc: PowerAllocation,
    pub tx: Vec<f64>,
    pub u: QosExponent,
}

pub fn random_config(params: &SystemParams, base: &UserProfile, rng: &mut ChaCha8Rng) -> noma_ee_core::Result<RandomConfig> {
    let k = rng.random_range(1..=4);
    let mut d: Vec<f64> = (0..k).map(|_| rng.random_range(100.0..1000.0)).collect();
    d.sort_by(f64::total_cmp);
    let profiles = d
        .iter()
        .map(|&d| {
            UserProfile::new(
                d,
                base.path_loss_exp(),
                base.arrival_prob(),
                base.mean_burst_bits(),
                base.circuit_power_w(),
                base.delay_bound_s(),
                base.delay_tolerance(),
            )
        })
        .collect::<noma_ee_core::Result<Vec<_>>>()?;
    let powers = (0..k).map(|_| log_uniform(rng, 1e-4, params.peak_power_w())).collect();
    Ok(RandomConfig {
        profiles,
        alloc: PowerAllocation::new(powers, params)?,
        tx: (0..k).map(|_| rng.random_range(0.05..1.0)).collect(),
        u: QosExponent::new(log_uniform(rng, 1e-5, 10f64.powf(-3.05)))?,
    })
}

/// Worst ratio `|exact - mc| / max(rel_band * exact, se_band * se)` over
/// `configs` random configurations.
pub fn mc_agreement(
    params: &SystemParams,
    base: &UserProfile,
    configs: usize,
    samples: u64,
    rel_band: f64,
    se_band: f64,
    binding: SubstitutionPower,
    rng: &mut ChaCha8Rng,
) -> noma_ee_core::Result<(f64, usize)> {
    let quad = AdaptiveQuadrature::default();
    let cases: Vec<(RandomConfig, u64)> = (0..configs)
        .map(|_| Ok((random_config(params, base, rng)?, rng.random())))
        .collect::<noma_ee_core::Result<_>>()?;
    let ratios: Vec<Vec<f64>> = cases
        .par_iter()
        .map(|(c, seed)| {
            let mut mc_rng = ChaCha8Rng::seed_from_u64(*seed);
            (0..c.profiles.len())
                .map(|k| {
                    let q = EffCapQuery { k, alloc: &c.alloc, tx_probs: &c.tx, u: c.u, params, profiles: &c.profiles };
                    let exact = effcap_k_user_with(&q, &quad, binding)?;
                    let mc = effcap_monte_carlo(&q, samples, &mut mc_rng)?;
                    let band = (rel_band * exact.abs()).max(se_band * mc.std_error);
                    Ok((exact - mc.value).abs() / band)
                })
                .collect()
        })
        .collect::<noma_ee_core::Result<_>>()?;
    let n = ratios.iter().map(Vec::len).sum();
    Ok((ratios.into_iter().flatten().fold(0.0, f64::max), n))
}

fn quadrature_vs_monte_carlo(scn: &Scenario, rng: &mut ChaCha8Rng) -> Result<PropertyResult, CliError> {
    let v = &scn.raw.validate;
    let (worst, n) = mc_agreement(&scn.params, &scn.profiles[0], v.mc_configs, v.mc_samples, 0.01, 3.0, substitution(scn), rng)?;
    Ok(PropertyResult::at_most(
        "quadrature-vs-monte-carlo",
        worst,
        1.0,
        n,
        format!("max |quad - mc| / max(1% rel, 3 SE); {} samples each", v.mc_samples),
    ))
}

fn two_user_profiles(scn: &Scenario) -> noma_ee_core::Result<Vec<UserProfile>> {
    let first = scn.profiles[0].clone();
    let second = match scn.profiles.get(1) {
        Some(p) => p.clone(),
        None => UserProfile::new(
            2.0 * first.distance_m(),
            first.path_loss_exp(),
            first.arrival_prob(),
            first.mean_burst_bits(),
            first.circuit_power_w(),
            first.delay_bound_s(),
            first.delay_tolerance(),
        )?,
    };
    Ok(vec![first, second])
}

/// Largest relative gap between the two-user density forms and the K-user tail integral.
pub fn two_user_gap(scn: &Scenario, rng: &mut ChaCha8Rng, points: usize) -> noma_ee_core::Result<f64> {
    let profiles = two_user_profiles(scn)?;
    let quad = AdaptiveQuadrature::default();
    let params = &scn.params;
    let mut worst = 0.0f64;
    for _ in 0..points {
        let alloc = PowerAllocation::new(
            vec![log_uniform(rng, 1e-4, params.peak_power_w()), log_uniform(rng, 1e-4, params.peak_power_w())],
            params,
        )?;
        let tx = [rng.random_range(0.05..1.0), rng.random_range(0.05..1.0)];
        let u = QosExponent::new(log_uniform(rng, 1e-5, 10f64.powf(-3.05)))?;
        let q = |k| EffCapQuery { k, alloc: &alloc, tx_probs: &tx, u, params, profiles: &profiles };
        let first = effcap_two_user_first(&alloc, tx[1], u, params, &profiles, &quad)?;
        let second = effcap_two_user_second(&alloc, u, params, &profiles, &quad)?;
        let k0 = effcap_k_user_with(&q(0), &quad, SubstitutionPower::DecodedUser)?;
        let k1 = effcap_k_user_with(&q(1), &quad, SubstitutionPower::DecodedUser)?;
        worst = worst.max(((first - k0) / k0).abs()).max(((second - k1) / k1).abs());
    }
    Ok(worst)
}

fn two_user_closed_forms(scn: &Scenario, rng: &mut ChaCha8Rng) -> Result<PropertyResult, CliError> {
    let n = 50;
    let worst = two_user_gap(scn, rng, n)?;
    Ok(PropertyResult::at_most("two-user-closed-forms", worst, 0.01, n, "max relative gap, both users".into()))
}

fn random_powers(problem: &EeProblem, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let peak = problem.params().peak_power_w();
    (0..problem.users()).map(|_| log_uniform(rng, 1e-6, peak)).collect()
}

fn effcap_monotonicity(scn: &Scenario, rng: &mut ChaCha8Rng) -> Result<PropertyResult, CliError> {
    let problem = scenario_problem(scn)?;
    let n = scn.raw.validate.monotonicity_points;
    let peak = scn.params.peak_power_w();
    let tx: Vec<f64> = problem.qos().iter().map(|s| s.tx_prob).collect();
    let quad = problem.quadrature();
    let users = problem.users();
    let at = |k: usize, p: &[f64], u: QosExponent| -> noma_ee_core::Result<f64> {
        let alloc = PowerAllocation::new(p.to_vec(), &scn.params)?;
        let q = EffCapQuery { k, alloc: &alloc, tx_probs: &tx, u, params: &scn.params, profiles: problem.profiles() };
        effcap_k_user_with(&q, quad, SubstitutionPower::DecodedUser)
    };
    // worst relative move against the expected direction
    let mut worst = 0.0f64;
    for _ in 0..n {
        let p = random_powers(&problem, rng);
        let k = rng.random_range(0..users);
        let u = problem.qos()[k].u_star;
        let base = at(k, &p, u)?;
        let scale = log_uniform(rng, 1.01, 100.0);

        let mut own = p.clone();
        own[k] = (own[k] * scale).min(peak);
        worst = worst.max((base - at(k, &own, u)?) / base);

        if k + 1 < users {
            let j = rng.random_range(k + 1..users);
            let mut louder = p.clone();
            louder[j] = (louder[j] * scale).min(peak);
            worst = worst.max((at(k, &louder, u)? - base) / base);
        }

        let stricter = QosExponent::new(u.value() * scale)?;
        worst = worst.max((at(k, &p, stricter)? - base) / base);
    }
    Ok(PropertyResult::at_most(
        "effcap-monotonicity",
        worst,
        1e-9,
        n,
        "own power up, interferer power up, exponent up; worst relative violation".into(),
    ))
}

/// Smallest midpoint slack of the sum effective capacity, relative to the
/// midpoint value, over uniform pairs in the peak-power box.
pub fn concavity_slack(problem: &EeProblem, pairs: usize, rng: &mut ChaCha8Rng) -> noma_ee_core::Result<(f64, f64, Vec<f64>, Vec<f64>)> {
    let peak = problem.params().peak_power_w();
    let n = problem.users();
    let cases: Vec<(Vec<f64>, Vec<f64>)> = (0..pairs)
        .map(|_| {
            let a = (0..n).map(|_| rng.random_range(0.0..=peak)).collect();
            let b = (0..n).map(|_| rng.random_range(0.0..=peak)).collect();
            (a, b)
        })
        .collect();
    let slacks: Vec<(f64, f64)> = cases
        .par_iter()
        .map(|(a, b)| {
            let m: Vec<f64> = a.iter().zip(b).map(|(x, y)| 0.5 * (x + y)).collect();
            let mid = problem.sum_effcap(&m)?;
            let s = mid - 0.5 * (problem.sum_effcap(a)? + problem.sum_effcap(b)?);
            Ok((s / mid.abs().max(1.0), s))
        })
        .collect::<noma_ee_core::Result<_>>()?;
    let (i, &(rel, abs)) = slacks
        .iter()
        .enumerate()
        .min_by(|x, y| x.1 .0.total_cmp(&y.1 .0))
        .expect("at least one pair");
    Ok((rel, abs, cases[i].0.clone(), cases[i].1.clone()))
}

fn sum_concavity(scn: &Scenario, rng: &mut ChaCha8Rng) -> Result<PropertyResult, CliError> {
    let problem = scenario_problem(scn)?;
    let pairs = scn.raw.validate.concavity_pairs;
    let (rel, abs, a, b) = concavity_slack(&problem, pairs, rng)?;
    Ok(PropertyResult::at_least(
        "sum-concavity",
        rel,
        -1e-9,
        pairs,
        format!("min midpoint slack / midpoint; worst {abs} b/s at a={a:?} b={b:?}"),
    ))
}

/// Largest relative rise between consecutive points of a sequence that
/// should not increase.
pub fn worst_rise(values: &[f64]) -> f64 {
    values.windows(2).map(|w| (w[1] - w[0]) / w[0].abs()).fold(f64::NEG_INFINITY, f64::max)
}

fn ee_exponent_monotonicity(scn: &Scenario, _: &mut ChaCha8Rng) -> Result<PropertyResult, CliError> {
    let problem = scenario_problem(scn)?;
    let scales = &scn.raw.validate.exponent_scales;
    let curve = ee_vs_exponent_curve(&problem, scales, scn.coupling())?;
    let etas: Vec<f64> = curve.iter().map(|c| c.1).collect();
    let rise = if etas.len() < 2 { 0.0 } else { worst_rise(&etas) };
    let shown: Vec<String> = curve.iter().map(|(s, e)| format!("{s}:{e}")).collect();
    Ok(PropertyResult::at_most(
        "ee-exponent-monotonicity",
        rise,
        scn.raw.validate.monotone_slack,
        curve.len(),
        format!("worst relative rise of eta over exponent scale; {}", shown.join(" ")),
    ))
}

fn kkt(scn: &Scenario, _: &mut ChaCha8Rng) -> Result<PropertyResult, CliError> {
    let problem = scenario_problem(scn)?;
    let sol = dinkelbach_solve(&problem)?;
    let steps = &sol.trace.steps;
    let q_monotone = steps.windows(2).all(|w| w[1].q >= w[0].q);
    let last = steps.last().map(|s| s.f_value.abs()).unwrap_or(f64::INFINITY);
    let terminal = last <= scn.raw.optimizer.dinkelbach_tol * sol.sum_power();
    let slack = sol.kkt_residuals.iter().map(|r| r.slackness.abs()).fold(0.0, f64::max);
    let interior = sol
        .kkt_residuals
        .iter()
        .filter(|r| r.interior)
        .map(|r| r.relative)
        .fold(0.0, f64::max);
    let mut r = PropertyResult::at_most(
        "kkt",
        interior,
        1e-4,
        sol.kkt_residuals.len(),
        format!(
            "max interior relative stationarity; q non-decreasing: {q_monotone}; terminal |F| {last} (ok: {terminal}); max |slackness| {slack}"
        ),
    );
    r.passed &= q_monotone && terminal && slack <= 1e-9;
    Ok(r)
}

fn fig5_etas(scn: &Scenario) -> Result<Vec<(f64, f64, f64)>, CliError> {
    scn.raw
        .fig5
        .delay_bounds_ms
        .par_iter()
        .map(|&d| {
            let profiles = crate::commands::fig5_profiles(scn, d)?;
            let two = dinkelbach_solve(&problem_for(scn, profiles.clone(), EnergyModel::TwoMode)?)?;
            let one = dinkelbach_solve(&problem_for(scn, profiles, EnergyModel::SingleMode)?)?;
            Ok((d, two.eta, one.eta))
        })
        .collect()
}

fn two_mode_advantage(scn: &Scenario, _: &mut ChaCha8Rng) -> Result<PropertyResult, CliError> {
    let rows = fig5_etas(scn)?;
    let gap = rows.iter().map(|(_, two, one)| (two - one) / one).fold(f64::INFINITY, f64::min);
    let mut r = PropertyResult::at_least(
        "two-mode-advantage",
        gap,
        0.0,
        rows.len(),
        "min relative gain of two-mode over single-mode eta across the delay-bound grid".into(),
    );
    r.passed = gap > 0.0;
    Ok(r)
}

fn delay_bound_monotonicity(scn: &Scenario, _: &mut ChaCha8Rng) -> Result<PropertyResult, CliError> {
    let rows = fig5_etas(scn)?;
    // eta should not fall as the bound loosens: check the reversed sequence for rises
    let reversed: Vec<f64> = rows.iter().rev().map(|r| r.1).collect();
    let drop = if reversed.len() < 2 { 0.0 } else { worst_rise(&reversed) };
    let shown: Vec<String> = rows.iter().map(|(d, e, _)| format!("{d}ms:{e}")).collect();
    Ok(PropertyResult::at_most(
        "delay-bound-monotonicity",
        drop,
        scn.raw.validate.monotone_slack,
        rows.len(),
        format!("worst relative drop of two-mode eta as the bound loosens; {}", shown.join(" ")),
    ))
}

fn conservation(scn: &Scenario, rng: &mut ChaCha8Rng) -> Result<PropertyResult, CliError> {
    let runs = 8;
    let peak = scn.params.peak_power_w();
    let mut broken = 0usize;
    for _ in 0..runs {
        let powers = (0..scn.profiles.len()).map(|_| log_uniform(rng, 1e-6, peak)).collect();
        let alloc = PowerAllocation::new(powers, &scn.params)?;
        let cfg = sim_config(scn, 50_000, rng.random()).with_warmup(1_000);
        let st = simulate(&scn.params, &scn.profiles, &alloc, &cfg)?;
        broken += usize::from(!st.is_conserved());
    }
    Ok(PropertyResult::at_most(
        "conservation",
        broken as f64,
        0.0,
        runs,
        "runs where arrived != delivered + backlog".into(),
    ))
}
