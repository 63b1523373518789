//! The `optimize`, `fig4` and `fig5` experiment runners. Each computes its
//! tables first and writes them afterwards.

use std::io;
use std::path::Path;

use noma_ee_core::model::{watts_to_dbm, PowerAllocation, UserProfile};
use noma_ee_core::optimizer::{
    dinkelbach_solve, qos_balanced_powers, DinkelbachTrace, EeProblem, EnergyModel, OptimalAllocation,
    SolveFailure,
};
use noma_ee_core::qos::delay_violation_approx;
use noma_ee_core::sim::{
    empirical_delay_violation, empirical_energy_efficiency, empirical_tx_prob, simulate, SimConfig, SimStats,
};
use rayon::prelude::*;

use crate::config::{AllocationChoice, ConfigError, Scenario};
use crate::output::{num, opt, OutputDir, Table};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Model(#[from] noma_ee_core::Error),
    #[error("solver failed: {0}")]
    Solve(#[from] SolveFailure),
    #[error("cannot write output: {0}")]
    Io(#[from] io::Error),
    #[error("{0}")]
    Usage(String),
    #[error("{failed} of {total} properties failed: {names}")]
    PropertiesFailed { failed: usize, total: usize, names: String },
}

pub fn problem_for(scn: &Scenario, profiles: Vec<UserProfile>, model: EnergyModel) -> noma_ee_core::Result<EeProblem> {
    EeProblem::new(scn.params, profiles, model, scn.settings())
}

pub fn scenario_problem(scn: &Scenario) -> noma_ee_core::Result<EeProblem> {
    problem_for(scn, scn.profiles.clone(), scn.energy_model())
}

pub fn sim_config(scn: &Scenario, n_slots: u64, seed: u64) -> SimConfig {
    let s = &scn.raw.simulation;
    let mut cfg = SimConfig::new(n_slots, seed).with_warmup(s.warmup_slots.min(n_slots.saturating_sub(1)));
    cfg.delay_histogram_cap = s.delay_histogram_cap;
    cfg.channel = scn.channel();
    cfg
}

/// Independent replications, pooled in seed order.
pub fn replicate(
    scn: &Scenario,
    profiles: &[UserProfile],
    alloc: &PowerAllocation,
    n_slots: u64,
    seeds: &[u64],
) -> noma_ee_core::Result<SimStats> {
    let runs: Vec<SimStats> = seeds
        .par_iter()
        .map(|&s| simulate(&scn.params, profiles, alloc, &sim_config(scn, n_slots, s)))
        .collect::<noma_ee_core::Result<_>>()?;
    SimStats::pooled(&runs)
}

pub const ALLOCATION_HEADER: [&str; 14] = [
    "row",
    "user",
    "distance_m",
    "qos_exponent_per_bit",
    "nonempty_buffer_prob",
    "tx_prob",
    "tx_power_w",
    "tx_power_dbm",
    "effcap_bps",
    "total_power_w",
    "multiplier",
    "kkt_relative",
    "kkt_interior",
    "energy_efficiency_bits_per_joule",
];

pub fn allocation_table(problem: &EeProblem, sol: &OptimalAllocation) -> Table {
    let mut t = Table::new(&ALLOCATION_HEADER);
    for (k, prof) in problem.profiles().iter().enumerate() {
        let p = sol.alloc.powers()[k];
        let s = &sol.qos[k];
        t.push(vec![
            "user".into(),
            k.to_string(),
            num(prof.distance_m()),
            num(s.u_star.value()),
            num(s.nonempty_buffer_prob),
            num(s.tx_prob),
            num(p),
            num(watts_to_dbm(p)),
            num(sol.effcaps[k]),
            num(sol.user_powers[k]),
            num(sol.multipliers[k]),
            num(sol.kkt_residuals[k].relative),
            sol.kkt_residuals[k].interior.to_string(),
            String::new(),
        ]);
    }
    t.push(vec![
        "summary".into(),
        "all".into(),
        String::new(),
        String::new(),
        String::new(),
        String::new(),
        num(sol.alloc.powers().iter().sum()),
        String::new(),
        num(sol.sum_effcap()),
        num(sol.sum_power()),
        String::new(),
        num(sol.kkt_residuals.iter().filter(|r| r.interior).map(|r| r.relative).fold(0.0, f64::max)),
        String::new(),
        num(sol.eta),
    ]);
    t
}

pub fn trace_table(trace: &DinkelbachTrace, users: usize) -> Table {
    let mut header: Vec<String> =
        ["iteration", "q_bits_per_joule", "f_value_bps", "dual_iterations"].map(String::from).to_vec();
    header.extend((0..users).map(|k| format!("power_w_user{k}")));
    header.extend((0..users).map(|k| format!("dual_residual_w_user{k}")));
    let mut t = Table::new(&header);
    for (i, s) in trace.steps.iter().enumerate() {
        let mut row = vec![i.to_string(), num(s.q), num(s.f_value), s.dual_iterations.to_string()];
        row.extend(s.powers.iter().map(|&p| num(p)));
        row.extend(s.dual_residuals.iter().map(|&r| num(r)));
        row.resize(header.len(), String::new());
        t.push(row);
    }
    t
}

pub struct OptimizeOutput {
    pub allocation: Option<Table>,
    pub trace: Table,
    pub result: Result<(), CliError>,
}

pub fn run_optimize(scn: &Scenario) -> OptimizeOutput {
    let users = scn.profiles.len();
    let problem = match scenario_problem(scn) {
        Ok(p) => p,
        Err(e) => {
            return OptimizeOutput {
                allocation: None,
                trace: trace_table(&DinkelbachTrace::default(), users),
                result: Err(e.into()),
            }
        }
    };
    match dinkelbach_solve(&problem) {
        Ok(sol) => OptimizeOutput {
            allocation: Some(allocation_table(&problem, &sol)),
            trace: trace_table(&sol.trace, users),
            result: Ok(()),
        },
        Err(f) => OptimizeOutput {
            allocation: None,
            trace: trace_table(&f.trace, users),
            result: Err(f.into()),
        },
    }
}

pub fn cmd_optimize(scn: &Scenario, out: &Path) -> Result<(), CliError> {
    let run = run_optimize(scn);
    let mut dir = OutputDir::create(out)?;
    if let Some(a) = &run.allocation {
        dir.write_table("allocation.csv", a)?;
    }
    dir.write_table("trace.csv", &run.trace)?;
    let status = match &run.result {
        Ok(()) => "ok".to_string(),
        Err(e) => format!("failed: {e}"),
    };
    dir.write_provenance("optimize", scn, &[("status", status)])?;
    run.result
}

pub const FIG4_HEADER: [&str; 7] = [
    "user",
    "delay_ms",
    "delay_bound_ms",
    "analytic_violation_prob",
    "empirical_violation_prob",
    "empirical_half_width",
    "bursts",
];

pub const FIG4_USERS_HEADER: [&str; 10] = [
    "user",
    "tx_power_w",
    "analytic_tx_prob",
    "empirical_tx_prob",
    "arrived_bits",
    "delivered_bits",
    "final_backlog_bits",
    "mean_delay_ms",
    "analytic_violation_at_bound",
    "empirical_violation_at_bound",
];

pub struct Fig4Output {
    pub alloc: PowerAllocation,
    pub stats: SimStats,
    pub curve: Table,
    pub users: Table,
}

pub fn run_fig4(scn: &Scenario) -> Result<Fig4Output, CliError> {
    let problem = scenario_problem(scn)?;
    let alloc = match scn.raw.fig4.allocation {
        AllocationChoice::Optimized => dinkelbach_solve(&problem)?.alloc,
        AllocationChoice::QosBalanced => qos_balanced_powers(&problem)?,
    };
    let stats = replicate(scn, &scn.profiles, &alloc, scn.raw.simulation.n_slots, &scn.seeds())?;
    let slot_ms = scn.params.slot_duration_s() * 1e3;

    let grid = scn.delay_grid_ms();
    let empirical: Vec<_> = grid
        .iter()
        .map(|&d| empirical_delay_violation(&stats, d * 1e-3))
        .collect::<noma_ee_core::Result<_>>()?;
    let mut curve = Table::new(&FIG4_HEADER);
    for (k, prof) in scn.profiles.iter().enumerate() {
        let u = problem.qos()[k].u_star;
        for (&d, emp) in grid.iter().zip(&empirical) {
            let analytic = delay_violation_approx(u, prof, &scn.params, d * 1e-3)?;
            curve.push(vec![
                k.to_string(),
                num(d),
                num(prof.delay_bound_s() * 1e3),
                num(analytic),
                num(emp[k].value),
                num(emp[k].half_width),
                emp[k].trials.to_string(),
            ]);
        }
    }

    let tx = empirical_tx_prob(&stats);
    let mut users = Table::new(&FIG4_USERS_HEADER);
    for (k, prof) in scn.profiles.iter().enumerate() {
        let st = &stats.users[k];
        let at_bound = empirical_delay_violation(&stats, prof.delay_bound_s())?[k].value;
        let u = problem.qos()[k].u_star;
        users.push(vec![
            k.to_string(),
            num(alloc.powers()[k]),
            num(problem.qos()[k].tx_prob),
            num(tx[k]),
            st.total_arrived_bits.to_string(),
            st.total_delivered_bits.to_string(),
            st.final_backlog_bits.to_string(),
            opt(st.mean_delay_slots().map(|s| s * slot_ms)),
            num(delay_violation_approx(u, prof, &scn.params, prof.delay_bound_s())?),
            num(at_bound),
        ]);
    }
    Ok(Fig4Output { alloc, stats, curve, users })
}

pub fn cmd_fig4(scn: &Scenario, out: &Path) -> Result<(), CliError> {
    let r = run_fig4(scn)?;
    let mut dir = OutputDir::create(out)?;
    dir.write_table("fig4.csv", &r.curve)?;
    dir.write_table("fig4_users.csv", &r.users)?;
    let powers = r.alloc.powers().iter().map(|&p| num(p)).collect::<Vec<_>>().join(",");
    dir.write_provenance(
        "fig4",
        scn,
        &[
            ("tx_power_w", powers),
            ("n_slots", scn.raw.simulation.n_slots.to_string()),
            ("warmup_slots", scn.raw.simulation.warmup_slots.to_string()),
            ("conserved", r.stats.is_conserved().to_string()),
        ],
    )?;
    Ok(())
}

pub const FIG5_HEADER: [&str; 7] = [
    "delay_bound_ms",
    "energy_model",
    "energy_efficiency_bits_per_joule",
    "sum_effcap_bps",
    "sum_power_w",
    "dinkelbach_iterations",
    "sim_energy_efficiency_bits_per_joule",
];

#[derive(Debug, Clone, PartialEq)]
pub struct Fig5Point {
    pub delay_bound_ms: f64,
    pub model: EnergyModel,
    pub eta: f64,
    pub sum_effcap: f64,
    pub sum_power: f64,
    pub iterations: usize,
    pub sim_eta: Option<f64>,
}

pub fn fig5_profiles(scn: &Scenario, d_ms: f64) -> noma_ee_core::Result<Vec<UserProfile>> {
    scn.profiles.iter().map(|p| p.clone().with_delay_bound(d_ms * 1e-3)).collect()
}

/// Two rows per grid point, two-mode first.
pub fn run_fig5(scn: &Scenario) -> Result<Vec<Fig5Point>, CliError> {
    let f5 = &scn.raw.fig5;
    let jobs: Vec<(f64, EnergyModel)> = f5
        .delay_bounds_ms
        .iter()
        .flat_map(|&d| [(d, EnergyModel::TwoMode), (d, EnergyModel::SingleMode)])
        .collect();
    let seeds: Vec<u64> = (0..f5.seeds as u64).map(|r| scn.raw.simulation.seed.wrapping_add(r)).collect();
    jobs.par_iter()
        .map(|&(d, model)| {
            let profiles = fig5_profiles(scn, d)?;
            let problem = problem_for(scn, profiles.clone(), model)?;
            let sol = dinkelbach_solve(&problem)?;
            let sim_eta = if f5.simulate {
                let stats = replicate(scn, &profiles, &sol.alloc, f5.n_slots, &seeds)?;
                Some(empirical_energy_efficiency(&stats, model)?)
            } else {
                None
            };
            Ok(Fig5Point {
                delay_bound_ms: d,
                model,
                eta: sol.eta,
                sum_effcap: sol.sum_effcap(),
                sum_power: sol.sum_power(),
                iterations: sol.trace.steps.len(),
                sim_eta,
            })
        })
        .collect()
}

pub fn fig5_table(points: &[Fig5Point]) -> Table {
    let mut t = Table::new(&FIG5_HEADER);
    for p in points {
        t.push(vec![
            num(p.delay_bound_ms),
            p.model.name().into(),
            num(p.eta),
            num(p.sum_effcap),
            num(p.sum_power),
            p.iterations.to_string(),
            opt(p.sim_eta),
        ]);
    }
    t
}

pub fn cmd_fig5(scn: &Scenario, out: &Path) -> Result<(), CliError> {
    let points = run_fig5(scn)?;
    let mut dir = OutputDir::create(out)?;
    dir.write_table("fig5.csv", &fig5_table(&points))?;
    dir.write_provenance(
        "fig5",
        scn,
        &[
            ("fig5_n_slots", scn.raw.fig5.n_slots.to_string()),
            ("fig5_seeds", scn.raw.fig5.seeds.to_string()),
        ],
    )?;
    Ok(())
}
