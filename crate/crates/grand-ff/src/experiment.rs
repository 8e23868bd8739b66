//! Seeded multi-replication studies and their machine-readable tables.
//!
//! A plan names a scenario, a policy, empty-server rules, an `r` grid, and a
//! replication count; everything downstream is a pure function of the plan
//! plus the master seed. Per-replication seeds come from a splitmix64 stream
//! over the master seed, assigned in loop order (`r` outer, replication
//! inner), so tables are reproducible byte for byte and independent of any
//! execution interleaving.

use serde::Serialize;
use thiserror::Error;

use crate::engine::{
    simulate, EventSink, PolicyKind, SimError, SimOptions, SimReport, VecSink,
};
use crate::model::{ModelError, Scenario};
use crate::optim::{self, OptimError};
use crate::ranks::{replay, EmptyRule, RankError, RankTracker, TrackerOptions};
use crate::stats::{half_width_95, BusyPeriodSummary, StatsError, SteadyStateEstimate};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid plan: {0}")]
    InvalidPlan(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Rank(#[from] RankError),
    #[error(transparent)]
    Optim(#[from] OptimError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

/// Default model-time horizon for a run at scale `r`: slow polynomial growth
/// so large-`r` steady state is not undersampled.
pub fn default_horizon(r: f64) -> f64 {
    200.0f64.max(20.0 * r.powf(0.3))
}

/// Default warmup: ten slowest service times or a tenth of the horizon,
/// whichever is larger.
pub fn default_warmup(min_mu: f64, horizon: f64) -> f64 {
    (10.0 / min_mu).max(0.1 * horizon)
}

/// splitmix64 step; the documented seed-splitting function.
pub fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// First `count` outputs of the splitmix64 stream seeded by `master`.
pub fn split_seeds(master: u64, count: usize) -> Vec<u64> {
    let mut state = master;
    (0..count).map(|_| splitmix64(&mut state)).collect()
}

#[derive(Debug, Clone)]
pub struct ExperimentPlan {
    pub scenario: Scenario,
    pub policy: PolicyKind,
    pub rules: Vec<EmptyRule>,
    pub r_grid: Vec<f64>,
    /// Overrides [`default_horizon`] when set.
    pub horizon: Option<f64>,
    /// Overrides [`default_warmup`] when set.
    pub warmup: Option<f64>,
    pub seeds: usize,
    pub master_seed: u64,
}

impl ExperimentPlan {
    pub fn new(scenario: Scenario, policy: PolicyKind) -> Self {
        ExperimentPlan {
            scenario,
            policy,
            rules: vec![EmptyRule::FirstFit],
            r_grid: Vec::new(),
            horizon: None,
            warmup: None,
            seeds: 10,
            master_seed: 0,
        }
    }

    pub fn horizon_for(&self, r: f64) -> f64 {
        self.horizon.unwrap_or_else(|| default_horizon(r))
    }

    pub fn warmup_for(&self, horizon: f64) -> f64 {
        self.warmup
            .unwrap_or_else(|| default_warmup(self.scenario.min_mu(), horizon))
    }

    fn validate(&self) -> Result<(), ExperimentError> {
        if self.r_grid.is_empty() {
            return Err(ExperimentError::InvalidPlan("empty r grid".into()));
        }
        if self.r_grid.iter().any(|&r| !(r > 0.0)) {
            return Err(ExperimentError::InvalidPlan("r values must be positive".into()));
        }
        if self.seeds == 0 {
            return Err(ExperimentError::InvalidPlan("need at least one seed".into()));
        }
        for &r in &self.r_grid {
            let h = self.horizon_for(r);
            let w = self.warmup_for(h);
            if h <= w {
                return Err(ExperimentError::InvalidPlan(format!(
                    "horizon {h} must exceed warmup {w} (r = {r})"
                )));
            }
        }
        Ok(())
    }

    /// Non-fatal diagnostics; currently the `p` window for the
    /// state-dependent policy, which the convergence guarantee assumes.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if let PolicyKind::GrandZp { p } = self.policy {
            let kappa = self.scenario.configs.kappa() as f64;
            let lower = 1.0 - 1.0 / (8.0 * kappa);
            if !(p > lower && p < 1.0) {
                out.push(format!(
                    "p = {p} is outside ({lower:.6}, 1); runs proceed but the \
                     asymptotic-optimality regime does not cover them (kappa = {kappa})"
                ));
            }
        }
        out
    }
}

/// One grid point of a convergence study, averaged over replications.
#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceRow {
    pub r: f64,
    pub seeds: usize,
    pub horizon: f64,
    pub warmup: f64,
    /// Mean over seeds of the time-averaged right-most occupied rank / r.
    pub u_over_r: f64,
    /// 95% half-width over seeds.
    pub u_ci: f64,
    pub q_over_r: f64,
    pub q_ci: f64,
    pub q_star: f64,
    /// Equilibrium mass of the fixed-`a` policy; absent for the
    /// state-dependent one.
    pub q_star_a: Option<f64>,
    /// Rank boundary used for `G`: floor(target mass * r).
    pub g_target: u64,
    /// Mean over seeds of time-averaged `G(target) / Q`.
    pub g_over_q: f64,
    /// Empty-rank mass left of the target: `(target - G(target)) / r`.
    pub hole_mass: f64,
    /// Occupied mass right of the target: `(Q - G(target)) / r`.
    pub overflow_mass: f64,
    /// Set by [`check_lower_bound`].
    pub lower_bound_ok: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceTable {
    pub policy: PolicyKind,
    pub q_star: f64,
    pub rows: Vec<ConvergenceRow>,
}

/// Run the full grid: per `r`, `seeds` independent replications simulated
/// under the policy with First-Fit rank tracking, then averaged.
pub fn run_convergence(plan: &ExperimentPlan) -> Result<ConvergenceTable, ExperimentError> {
    plan.validate()?;
    let rho = plan.scenario.rho();
    let lp = optim::solve_qstar(&plan.scenario.configs, &rho)?;
    let q_star_a = match plan.policy {
        PolicyKind::GrandAz { a } => {
            Some(optim::solve_xstar_a(&plan.scenario.configs, &rho, a)?.q_star_a)
        }
        PolicyKind::GrandZp { .. } => None,
    };
    let target_mass = q_star_a.unwrap_or(lp.q_star);

    let seeds = split_seeds(plan.master_seed, plan.r_grid.len() * plan.seeds);
    let mut rows = Vec::with_capacity(plan.r_grid.len());
    for (ri, &r) in plan.r_grid.iter().enumerate() {
        let scenario = plan.scenario.with_r(r);
        let horizon = plan.horizon_for(r);
        let warmup = plan.warmup_for(horizon);
        let g_target = (target_mass * r).floor() as u64;

        let mut u_vals = Vec::with_capacity(plan.seeds);
        let mut q_vals = Vec::with_capacity(plan.seeds);
        let mut g_over_q = Vec::with_capacity(plan.seeds);
        let mut holes = Vec::with_capacity(plan.seeds);
        let mut overflow = Vec::with_capacity(plan.seeds);
        for rep in 0..plan.seeds {
            let seed = seeds[ri * plan.seeds + rep];
            let opts = SimOptions::new(horizon, warmup, seed);
            let mut topts = TrackerOptions::new(warmup, horizon);
            topts.g_target = Some(g_target);
            let mut tracker =
                RankTracker::new(&scenario.configs, EmptyRule::FirstFit, topts);
            simulate(&scenario, &plan.policy, &opts, &mut [&mut tracker])?;
            let u = tracker.u_estimate().ok_or_else(short_run)?.mean;
            let q = tracker.q_estimate().ok_or_else(short_run)?.mean;
            let g = tracker.g_estimate().ok_or_else(short_run)?.mean;
            u_vals.push(u / r);
            q_vals.push(q / r);
            g_over_q.push(if q > 0.0 { g / q } else { 0.0 });
            holes.push((target_mass * r - g) / r);
            overflow.push((q - g) / r);
        }
        rows.push(ConvergenceRow {
            r,
            seeds: plan.seeds,
            horizon,
            warmup,
            u_over_r: mean(&u_vals),
            u_ci: half_width_95(&u_vals),
            q_over_r: mean(&q_vals),
            q_ci: half_width_95(&q_vals),
            q_star: lp.q_star,
            q_star_a,
            g_target,
            g_over_q: mean(&g_over_q),
            hole_mass: mean(&holes),
            overflow_mass: mean(&overflow),
            lower_bound_ok: true,
        });
    }
    let mut table = ConvergenceTable {
        policy: plan.policy,
        q_star: lp.q_star,
        rows,
    };
    check_lower_bound(&mut table);
    Ok(table)
}

fn short_run() -> ExperimentError {
    ExperimentError::InvalidPlan("window too short for batch-means estimates".into())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Universal lower bound: flag any row whose mean `U/r` undershoots
/// `q* - 3 * CI`. A flag indicates a simulator bug, not a model property.
pub fn check_lower_bound(table: &mut ConvergenceTable) -> bool {
    let mut all_ok = true;
    for row in &mut table.rows {
        row.lower_bound_ok = row.u_over_r >= table.q_star - 3.0 * row.u_ci;
        all_ok &= row.lower_bound_ok;
    }
    all_ok
}

impl ConvergenceTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "r,seeds,horizon,warmup,u_over_r,u_ci,q_over_r,q_ci,q_star,q_star_a,\
             g_target,g_over_q,hole_mass,overflow_mass,lower_bound_ok\n",
        );
        for row in &self.rows {
            let q_star_a = row
                .q_star_a
                .map(|v| fmt_f(v))
                .unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
                fmt_f(row.r),
                row.seeds,
                fmt_f(row.horizon),
                fmt_f(row.warmup),
                fmt_f(row.u_over_r),
                fmt_f(row.u_ci),
                fmt_f(row.q_over_r),
                fmt_f(row.q_ci),
                fmt_f(row.q_star),
                q_star_a,
                row.g_target,
                fmt_f(row.g_over_q),
                fmt_f(row.hole_mass),
                fmt_f(row.overflow_mass),
                row.lower_bound_ok,
            ));
        }
        out
    }
}

fn fmt_f(v: f64) -> String {
    format!("{v:.9}")
}

/// Per-seed outcome of a coupled replay comparison.
#[derive(Debug, Clone, Serialize)]
pub struct ReplaySeedRow {
    pub r: f64,
    pub seed_index: usize,
    pub seed: u64,
    /// Time-averaged `U` per rule, in plan order.
    pub u_means: Vec<f64>,
    /// Strict win for First-Fit against every other rule in the plan.
    pub ff_strictly_smallest: Option<bool>,
    /// Sampled `Q` trajectories identical across rules (must always hold).
    pub q_identical: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReplayCompareReport {
    pub policy: PolicyKind,
    pub rules: Vec<EmptyRule>,
    pub rows: Vec<ReplaySeedRow>,
    pub ff_wins: usize,
    pub comparisons: usize,
}

/// Simulate `seeds` independent logs per grid point and replay each under
/// every rule in the plan with shared decisions and ordinals.
pub fn run_replay_compare(plan: &ExperimentPlan) -> Result<ReplayCompareReport, ExperimentError> {
    plan.validate()?;
    if plan.rules.is_empty() {
        return Err(ExperimentError::InvalidPlan("no empty-server rules".into()));
    }
    let ff_pos = plan.rules.iter().position(|&r| r == EmptyRule::FirstFit);
    let seeds = split_seeds(plan.master_seed, plan.r_grid.len() * plan.seeds);
    let mut rows = Vec::new();
    let mut ff_wins = 0usize;
    let mut comparisons = 0usize;
    for (ri, &r) in plan.r_grid.iter().enumerate() {
        let scenario = plan.scenario.with_r(r);
        let horizon = plan.horizon_for(r);
        let warmup = plan.warmup_for(horizon);
        for rep in 0..plan.seeds {
            let seed = seeds[ri * plan.seeds + rep];
            let opts = SimOptions::new(horizon, warmup, seed);
            let mut log = VecSink::default();
            simulate(&scenario, &plan.policy, &opts, &mut [&mut log])?;
            let mut topts = TrackerOptions::new(warmup, horizon);
            topts.sample_interval = Some((horizon - warmup) / 64.0);
            let trackers = replay(&log.events, &scenario.configs, &plan.rules, topts)?;
            let u_means: Vec<f64> = trackers
                .iter()
                .map(|t| t.u_estimate().ok_or_else(short_run).map(|e| e.mean))
                .collect::<Result<_, _>>()?;
            let q_ref: Vec<u64> = trackers[0].samples().iter().map(|s| s.q).collect();
            let q_identical = trackers.iter().all(|t| {
                t.samples().iter().map(|s| s.q).collect::<Vec<_>>() == q_ref
            });
            let ff_strictly_smallest = ff_pos.map(|pos| {
                u_means
                    .iter()
                    .enumerate()
                    .all(|(i, &u)| i == pos || u_means[pos] < u)
            });
            if let Some(win) = ff_strictly_smallest {
                comparisons += 1;
                if win {
                    ff_wins += 1;
                }
            }
            rows.push(ReplaySeedRow {
                r,
                seed_index: rep,
                seed,
                u_means,
                ff_strictly_smallest,
                q_identical,
            });
        }
    }
    Ok(ReplayCompareReport {
        policy: plan.policy,
        rules: plan.rules.clone(),
        rows,
        ff_wins,
        comparisons,
    })
}

impl ReplayCompareReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("r,seed_index,seed,rule,u_mean,ff_strictly_smallest,q_identical\n");
        for row in &self.rows {
            for (rule, u) in self.rules.iter().zip(&row.u_means) {
                out.push_str(&format!(
                    "{},{},{},{},{},{},{}\n",
                    fmt_f(row.r),
                    row.seed_index,
                    row.seed,
                    rule.label(),
                    fmt_f(*u),
                    row.ff_strictly_smallest
                        .map(|b| b.to_string())
                        .unwrap_or_default(),
                    row.q_identical,
                ));
            }
        }
        out
    }
}

/// Summary of one simulation run with rank tracking, for the `simulate`
/// command and tests.
#[derive(Debug, Serialize)]
pub struct SingleRunReport {
    pub policy: PolicyKind,
    pub rule: EmptyRule,
    pub r: f64,
    pub horizon: f64,
    pub warmup: f64,
    pub seed: u64,
    pub events: u64,
    pub arrivals: u64,
    pub departures: u64,
    pub z: Option<SteadyStateEstimate>,
    pub q: Option<SteadyStateEstimate>,
    pub u: Option<SteadyStateEstimate>,
    pub g: Option<SteadyStateEstimate>,
    pub g_target: Option<u64>,
    pub final_z: u64,
    pub final_q: u64,
    pub final_u: u64,
    pub busy_periods: BusyPeriodSummary,
    /// Poisson-marginal diagnostic when state sampling was enabled.
    pub marginals: Option<crate::stats::PoissonMarginalReport>,
}

pub struct SingleRunOptions {
    pub horizon: f64,
    pub warmup: f64,
    pub seed: u64,
    pub rule: EmptyRule,
    pub g_target: Option<u64>,
    pub sample_interval: Option<f64>,
}

/// One replication with full tracking; events optionally streamed to a sink.
pub fn run_single(
    scenario: &Scenario,
    policy: &PolicyKind,
    opts: &SingleRunOptions,
    extra_sink: Option<&mut dyn EventSink>,
) -> Result<SingleRunReport, ExperimentError> {
    let mut sim_opts = SimOptions::new(opts.horizon, opts.warmup, opts.seed);
    sim_opts.sample_interval = opts.sample_interval;
    let mut topts = TrackerOptions::new(opts.warmup, opts.horizon);
    topts.g_target = opts.g_target;
    topts.track_busy_periods = true;
    let mut tracker = RankTracker::new(&scenario.configs, opts.rule, topts);
    let report: SimReport = match extra_sink {
        Some(sink) => simulate(scenario, policy, &sim_opts, &mut [&mut tracker, sink])?,
        None => simulate(scenario, policy, &sim_opts, &mut [&mut tracker])?,
    };
    let marginals = (!report.samples.is_empty()).then(|| {
        let rows: Vec<Vec<u64>> = report.samples.iter().map(|s| s.y.clone()).collect();
        crate::stats::poisson_marginal_test(&rows)
    });
    Ok(SingleRunReport {
        policy: *policy,
        rule: opts.rule,
        r: scenario.r,
        horizon: opts.horizon,
        warmup: opts.warmup,
        seed: opts.seed,
        events: report.events,
        arrivals: report.arrivals,
        departures: report.departures,
        z: report.z,
        q: report.q,
        u: tracker.u_estimate(),
        g: tracker.g_estimate(),
        g_target: opts.g_target,
        final_z: report.final_state.z,
        final_q: report.final_state.q,
        final_u: tracker.state().u(),
        busy_periods: tracker.busy_summary(),
        marginals,
    })
}
