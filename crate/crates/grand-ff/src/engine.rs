//! Rank-oblivious CTMC engine.
//!
//! Exact event-driven simulation of the per-configuration server counts
//! `X_k(t)` under a pluggable placement policy, using direct-method event
//! selection: draw an exponential holding time at the total rate, then pick
//! the event in proportion to its rate. Departures along edge `(k, i)` fire
//! at rate `X_k * k_i * mu_i`; type-`i` arrivals at rate `lambda_i * r`.
//!
//! Every event carries an ordinal `u` in `[0,1)` that later layers use to
//! resolve "uniformly at random among eligible servers" identically, so one
//! event log can be replayed under several empty-server rules as a coupled
//! comparison.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use thiserror::Error;

use crate::model::{ConfigurationSet, Scenario};
use crate::ranks::RankError;
use crate::stats::{StatsError, SteadyStateEstimate, TimeAverager, DEFAULT_BATCHES};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("sink i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Rank(#[from] RankError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("invalid simulation options: {0}")]
    InvalidOptions(String),
    #[error("event log parse at line {line}: {message}")]
    LogParse { line: usize, message: String },
}

/// Rank-oblivious placement policy: how many virtual empty servers compete
/// with the occupied ones for an arriving customer.
pub trait Policy {
    fn virtual_empty(&self, state: &OccupancyState) -> u64;
}

/// Built-in policies, selectable from the CLI and scenario plans.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "policy", rename_all = "kebab-case")]
pub enum PolicyKind {
    /// Greedy-random with a fixed fraction: `X_0 = ceil(a * Z)`.
    GrandAz { a: f64 },
    /// Greedy-random with a state-dependent fraction: `X_0 = ceil(Z^p)`.
    GrandZp { p: f64 },
}

impl PolicyKind {
    /// Virtual-empty count as a function of the total customer count.
    pub fn x0(&self, z: u64) -> u64 {
        if z == 0 {
            return 0;
        }
        match *self {
            PolicyKind::GrandAz { a } => ceil_snap(a * z as f64),
            PolicyKind::GrandZp { p } => ceil_snap((z as f64).powf(p)),
        }
    }

    pub fn label(&self) -> String {
        match *self {
            PolicyKind::GrandAz { a } => format!("grand-az(a={a})"),
            PolicyKind::GrandZp { p } => format!("grand-zp(p={p})"),
        }
    }
}

impl Policy for PolicyKind {
    fn virtual_empty(&self, state: &OccupancyState) -> u64 {
        self.x0(state.z)
    }
}

/// Ceiling that forgives floating-point noise around exact integers, so that
/// e.g. `0.1 * 100` counts as 10 virtual servers, not 11. Values within
/// `1e-9` (relative) of an integer are treated as that integer.
fn ceil_snap(v: f64) -> u64 {
    let r = v.round();
    if (v - r).abs() <= 1e-9 * r.abs().max(1.0) {
        r as u64
    } else {
        v.ceil() as u64
    }
}

/// The CTMC state: per-configuration server counts plus derived totals.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyState {
    /// Server counts indexed by the stable nonzero-configuration order.
    pub counts: Vec<u64>,
    /// Total customers `Z = sum_i sum_k k_i X_k`.
    pub z: u64,
    /// Occupied servers `Q = sum_k X_k`.
    pub q: u64,
    /// Per-type customer totals `Y_i = sum_k k_i X_k`.
    pub y: Vec<u64>,
    /// Simulation clock.
    pub t: f64,
}

impl OccupancyState {
    pub fn empty(configs: &ConfigurationSet) -> Self {
        OccupancyState {
            counts: vec![0; configs.len()],
            z: 0,
            q: 0,
            y: vec![0; configs.dim()],
            t: 0.0,
        }
    }

    /// Occupied servers that can accept one more type-`ctype` customer.
    pub fn available_occupied(&self, configs: &ConfigurationSet, ctype: usize) -> u64 {
        configs
            .acceptors(ctype)
            .iter()
            .map(|&(k, _)| self.counts[k])
            .sum()
    }

    fn apply_arrival_empty(&mut self, configs: &ConfigurationSet, ctype: usize) {
        self.counts[configs.unit_index(ctype)] += 1;
        self.q += 1;
        self.z += 1;
        self.y[ctype] += 1;
    }

    fn apply_arrival_occupied(&mut self, configs: &ConfigurationSet, ctype: usize, target: usize) {
        let bigger = configs
            .accept_target(target, ctype)
            .expect("placement target must accept the type");
        self.counts[target] -= 1;
        self.counts[bigger] += 1;
        self.z += 1;
        self.y[ctype] += 1;
    }

    fn apply_departure(&mut self, configs: &ConfigurationSet, config: usize, ctype: usize) {
        let child = configs
            .departure_child(config, ctype)
            .expect("departure edge must exist");
        self.counts[config] -= 1;
        match child {
            Some(smaller) => self.counts[smaller] += 1,
            None => self.q -= 1,
        }
        self.z -= 1;
        self.y[ctype] -= 1;
    }
}

/// Where an arriving customer goes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PlacementDecision {
    ToEmpty { u: f64 },
    /// `target` is the configuration the chosen server held before the
    /// arrival (it becomes `target + e_i`); `u` selects one server among the
    /// `X_target` candidates in ascending rank order.
    ToOccupied { target: usize, u: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EventKind {
    Arrival {
        ctype: usize,
        decision: PlacementDecision,
    },
    /// Departure along edge `(config, ctype)`; `u` selects the server.
    Departure {
        config: usize,
        ctype: usize,
        u: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventRecord {
    pub t: f64,
    pub kind: EventKind,
}

impl EventRecord {
    /// CSV row `t,kind,i,k,u` with `k = -1` for arrivals into empty servers.
    /// Floats use the shortest exact round-trip form.
    pub fn to_csv_row(&self) -> String {
        match self.kind {
            EventKind::Arrival {
                ctype,
                decision: PlacementDecision::ToEmpty { u },
            } => format!("{},arr_empty,{},-1,{}", self.t, ctype, u),
            EventKind::Arrival {
                ctype,
                decision: PlacementDecision::ToOccupied { target, u },
            } => format!("{},arr_occ,{},{},{}", self.t, ctype, target, u),
            EventKind::Departure { config, ctype, u } => {
                format!("{},dep,{},{},{}", self.t, ctype, config, u)
            }
        }
    }

    pub fn from_csv_row(row: &str, line: usize) -> Result<Self, SimError> {
        let err = |message: &str| SimError::LogParse {
            line,
            message: message.to_string(),
        };
        let fields: Vec<&str> = row.trim().split(',').collect();
        if fields.len() != 5 {
            return Err(err("expected 5 fields"));
        }
        let t: f64 = fields[0].parse().map_err(|_| err("bad time"))?;
        let ctype: usize = fields[2].parse().map_err(|_| err("bad type"))?;
        let u: f64 = fields[4].parse().map_err(|_| err("bad ordinal"))?;
        let kind = match fields[1] {
            "arr_empty" => EventKind::Arrival {
                ctype,
                decision: PlacementDecision::ToEmpty { u },
            },
            "arr_occ" => {
                let target: usize = fields[3].parse().map_err(|_| err("bad config"))?;
                EventKind::Arrival {
                    ctype,
                    decision: PlacementDecision::ToOccupied { target, u },
                }
            }
            "dep" => {
                let config: usize = fields[3].parse().map_err(|_| err("bad config"))?;
                EventKind::Departure { config, ctype, u }
            }
            _ => return Err(err("unknown event kind")),
        };
        Ok(EventRecord { t, kind })
    }
}

/// Per-event rates of the current state.
#[derive(Debug, Clone)]
pub struct RateTable {
    /// Arrival rate per customer type: `lambda_i * r`.
    pub arrivals: Vec<f64>,
    /// Departure rate per edge, parallel to `configs.edges()`.
    pub departures: Vec<f64>,
}

impl RateTable {
    pub fn total(&self) -> f64 {
        self.arrivals.iter().sum::<f64>() + self.departures.iter().sum::<f64>()
    }
}

pub fn event_rates(state: &OccupancyState, scenario: &Scenario) -> RateTable {
    let arrivals = scenario
        .types
        .iter()
        .map(|ty| ty.lambda * scenario.r)
        .collect();
    let departures = scenario
        .configs
        .edges()
        .iter()
        .map(|e| {
            let k_i = scenario.configs.config(e.config).0[e.ctype] as f64;
            state.counts[e.config] as f64 * k_i * scenario.types[e.ctype].mu
        })
        .collect();
    RateTable {
        arrivals,
        departures,
    }
}

/// Resolve where a type-`ctype` arrival goes, given two uniform draws.
///
/// With `X_0` virtual empties and `X_(i),o` available occupied servers, the
/// customer goes to an empty server iff `u1 < X_0 / (X_0 + X_(i),o)` (or
/// unconditionally when both are zero, i.e. `Z = 0`). Otherwise `u2` picks an
/// occupied configuration by cumulative-weight inversion in stable index
/// order, and the within-configuration residual of `u2` becomes the ordinal.
pub fn placement_decision<P: Policy + ?Sized>(
    policy: &P,
    state: &OccupancyState,
    configs: &ConfigurationSet,
    ctype: usize,
    u1: f64,
    u2: f64,
) -> PlacementDecision {
    let x0 = policy.virtual_empty(state);
    let avail_occ = state.available_occupied(configs, ctype);
    let x_i = x0 + avail_occ;
    if x_i == 0 || u1 < x0 as f64 / x_i as f64 {
        return PlacementDecision::ToEmpty { u: u2 };
    }
    let w = u2 * avail_occ as f64;
    let mut cum: u64 = 0;
    let mut last = None;
    for &(k, _) in configs.acceptors(ctype) {
        let c = state.counts[k];
        if c == 0 {
            continue;
        }
        if w < (cum + c) as f64 {
            let residual = ((w - cum as f64) / c as f64).clamp(0.0, ALMOST_ONE);
            return PlacementDecision::ToOccupied {
                target: k,
                u: residual,
            };
        }
        cum += c;
        last = Some(k);
    }
    // Rounding pushed w to the very top of the range; take the last candidate.
    let target = last.expect("available_occupied > 0 implies a candidate");
    PlacementDecision::ToOccupied {
        target,
        u: ALMOST_ONE,
    }
}

const ALMOST_ONE: f64 = 1.0 - f64::EPSILON;

/// Advance the chain by one event. Draw order per event is fixed: holding
/// time, event selection, then two uniforms for an arrival (`u1`, `u2`) or
/// one ordinal for a departure.
pub fn step<P: Policy + ?Sized, R: Rng>(
    state: &mut OccupancyState,
    scenario: &Scenario,
    policy: &P,
    rng: &mut R,
) -> EventRecord {
    let rates = event_rates(state, scenario);
    let total = rates.total();
    let u_t: f64 = rng.gen();
    state.t += -(1.0 - u_t).ln() / total;
    select_and_apply(state, scenario, policy, rng, &rates)
}

/// Event selection and state update, once the clock has already advanced.
fn select_and_apply<P: Policy + ?Sized, R: Rng>(
    state: &mut OccupancyState,
    scenario: &Scenario,
    policy: &P,
    rng: &mut R,
    rates: &RateTable,
) -> EventRecord {
    let total = rates.total();
    let u_e: f64 = rng.gen();
    let mut x = u_e * total;
    let configs = &scenario.configs;
    for (i, &rate) in rates.arrivals.iter().enumerate() {
        if x < rate {
            let u1: f64 = rng.gen();
            let u2: f64 = rng.gen();
            let decision = placement_decision(policy, state, configs, i, u1, u2);
            match decision {
                PlacementDecision::ToEmpty { .. } => state.apply_arrival_empty(configs, i),
                PlacementDecision::ToOccupied { target, .. } => {
                    state.apply_arrival_occupied(configs, i, target)
                }
            }
            return EventRecord {
                t: state.t,
                kind: EventKind::Arrival { ctype: i, decision },
            };
        }
        x -= rate;
    }
    let mut chosen = None;
    for (pos, &rate) in rates.departures.iter().enumerate() {
        if rate <= 0.0 {
            continue;
        }
        chosen = Some(pos);
        if x < rate {
            break;
        }
        x -= rate;
    }
    let pos = chosen.expect("positive departure mass when arrivals not selected");
    let edge = configs.edges()[pos];
    let u: f64 = rng.gen();
    state.apply_departure(configs, edge.config, edge.ctype);
    EventRecord {
        t: state.t,
        kind: EventKind::Departure {
            config: edge.config,
            ctype: edge.ctype,
            u,
        },
    }
}

/// Consumer of the event stream (log writers, the rank layer, checkers).
pub trait EventSink {
    fn on_event(&mut self, ev: &EventRecord) -> Result<(), SimError>;
    fn finish(&mut self, _t_end: f64) -> Result<(), SimError> {
        Ok(())
    }
}

/// Collects every event in memory.
#[derive(Debug, Default)]
pub struct VecSink {
    pub events: Vec<EventRecord>,
}

impl EventSink for VecSink {
    fn on_event(&mut self, ev: &EventRecord) -> Result<(), SimError> {
        self.events.push(*ev);
        Ok(())
    }
}

/// Streams events as CSV rows, one per event.
pub struct CsvEventWriter<W: std::io::Write> {
    out: W,
}

impl<W: std::io::Write> CsvEventWriter<W> {
    pub fn new(mut out: W) -> Result<Self, SimError> {
        writeln!(out, "t,kind,i,k,u")?;
        Ok(CsvEventWriter { out })
    }
}

impl<W: std::io::Write> EventSink for CsvEventWriter<W> {
    fn on_event(&mut self, ev: &EventRecord) -> Result<(), SimError> {
        writeln!(self.out, "{}", ev.to_csv_row())?;
        Ok(())
    }

    fn finish(&mut self, _t_end: f64) -> Result<(), SimError> {
        self.out.flush()?;
        Ok(())
    }
}

/// Read an event log written by [`CsvEventWriter`].
pub fn read_event_log<R: std::io::BufRead>(reader: R) -> Result<Vec<EventRecord>, SimError> {
    let mut events = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if idx == 0 && line.starts_with("t,") {
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        events.push(EventRecord::from_csv_row(&line, idx + 1)?);
    }
    Ok(events)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialState {
    Empty,
    /// Draw `Y_i ~ Poisson(rho_i r)` customers and pack them greedily before
    /// the clock starts. Faster mixing; changes the warmup transient only.
    PoissonPacked,
}

#[derive(Debug, Clone)]
pub struct SimOptions {
    pub horizon: f64,
    pub warmup: f64,
    pub seed: u64,
    pub batches: usize,
    pub initial: InitialState,
    /// When set, record `(t, Y, Z, Q)` at `warmup + j * interval`.
    pub sample_interval: Option<f64>,
}

impl SimOptions {
    pub fn new(horizon: f64, warmup: f64, seed: u64) -> Self {
        SimOptions {
            horizon,
            warmup,
            seed,
            batches: DEFAULT_BATCHES,
            initial: InitialState::Empty,
            sample_interval: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct StateSample {
    pub t: f64,
    pub y: Vec<u64>,
    pub z: u64,
    pub q: u64,
}

#[derive(Debug)]
pub struct SimReport {
    /// Time-averaged total customers over the post-warmup window.
    pub z: Option<SteadyStateEstimate>,
    /// Time-averaged occupied servers over the post-warmup window.
    pub q: Option<SteadyStateEstimate>,
    pub arrivals: u64,
    pub departures: u64,
    pub events: u64,
    pub final_state: OccupancyState,
    pub samples: Vec<StateSample>,
}

/// Run one replication to the horizon, streaming events into `sinks`.
///
/// Identical seed, scenario, and options give a bit-identical event stream
/// within one build.
pub fn simulate<P: Policy + ?Sized>(
    scenario: &Scenario,
    policy: &P,
    opts: &SimOptions,
    sinks: &mut [&mut dyn EventSink],
) -> Result<SimReport, SimError> {
    if opts.horizon < 0.0 {
        return Err(SimError::InvalidOptions(format!(
            "horizon must be nonnegative, got {}",
            opts.horizon
        )));
    }
    let configs = &scenario.configs;
    let mut rng = ChaCha12Rng::seed_from_u64(opts.seed);
    let mut state = OccupancyState::empty(configs);
    if opts.initial == InitialState::PoissonPacked {
        pack_poisson_initial(&mut state, scenario, &mut rng);
    }

    let window_ok = opts.horizon > opts.warmup;
    let mut z_avg = window_ok
        .then(|| TimeAverager::new(opts.warmup, opts.horizon, opts.batches))
        .transpose()?;
    let mut q_avg = window_ok
        .then(|| TimeAverager::new(opts.warmup, opts.horizon, opts.batches))
        .transpose()?;
    if let Some(avg) = z_avg.as_mut() {
        avg.observe(0.0, state.z as f64);
    }
    if let Some(avg) = q_avg.as_mut() {
        avg.observe(0.0, state.q as f64);
    }

    let mut samples = Vec::new();
    let mut next_sample = opts.sample_interval.map(|dt| opts.warmup + dt);

    let mut arrivals = 0u64;
    let mut departures = 0u64;
    let mut events = 0u64;

    loop {
        let rates = event_rates(&state, scenario);
        let total = rates.total();
        if total <= 0.0 {
            break;
        }
        let u_t: f64 = rng.gen();
        let t_next = state.t + -(1.0 - u_t).ln() / total;
        if t_next >= opts.horizon {
            break;
        }
        // Flush scheduled samples that fall strictly before this event.
        if let (Some(dt), Some(ns)) = (opts.sample_interval, next_sample.as_mut()) {
            while *ns < t_next && *ns <= opts.horizon {
                samples.push(StateSample {
                    t: *ns,
                    y: state.y.clone(),
                    z: state.z,
                    q: state.q,
                });
                *ns += dt;
            }
        }
        state.t = t_next;
        let record = select_and_apply(&mut state, scenario, policy, &mut rng, &rates);
        events += 1;
        match record.kind {
            EventKind::Arrival { .. } => arrivals += 1,
            EventKind::Departure { .. } => departures += 1,
        }
        if let Some(avg) = z_avg.as_mut() {
            avg.observe(state.t, state.z as f64);
        }
        if let Some(avg) = q_avg.as_mut() {
            avg.observe(state.t, state.q as f64);
        }
        for sink in sinks.iter_mut() {
            sink.on_event(&record)?;
        }
    }

    if let (Some(dt), Some(ns)) = (opts.sample_interval, next_sample.as_mut()) {
        while *ns <= opts.horizon {
            samples.push(StateSample {
                t: *ns,
                y: state.y.clone(),
                z: state.z,
                q: state.q,
            });
            *ns += dt;
        }
    }
    if let Some(avg) = z_avg.as_mut() {
        avg.finish(opts.horizon);
    }
    if let Some(avg) = q_avg.as_mut() {
        avg.finish(opts.horizon);
    }
    for sink in sinks.iter_mut() {
        sink.finish(opts.horizon)?;
    }

    state.t = opts.horizon;
    Ok(SimReport {
        z: z_avg.as_ref().and_then(|a| a.estimate().ok()),
        q: q_avg.as_ref().and_then(|a| a.estimate().ok()),
        arrivals,
        departures,
        events,
        final_state: state,
        samples,
    })
}

/// Draw `Y_i ~ Poisson(rho_i r)` by exponential spacings and pack greedily:
/// each customer joins the first occupied configuration (stable order) that
/// accepts its type, otherwise opens a fresh server.
fn pack_poisson_initial<R: Rng>(state: &mut OccupancyState, scenario: &Scenario, rng: &mut R) {
    let configs = &scenario.configs;
    for (i, ty) in scenario.types.iter().enumerate() {
        let mean = ty.rho() * scenario.r;
        let mut acc = 0.0;
        let mut count = 0u64;
        loop {
            let u: f64 = rng.gen();
            acc -= (1.0 - u).ln() / mean;
            if acc > 1.0 {
                break;
            }
            count += 1;
        }
        for _ in 0..count {
            let slot = configs
                .acceptors(i)
                .iter()
                .find(|&&(k, _)| state.counts[k] > 0)
                .copied();
            match slot {
                Some((k, _)) => state.apply_arrival_occupied(configs, i, k),
                None => state.apply_arrival_empty(configs, i),
            }
        }
    }
}
