//! The threshold-constrained priority mechanism.
//!
//! Agents act in priority order. Each one takes the best strictly ranked
//! location that still has a seat and still admits a completion whose mean
//! outcome reaches the threshold; an agent with no such location is put on
//! hold. Held agents are seated last by outcome maximization over the
//! leftover capacity.

use crate::error::{Error, Result};
use crate::lsap::{self, PartialProblem, Pool};
use crate::model::{meets_threshold, Instance, Matching, EPS_TOL};

/// How probe values are computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ProbeMode {
    /// One shortest-path pass per step prices every candidate location
    /// against an optimal pool maintained across steps.
    #[default]
    Incremental,
    /// Every probe solves its completion problem from scratch.
    Resolve,
}

/// Deliberate corruptions of the probe formula, used by mutation checks.
/// Any fault forces [`ProbeMode::Resolve`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProbeFault {
    /// Leave held agents out of the completion problem.
    OmitHeldAgents,
    /// Subtract the acting agent's score instead of adding it.
    SignFlip,
}

#[derive(Debug, Clone)]
pub struct MechanismParams {
    pub g_bar: f64,
    /// Priority order: `order[0]` acts first.
    pub order: Vec<usize>,
    /// Absolute slack on total-score comparisons.
    pub tolerance: f64,
    pub probe_mode: ProbeMode,
    pub fault: Option<ProbeFault>,
}

impl MechanismParams {
    pub fn new(g_bar: f64, order: Vec<usize>) -> Self {
        Self {
            g_bar,
            order,
            tolerance: EPS_TOL,
            probe_mode: ProbeMode::default(),
            fault: None,
        }
    }

    pub fn identity(g_bar: f64, n: usize) -> Self {
        Self::new(g_bar, (0..n).collect())
    }

    pub fn with_probe_mode(mut self, mode: ProbeMode) -> Self {
        self.probe_mode = mode;
        self
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self
    }

    pub fn with_fault(mut self, fault: ProbeFault) -> Self {
        self.fault = Some(fault);
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Probe {
    pub location: usize,
    /// Best achievable mean outcome with the agent placed here.
    pub value: f64,
    /// Best achievable total minus `n * g_bar`.
    pub margin: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepAction {
    Assigned(usize),
    Held,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    /// 1-based step number.
    pub step: usize,
    pub agent: usize,
    pub probes: Vec<Probe>,
    pub action: StepAction,
    /// Residual capacities after this step.
    pub residual: Vec<u32>,
    /// Number of completion problems solved during this step.
    pub solves: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MechanismTrace {
    pub n: usize,
    pub g_bar: f64,
    pub g_max: f64,
    pub tolerance: f64,
    pub initial_capacities: Vec<u32>,
    pub steps: Vec<StepRecord>,
    /// Seats given to held agents at the final step, by agent.
    pub final_assignments: Vec<(usize, usize)>,
}

/// State at the start of a step: what has been decided so far.
#[derive(Debug, Clone, PartialEq)]
pub struct StepSnapshot {
    pub assigned: Vec<Option<usize>>,
    pub held: Vec<usize>,
    /// Agents not yet processed, the acting one included, in priority order.
    pub pending: Vec<usize>,
    pub residual: Vec<u32>,
}

impl MechanismTrace {
    /// Number of probe values evaluated across all steps.
    pub fn probe_count(&self) -> usize {
        self.steps.iter().map(|s| s.probes.len()).sum()
    }

    /// Completion problems solved after the initial feasibility check,
    /// the final held-agent solve included.
    pub fn lsap_solves(&self) -> usize {
        self.steps.iter().map(|s| s.solves).sum::<usize>() + usize::from(!self.final_assignments.is_empty())
    }

    /// Probes made by agents that ended up on hold, i.e. solves of the
    /// full-size completion problem.
    pub fn held_probe_count(&self) -> usize {
        self.steps
            .iter()
            .filter(|s| s.action == StepAction::Held)
            .map(|s| s.probes.len())
            .sum()
    }

    pub fn held_agents(&self) -> Vec<usize> {
        self.steps
            .iter()
            .filter(|s| s.action == StepAction::Held)
            .map(|s| s.agent)
            .collect()
    }

    /// Probes whose margin sits within ten tolerances of the threshold.
    pub fn near_threshold(&self) -> impl Iterator<Item = (&StepRecord, &Probe)> {
        let band = 10.0 * self.tolerance;
        self.steps
            .iter()
            .flat_map(move |s| s.probes.iter().filter(move |p| p.margin.abs() <= band).map(move |p| (s, p)))
    }

    /// Decisions in force when step `step` (1-based) begins.
    pub fn snapshot_before(&self, step: usize) -> StepSnapshot {
        let mut assigned = vec![None; self.n];
        let mut held = Vec::new();
        let mut residual = self.initial_capacities.clone();
        for rec in self.steps.iter().take(step.saturating_sub(1)) {
            match rec.action {
                StepAction::Assigned(l) => assigned[rec.agent] = Some(l),
                StepAction::Held => held.push(rec.agent),
            }
            residual.clone_from(&rec.residual);
        }
        let pending = self.steps.iter().skip(step.saturating_sub(1)).map(|s| s.agent).collect();
        StepSnapshot {
            assigned,
            held,
            pending,
            residual,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MechanismOutcome {
    pub matching: Matching,
    pub trace: MechanismTrace,
    pub realized_mean: f64,
}

fn validate_order(order: &[usize], n: usize) -> Result<()> {
    if order.len() != n {
        return Err(Error::InvalidInstance(format!(
            "priority order has {} entries for {n} agents",
            order.len()
        )));
    }
    let mut seen = vec![false; n];
    for &a in order {
        if a >= n || std::mem::replace(&mut seen[a], true) {
            return Err(Error::InvalidInstance(format!(
                "priority order is not a permutation of 0..{n} (entry {a})"
            )));
        }
    }
    Ok(())
}

/// Runs the mechanism; fails with [`Error::ThresholdInfeasible`] when the
/// threshold exceeds the best achievable mean.
pub fn run_mechanism(inst: &Instance, params: &MechanismParams) -> Result<MechanismOutcome> {
    MechanismRunner::new(inst)?.run(params)
}

/// Runs the mechanism repeatedly on one instance, sharing the initial
/// outcome-maximizing solve across runs.
#[derive(Debug, Clone)]
pub struct MechanismRunner<'a> {
    inst: &'a Instance,
    pool: Pool<'a>,
    g_total_max: f64,
}

impl<'a> MechanismRunner<'a> {
    pub fn new(inst: &'a Instance) -> Result<Self> {
        let all: Vec<usize> = (0..inst.n()).collect();
        let pool = Pool::new(inst.outcomes(), inst.capacities().to_vec(), &all)?;
        let g_total_max = pool.total();
        Ok(Self {
            inst,
            pool,
            g_total_max,
        })
    }

    pub fn instance(&self) -> &'a Instance {
        self.inst
    }

    pub fn g_max(&self) -> f64 {
        match self.inst.n() {
            0 => 0.0,
            n => self.g_total_max / n as f64,
        }
    }

    pub fn run(&self, params: &MechanismParams) -> Result<MechanismOutcome> {
        run_prepared(self, params)
    }
}

fn run_prepared(runner: &MechanismRunner<'_>, params: &MechanismParams) -> Result<MechanismOutcome> {
    let inst = runner.inst;
    let n = inst.n();
    validate_order(&params.order, n)?;
    if !params.g_bar.is_finite() {
        return Err(Error::InvalidInstance(format!("threshold {} is not finite", params.g_bar)));
    }
    let mode = if params.fault.is_some() {
        ProbeMode::Resolve
    } else {
        params.probe_mode
    };
    let scores = inst.outcomes();
    let mut pool = match mode {
        ProbeMode::Incremental => Some(runner.pool.clone()),
        ProbeMode::Resolve => None,
    };
    let g_total_max = runner.g_total_max;
    let g_max = runner.g_max();
    let tol = params.tolerance;
    if !meets_threshold(g_total_max, n, params.g_bar, tol) {
        return Err(Error::ThresholdInfeasible {
            g_bar: params.g_bar,
            g_max,
        });
    }
    let target = n as f64 * params.g_bar;

    let mut residual = inst.capacities().to_vec();
    let mut assignment: Vec<Option<usize>> = vec![None; n];
    let mut assigned_sum = 0.0;
    let mut held: Vec<usize> = Vec::new();
    let mut steps = Vec::with_capacity(n);

    for (pos, &agent) in params.order.iter().enumerate() {
        let prefs = &inst.preferences()[agent];
        let candidates: Vec<usize> = prefs
            .strict_prefix()
            .iter()
            .copied()
            .filter(|&l| residual[l] > 0)
            .collect();
        let mut probes = Vec::new();
        let mut solves = 0;
        let mut chosen = None;

        match pool.as_mut() {
            Some(pool) if !candidates.is_empty() => {
                let completion = pool.total() + assigned_sum;
                let losses = if pool.seat(agent) == candidates[0] {
                    None
                } else {
                    solves += 1;
                    Some(pool.relocation_losses(agent))
                };
                for &l in &candidates {
                    let total = match &losses {
                        None => completion,
                        Some(losses) => completion - losses[l],
                    };
                    let pass = total.is_finite() && meets_threshold(total, n, params.g_bar, tol);
                    probes.push(Probe {
                        location: l,
                        value: total / n as f64,
                        margin: total - target,
                        pass,
                    });
                    if pass {
                        chosen = Some(l);
                        break;
                    }
                }
                if let Some(l) = chosen {
                    if losses.is_some() {
                        pool.relocate(agent, l);
                    }
                    pool.retire(agent);
                }
            }
            Some(_) => {}
            None => {
                let mut rest: Vec<usize> = params.order[pos + 1..].to_vec();
                if params.fault != Some(ProbeFault::OmitHeldAgents) {
                    rest.extend_from_slice(&held);
                }
                for &l in &candidates {
                    let mut caps = residual.clone();
                    caps[l] -= 1;
                    let completion = lsap::solve_max_assignment(&PartialProblem {
                        agents: rest.clone(),
                        capacities: caps,
                        scores,
                    });
                    solves += 1;
                    let own = match params.fault {
                        Some(ProbeFault::SignFlip) => -scores.get(agent, l),
                        _ => scores.get(agent, l),
                    };
                    let total = match completion {
                        Ok(c) => c.total + own + assigned_sum,
                        Err(Error::Infeasible { .. }) => f64::NEG_INFINITY,
                        Err(e) => return Err(e),
                    };
                    let pass = meets_threshold(total, n, params.g_bar, tol);
                    probes.push(Probe {
                        location: l,
                        value: total / n as f64,
                        margin: total - target,
                        pass,
                    });
                    if pass {
                        chosen = Some(l);
                        break;
                    }
                }
            }
        }

        let action = match chosen {
            Some(l) => {
                residual[l] -= 1;
                assignment[agent] = Some(l);
                assigned_sum += scores.get(agent, l);
                StepAction::Assigned(l)
            }
            None => {
                held.push(agent);
                StepAction::Held
            }
        };
        debug_assert!(pool.as_ref().is_none_or(|p| p.residual() == residual.as_slice()));
        steps.push(StepRecord {
            step: pos + 1,
            agent,
            probes,
            action,
            residual: residual.clone(),
            solves,
        });
    }

    let mut final_assignments = Vec::new();
    if !held.is_empty() {
        let res = lsap::solve_max_assignment(&PartialProblem {
            agents: held.clone(),
            capacities: residual.clone(),
            scores,
        })?;
        for &(a, l) in &res.assignment {
            assignment[a] = Some(l);
        }
        final_assignments = res.assignment;
    }

    let matching = Matching::new(
        assignment
            .into_iter()
            .map(|l| l.expect("every agent is seated by the final step"))
            .collect(),
    );
    let realized_mean = if n == 0 {
        0.0
    } else {
        matching.total_score(scores) / n as f64
    };
    Ok(MechanismOutcome {
        matching,
        realized_mean,
        trace: MechanismTrace {
            n,
            g_bar: params.g_bar,
            g_max,
            tolerance: tol,
            initial_capacities: inst.capacities().to_vec(),
            steps,
            final_assignments,
        },
    })
}

/// Locations `agent` could take at the snapshot: a free seat and a
/// completion of every other undecided agent reaching the threshold.
/// Covers strictly ranked and unlisted locations alike.
pub fn feasible_locations(snapshot: &StepSnapshot, agent: usize, inst: &Instance, g_bar: f64) -> Result<Vec<usize>> {
    let n = inst.n();
    let scores = inst.outcomes();
    let assigned_sum: f64 = snapshot
        .assigned
        .iter()
        .enumerate()
        .filter_map(|(j, l)| l.map(|l| scores.get(j, l)))
        .sum();
    let mut rest: Vec<usize> = snapshot.pending.iter().copied().filter(|&j| j != agent).collect();
    rest.extend_from_slice(&snapshot.held);
    let mut out = Vec::new();
    for l in 0..inst.num_locations() {
        if snapshot.residual[l] == 0 {
            continue;
        }
        let mut caps = snapshot.residual.clone();
        caps[l] -= 1;
        let completion = match lsap::solve_max_assignment(&PartialProblem {
            agents: rest.clone(),
            capacities: caps,
            scores,
        }) {
            Ok(c) => c.total,
            Err(Error::Infeasible { .. }) => continue,
            Err(e) => return Err(e),
        };
        if meets_threshold(completion + scores.get(agent, l) + assigned_sum, n, g_bar, EPS_TOL) {
            out.push(l);
        }
    }
    Ok(out)
}
