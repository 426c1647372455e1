//! Brute-force reference checks for small markets.
//!
//! Everything here enumerates: feasible matchings, admissible preference
//! reports, priority orders. Sizes are bounded by [`EnumerationBudget`].

use std::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::fixtures::{self, TTC_G_BAR, TWO_AGENT_G_BAR};
use crate::lsap::{self, PartialProblem};
use crate::mechanism::{run_mechanism, MechanismOutcome, MechanismParams, ProbeFault};
use crate::model::{
    is_feasible, is_g_acceptable, meets_threshold, pareto_dominates, AgentPreference, Instance, Matching,
    OutcomeMatrix, PreferenceProfile, EPS_TOL,
};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EnumerationBudget {
    pub max_agents: usize,
    pub max_locations: usize,
    pub max_total_slots: u64,
    /// Cap on the number of feasible matchings visited.
    pub max_matchings: u128,
    /// Largest location count for which every admissible report is tried.
    pub max_report_locations: usize,
}

impl Default for EnumerationBudget {
    fn default() -> Self {
        Self {
            max_agents: 10,
            max_locations: 8,
            max_total_slots: 24,
            max_matchings: 10_000_000,
            max_report_locations: 4,
        }
    }
}

impl EnumerationBudget {
    fn admit(&self, inst: &Instance) -> Result<()> {
        let slots: u64 = inst.capacities().iter().map(|&c| c as u64).sum();
        if inst.n() > self.max_agents || inst.num_locations() > self.max_locations || slots > self.max_total_slots {
            return Err(Error::BudgetExceeded(format!(
                "{} agents, {} locations, {} slots (limits {}, {}, {})",
                inst.n(),
                inst.num_locations(),
                slots,
                self.max_agents,
                self.max_locations,
                self.max_total_slots
            )));
        }
        let count = count_feasible_matchings(inst.capacities(), inst.n());
        if count > self.max_matchings {
            return Err(Error::BudgetExceeded(format!(
                "{count} feasible matchings exceed the cap of {}",
                self.max_matchings
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Verdict<W> {
    Pass,
    Fail(W),
}

impl<W> Verdict<W> {
    pub fn is_pass(&self) -> bool {
        matches!(self, Verdict::Pass)
    }

    pub fn witness(&self) -> Option<&W> {
        match self {
            Verdict::Pass => None,
            Verdict::Fail(w) => Some(w),
        }
    }
}

/// Number of ways to seat `n` labelled agents under `capacities`.
pub fn count_feasible_matchings(capacities: &[u32], n: usize) -> u128 {
    // ways[k] = ways to seat k labelled agents in the locations seen so far
    let mut binom = vec![vec![0u128; n + 1]; n + 1];
    for i in 0..=n {
        binom[i][0] = 1;
        for j in 1..=i {
            binom[i][j] = binom[i - 1][j - 1].saturating_add(binom[i - 1][j]);
        }
    }
    let mut ways = vec![0u128; n + 1];
    ways[0] = 1;
    for &cap in capacities {
        let mut next = vec![0u128; n + 1];
        for (k, slot) in next.iter_mut().enumerate() {
            for t in 0..=k.min(cap as usize) {
                *slot = slot.saturating_add(binom[k][t].saturating_mul(ways[k - t]));
            }
        }
        ways = next;
    }
    ways[n]
}

/// Lexicographic walk over every feasible matching.
pub struct FeasibleMatchings {
    caps: Vec<u32>,
    load: Vec<u32>,
    current: Vec<usize>,
    started: bool,
    done: bool,
}

impl FeasibleMatchings {
    fn new(caps: Vec<u32>, n: usize) -> Self {
        let slots: u64 = caps.iter().map(|&c| c as u64).sum();
        Self {
            load: vec![0; caps.len()],
            current: Vec::with_capacity(n),
            done: (n as u64) > slots,
            caps,
            started: false,
        }
        .with_len(n)
    }

    fn with_len(mut self, n: usize) -> Self {
        self.current = vec![usize::MAX; n];
        self
    }

    /// Seats agents `from..` at their smallest free locations.
    fn fill(&mut self, from: usize) {
        for pos in from..self.current.len() {
            let l = (0..self.caps.len())
                .find(|&l| self.load[l] < self.caps[l])
                .expect("total capacity covers every agent");
            self.current[pos] = l;
            self.load[l] += 1;
        }
    }
}

impl Iterator for FeasibleMatchings {
    type Item = Matching;

    fn next(&mut self) -> Option<Matching> {
        if self.done {
            return None;
        }
        if !self.started {
            self.started = true;
            self.fill(0);
            return Some(Matching::new(self.current.clone()));
        }
        for pos in (0..self.current.len()).rev() {
            let cur = self.current[pos];
            self.load[cur] -= 1;
            if let Some(l) = (cur + 1..self.caps.len()).find(|&l| self.load[l] < self.caps[l]) {
                self.current[pos] = l;
                self.load[l] += 1;
                self.fill(pos + 1);
                return Some(Matching::new(self.current.clone()));
            }
        }
        self.done = true;
        None
    }
}

pub fn enumerate_feasible_matchings(inst: &Instance, budget: &EnumerationBudget) -> Result<FeasibleMatchings> {
    budget.admit(inst)?;
    Ok(FeasibleMatchings::new(inst.capacities().to_vec(), inst.n()))
}

/// Pass when no feasible `g_bar`-acceptable matching Pareto-dominates `m`.
pub fn check_constrained_efficiency(
    inst: &Instance,
    g_bar: f64,
    m: &Matching,
    budget: &EnumerationBudget,
) -> Result<Verdict<Matching>> {
    for other in enumerate_feasible_matchings(inst, budget)? {
        if pareto_dominates(&other, m, inst.preferences()) && is_g_acceptable(&other, inst, g_bar) {
            return Ok(Verdict::Fail(other));
        }
    }
    Ok(Verdict::Pass)
}

/// All reports satisfying the trailing-indifference restriction: strict
/// orderings of every subset whose size is not `num_locations - 1`.
pub fn admissible_reports(num_locations: usize) -> Vec<AgentPreference> {
    fn extend(prefix: &mut Vec<usize>, used: &mut [bool], len: usize, out: &mut Vec<Vec<usize>>) {
        if prefix.len() == len {
            out.push(prefix.clone());
            return;
        }
        for l in 0..used.len() {
            if !used[l] {
                used[l] = true;
                prefix.push(l);
                extend(prefix, used, len, out);
                prefix.pop();
                used[l] = false;
            }
        }
    }
    let mut raw = Vec::new();
    for len in 0..=num_locations {
        if len + 1 == num_locations {
            continue;
        }
        extend(&mut Vec::new(), &mut vec![false; num_locations], len, &mut raw);
    }
    raw.into_iter()
        .map(|p| AgentPreference::new(p, num_locations).expect("enumerated prefixes are valid"))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manipulation {
    pub agent: usize,
    pub report: AgentPreference,
    pub truthful: usize,
    pub manipulated: usize,
}

impl fmt::Display for Manipulation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "agent {} reporting {:?} moves from location {} to {}",
            self.agent,
            self.report.strict_prefix(),
            self.truthful,
            self.manipulated
        )
    }
}

/// Strategy-proofness of the priority mechanism at a fixed order.
pub fn check_strategy_proofness(
    inst: &Instance,
    g_bar: f64,
    order: &[usize],
    budget: &EnumerationBudget,
) -> Result<Verdict<Manipulation>> {
    let params = MechanismParams::new(g_bar, order.to_vec());
    check_strategy_proofness_with(inst, budget, |i| Ok(run_mechanism(i, &params)?.matching))
}

/// Tries every admissible report for every agent against an arbitrary
/// direct mechanism and returns the first profitable deviation.
pub fn check_strategy_proofness_with<F>(
    inst: &Instance,
    budget: &EnumerationBudget,
    mechanism: F,
) -> Result<Verdict<Manipulation>>
where
    F: Fn(&Instance) -> Result<Matching>,
{
    if inst.num_locations() > budget.max_report_locations || inst.n() > budget.max_agents {
        return Err(Error::BudgetExceeded(format!(
            "report enumeration over {} locations (limit {})",
            inst.num_locations(),
            budget.max_report_locations
        )));
    }
    let truthful = mechanism(inst)?;
    let reports = admissible_reports(inst.num_locations());
    for agent in 0..inst.n() {
        let truth = &inst.preferences()[agent];
        let have = truthful.location_of(agent);
        for report in &reports {
            if report == truth {
                continue;
            }
            let lie = inst.with_preferences(inst.preferences().with_agent(agent, report.clone()))?;
            let got = mechanism(&lie)?.location_of(agent);
            if truth.strictly_prefers(got, have) {
                return Ok(Verdict::Fail(Manipulation {
                    agent,
                    report: report.clone(),
                    truthful: have,
                    manipulated: got,
                }));
            }
        }
    }
    Ok(Verdict::Pass)
}

/// Outcome-maximizing endowment followed by top trading cycles that stop
/// as soon as a cycle would push the mean below `g_bar`.
///
/// Each remaining agent points at the holder of its favourite location
/// among those still held (itself when its own seat is in its top class).
/// One cycle is executed per round, the one containing the lowest agent
/// index; its members leave with their new seats.
pub fn run_constrained_ttc(inst: &Instance, g_bar: f64) -> Result<Matching> {
    let n = inst.n();
    let scores = inst.outcomes();
    let endowment = lsap::solve_max_assignment(&PartialProblem::full(inst))?;
    if !meets_threshold(endowment.total, n, g_bar, EPS_TOL) {
        return Err(Error::ThresholdInfeasible {
            g_bar,
            g_max: endowment.total / n.max(1) as f64,
        });
    }
    let mut holding: Vec<usize> = endowment.assignment.iter().map(|&(_, l)| l).collect();
    let mut total: f64 = endowment.total;
    let mut active = vec![true; n];
    let mut remaining = n;
    while remaining > 0 {
        let pointer: Vec<usize> = (0..n)
            .map(|i| {
                if !active[i] {
                    return usize::MAX;
                }
                let pref = &inst.preferences()[i];
                let mut best = i;
                for j in (0..n).filter(|&j| active[j]) {
                    if pref.strictly_prefers(holding[j], holding[best]) {
                        best = j;
                    }
                }
                best
            })
            .collect();
        let cycle = (0..n)
            .filter(|&i| active[i])
            .find_map(|start| {
                let mut seen = vec![false; n];
                let mut cur = start;
                while !seen[cur] {
                    seen[cur] = true;
                    cur = pointer[cur];
                }
                // `cur` lies on the cycle reached from `start`
                let mut members = vec![cur];
                let mut x = pointer[cur];
                while x != cur {
                    members.push(x);
                    x = pointer[x];
                }
                members.contains(&start).then_some(members)
            })
            .expect("a functional graph always has a cycle");
        let new_total = total
            + cycle
                .iter()
                .map(|&i| scores.get(i, holding[pointer[i]]) - scores.get(i, holding[i]))
                .sum::<f64>();
        if cycle.len() > 1 && !meets_threshold(new_total, n, g_bar, EPS_TOL) {
            break;
        }
        let seats: Vec<usize> = cycle.iter().map(|&i| holding[pointer[i]]).collect();
        for (&i, &l) in cycle.iter().zip(&seats) {
            holding[i] = l;
            active[i] = false;
        }
        remaining -= cycle.len();
        total = new_total;
    }
    Ok(Matching::new(holding))
}

/// Every permutation of `0..n` in lexicographic order.
pub fn all_orders(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (0..n).collect();
    loop {
        out.push(cur.clone());
        let Some(i) = (0..n.saturating_sub(1)).rev().find(|&i| cur[i] < cur[i + 1]) else {
            break;
        };
        let j = (i + 1..n).rev().find(|&j| cur[j] > cur[i]).unwrap();
        cur.swap(i, j);
        cur[i + 1..].reverse();
    }
    out
}

/// Hard guarantees every mechanism run must satisfy: feasibility,
/// acceptability, and at most `n (|L| - 2)` probes by held agents.
pub fn check_run_invariants(inst: &Instance, g_bar: f64, out: &MechanismOutcome) -> std::result::Result<(), String> {
    if !is_feasible(&out.matching, inst) {
        return Err(format!("infeasible output {:?}", out.matching));
    }
    if !is_g_acceptable(&out.matching, inst, g_bar) {
        return Err(format!("mean {} below threshold {g_bar}", out.realized_mean));
    }
    let bound = probe_bound(inst.n(), inst.num_locations());
    let held = out.trace.held_probe_count() as i64 + 1;
    if held > bound {
        return Err(format!("{held} full-size solves exceed bound {bound}"));
    }
    Ok(())
}

/// `n (|L| - 2) + 1`.
pub fn probe_bound(n: usize, num_locations: usize) -> i64 {
    n as i64 * (num_locations as i64 - 2) + 1
}

/// Whether every probe plus the final solve fits in [`probe_bound`].
/// Not guaranteed: agents ranking every location may probe more.
pub fn literal_probe_bound_holds(inst: &Instance, out: &MechanismOutcome) -> bool {
    out.trace.probe_count() as i64 + 1 <= probe_bound(inst.n(), inst.num_locations())
}

#[derive(Debug, Clone)]
pub struct RandomInstanceSpec {
    pub max_agents: usize,
    pub max_locations: usize,
    pub max_capacity: u32,
    /// Scores are drawn from `{0, step, 2 step, ..., 1}`.
    pub score_step: f64,
}

impl Default for RandomInstanceSpec {
    fn default() -> Self {
        Self {
            max_agents: 4,
            max_locations: 4,
            max_capacity: 2,
            score_step: 0.05,
        }
    }
}

/// Small random market: `n` in `2..=max_agents`, `|L|` in
/// `2..=max_locations`, capacities in `1..=max_capacity` with enough seats,
/// grid scores, and uniformly chosen admissible preferences.
pub fn random_small_instance<R: Rng>(rng: &mut R, spec: &RandomInstanceSpec) -> Instance {
    let n = rng.gen_range(2..=spec.max_agents.max(2));
    let m = rng.gen_range(2..=spec.max_locations.max(2));
    let mut caps: Vec<u32> = (0..m).map(|_| rng.gen_range(1..=spec.max_capacity.max(1))).collect();
    while caps.iter().sum::<u32>() < n as u32 {
        let l = rng.gen_range(0..m);
        caps[l] += 1;
    }
    let steps = (1.0 / spec.score_step).round() as u32;
    let data: Vec<f64> = (0..n * m)
        .map(|_| rng.gen_range(0..=steps) as f64 * spec.score_step)
        .collect();
    let reports = admissible_reports(m);
    let prefs = (0..n).map(|_| reports.choose(rng).unwrap().clone()).collect();
    Instance::new(
        (0..m).map(|l| format!("L{l}")).collect(),
        caps,
        OutcomeMatrix::new(n, m, data).expect("grid scores are valid"),
        PreferenceProfile::new(prefs),
    )
    .expect("generated instance is valid")
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteItem {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SuiteReport {
    pub items: Vec<SuiteItem>,
}

impl SuiteReport {
    pub fn all_pass(&self) -> bool {
        self.items.iter().all(|i| i.pass)
    }

    pub fn item(&self, name: &str) -> Option<&SuiteItem> {
        self.items.iter().find(|i| i.name == name)
    }

    fn push(&mut self, name: &'static str, outcome: std::result::Result<String, String>) {
        let (pass, detail) = match outcome {
            Ok(d) => (true, d),
            Err(d) => (false, d),
        };
        self.items.push(SuiteItem { name, pass, detail });
    }
}

/// Knobs for mutation checks of the worked-example suite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuiteOptions {
    pub tolerance: f64,
    pub fault: Option<ProbeFault>,
    /// Seeded random markets used by the efficiency item.
    pub efficiency_instances: usize,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self {
            tolerance: EPS_TOL,
            fault: None,
            efficiency_instances: 40,
        }
    }
}

/// The two-agent worked example in both orders, the non-characterization
/// check, efficiency on fixtures and seeded small markets, and the
/// manipulability of threshold-stopped TTC.
pub fn verify_mechanism_example_suite(opts: &SuiteOptions) -> SuiteReport {
    let budget = EnumerationBudget::default();
    let params = |g_bar: f64, order: Vec<usize>| {
        let mut p = MechanismParams::new(g_bar, order).with_tolerance(opts.tolerance);
        p.fault = opts.fault;
        p
    };
    let mut report = SuiteReport::default();
    let two = fixtures::two_agent_example();

    for (name, order, expected) in [
        ("two_agent_order_1_2", vec![0, 1], [0usize, 1]),
        ("two_agent_order_2_1", vec![1, 0], [2, 0]),
    ] {
        let outcome = run_mechanism(&two, &params(TWO_AGENT_G_BAR, order))
            .map_err(|e| e.to_string())
            .and_then(|out| {
                if out.matching.as_slice() != expected {
                    Err(format!("got {:?}, expected {expected:?}", out.matching.as_slice()))
                } else if !is_g_acceptable(&out.matching, &two, TWO_AGENT_G_BAR) {
                    Err(format!("mean {} below threshold", out.realized_mean))
                } else {
                    Ok(format!("{:?}", out.matching.as_slice()))
                }
            });
        report.push(name, outcome);
    }

    report.push("non_characterization", non_characterization(&two, &budget, &params));

    let eff = (|| -> std::result::Result<String, String> {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        let mut markets = vec![(two.clone(), TWO_AGENT_G_BAR)];
        for _ in 0..opts.efficiency_instances {
            let inst = random_small_instance(&mut rng, &RandomInstanceSpec::default());
            let g_max = lsap::solve_max_matching_value(&inst).map_err(|e| e.to_string())?;
            let g = rng.gen_range(0.0..=1.0) * g_max;
            markets.push((inst, g));
        }
        let mut runs = 0;
        for (inst, g) in &markets {
            for order in all_orders(inst.n()) {
                let out = run_mechanism(inst, &params(*g, order.clone())).map_err(|e| e.to_string())?;
                if !is_feasible(&out.matching, inst) || !is_g_acceptable(&out.matching, inst, *g) {
                    return Err(format!("order {order:?}: output {:?} violates the constraint", out.matching));
                }
                if let Verdict::Fail(w) =
                    check_constrained_efficiency(inst, *g, &out.matching, &budget).map_err(|e| e.to_string())?
                {
                    return Err(format!(
                        "order {order:?}: {:?} dominated by {:?}",
                        out.matching.as_slice(),
                        w.as_slice()
                    ));
                }
                runs += 1;
            }
        }
        Ok(format!("{runs} runs undominated"))
    })();
    report.push("constrained_efficiency", eff);

    let sp = (|| -> std::result::Result<String, String> {
        for order in all_orders(2) {
            let p = params(TWO_AGENT_G_BAR, order.clone());
            let v = check_strategy_proofness_with(&two, &budget, |i| Ok(run_mechanism(i, &p)?.matching))
                .map_err(|e| e.to_string())?;
            if let Verdict::Fail(w) = v {
                return Err(format!("order {order:?}: {w}"));
            }
        }
        Ok("no profitable misreport".into())
    })();
    report.push("strategy_proofness", sp);

    let ttc_inst = fixtures::ttc_example();
    report.push(
        "ttc_fixture",
        fixtures::check_ttc_example(&ttc_inst).map(|_| "constraints verified by enumeration".into()),
    );

    let ttc = (|| -> std::result::Result<String, String> {
        let truthful = run_constrained_ttc(&ttc_inst, TTC_G_BAR).map_err(|e| e.to_string())?;
        if truthful.as_slice() != [0, 1, 2] {
            return Err(format!("truthful outcome {:?} is not the endowment", truthful.as_slice()));
        }
        let v = check_strategy_proofness_with(&ttc_inst, &budget, |i| run_constrained_ttc(i, TTC_G_BAR))
            .map_err(|e| e.to_string())?;
        match v {
            Verdict::Fail(w) if w.agent == 0 => Ok(format!("witness: {w}")),
            Verdict::Fail(w) => Err(format!("unexpected witness: {w}")),
            Verdict::Pass => Err("no manipulation found".into()),
        }
    })();
    report.push("ttc_manipulable", ttc);
    report
}

fn non_characterization(
    two: &Instance,
    budget: &EnumerationBudget,
    params: &dyn Fn(f64, Vec<usize>) -> MechanismParams,
) -> std::result::Result<String, String> {
    let target = Matching::new(vec![1, 2]);
    if !is_feasible(&target, two) || !is_g_acceptable(&target, two, TWO_AGENT_G_BAR) {
        return Err("{0->B, 1->C} is not feasible and acceptable".into());
    }
    let v = check_constrained_efficiency(two, TWO_AGENT_G_BAR, &target, budget).map_err(|e| e.to_string())?;
    if let Verdict::Fail(w) = v {
        return Err(format!("{{0->B, 1->C}} dominated by {:?}", w.as_slice()));
    }
    for order in all_orders(2) {
        let out = run_mechanism(two, &params(TWO_AGENT_G_BAR, order.clone())).map_err(|e| e.to_string())?;
        if out.matching == target {
            return Err(format!("order {order:?} produces {{0->B, 1->C}}"));
        }
    }
    Ok("{0->B, 1->C} undominated yet unreachable".into())
}

#[derive(Debug, Clone)]
pub struct PropertySuiteConfig {
    pub instances: usize,
    pub seed: u64,
    pub spec: RandomInstanceSpec,
    pub check_efficiency: bool,
    pub check_strategy_proofness: bool,
    pub tolerance: f64,
    pub fault: Option<ProbeFault>,
}

impl Default for PropertySuiteConfig {
    fn default() -> Self {
        Self {
            instances: 500,
            seed: 0,
            spec: RandomInstanceSpec::default(),
            check_efficiency: true,
            check_strategy_proofness: true,
            tolerance: EPS_TOL,
            fault: None,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct PropertySuiteReport {
    pub instances: usize,
    pub runs: usize,
    pub efficiency_failures: Vec<String>,
    pub manipulations: Vec<String>,
    pub invariant_failures: Vec<String>,
}

impl PropertySuiteReport {
    pub fn all_pass(&self) -> bool {
        self.efficiency_failures.is_empty() && self.manipulations.is_empty() && self.invariant_failures.is_empty()
    }
}

/// Random small markets, every priority order: run invariants, constrained
/// efficiency and strategy-proofness against enumeration.
pub fn run_property_suite(cfg: &PropertySuiteConfig) -> Result<PropertySuiteReport> {
    let budget = EnumerationBudget::default();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut report = PropertySuiteReport::default();
    for idx in 0..cfg.instances {
        let inst = random_small_instance(&mut rng, &cfg.spec);
        let g_max = lsap::solve_max_matching_value(&inst)?;
        let g = rng.gen_range(0.0..=1.0) * g_max;
        report.instances += 1;
        for order in all_orders(inst.n()) {
            let mut params = MechanismParams::new(g, order.clone()).with_tolerance(cfg.tolerance);
            params.fault = cfg.fault;
            let out = run_mechanism(&inst, &params)?;
            report.runs += 1;
            let tag = || format!("instance {idx}, g_bar {g:.6}, order {order:?}");
            if let Err(e) = check_run_invariants(&inst, g, &out) {
                report.invariant_failures.push(format!("{}: {e}", tag()));
            }
            if cfg.check_efficiency {
                if let Verdict::Fail(w) = check_constrained_efficiency(&inst, g, &out.matching, &budget)? {
                    report.efficiency_failures.push(format!(
                        "{}: {:?} dominated by {:?}",
                        tag(),
                        out.matching.as_slice(),
                        w.as_slice()
                    ));
                }
            }
            if cfg.check_strategy_proofness {
                let v = check_strategy_proofness_with(&inst, &budget, |i| Ok(run_mechanism(i, &params)?.matching))?;
                if let Verdict::Fail(w) = v {
                    report.manipulations.push(format!("{}: {w}", tag()));
                }
            }
        }
    }
    Ok(report)
}
