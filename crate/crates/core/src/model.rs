//! Instance data model: outcome scores, preferences with trailing
//! indifference, matchings, and the metrics computed over them.

use std::cmp::Ordering;
use std::collections::HashMap;

use crate::error::{Error, Result};

/// Absolute tolerance applied to total-score threshold comparisons.
pub const EPS_TOL: f64 = 1e-9;

/// True when `total` meets `n * g_bar` up to `eps` on the total scale.
#[inline]
pub fn meets_threshold(total: f64, n: usize, g_bar: f64, eps: f64) -> bool {
    total >= n as f64 * g_bar - eps
}

/// Dense `n x |L|` matrix of outcome scores, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl OutcomeMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::InvalidInstance(format!(
                "outcome matrix has {} entries, expected {rows}x{cols}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidInstance(format!(
                "outcome score at row {}, column {} is {} (must be finite and >= 0)",
                pos / cols.max(1),
                pos % cols.max(1),
                data[pos]
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|r| r.len() != cols) {
            return Err(Error::InvalidInstance(format!(
                "outcome row {bad} has {} columns, expected {cols}",
                rows[bad].len()
            )));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, agent: usize, location: usize) -> f64 {
        self.data[agent * self.cols + location]
    }

    #[inline]
    pub fn row(&self, agent: usize) -> &[f64] {
        &self.data[agent * self.cols..(agent + 1) * self.cols]
    }

    pub fn max_score(&self) -> f64 {
        self.data.iter().copied().fold(0.0, f64::max)
    }

    /// Population variance of one agent's scores across all locations.
    pub fn row_variance(&self, agent: usize) -> f64 {
        let row = self.row(agent);
        if row.is_empty() {
            return 0.0;
        }
        let m = row.len() as f64;
        let mean = row.iter().sum::<f64>() / m;
        row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / m
    }
}

/// One agent's preference: a strictly ranked prefix followed by a single
/// indifference class containing every unlisted location.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct AgentPreference {
    strict: Vec<usize>,
    position: Vec<u32>,
}

const UNLISTED: u32 = u32::MAX;

impl AgentPreference {
    /// Builds a preference over `num_locations` locations. A prefix of length
    /// `num_locations - 1` is completed with the missing location.
    pub fn new(mut strict: Vec<usize>, num_locations: usize) -> Result<Self> {
        let mut position = vec![UNLISTED; num_locations];
        for (rank, &loc) in strict.iter().enumerate() {
            if loc >= num_locations {
                return Err(Error::InvalidInstance(format!(
                    "preference references location index {loc} but only {num_locations} exist"
                )));
            }
            if position[loc] != UNLISTED {
                return Err(Error::InvalidInstance(format!(
                    "location index {loc} listed twice in one preference"
                )));
            }
            position[loc] = rank as u32;
        }
        if num_locations > 0 && strict.len() == num_locations - 1 {
            let missing = position.iter().position(|&p| p == UNLISTED).unwrap();
            position[missing] = strict.len() as u32;
            strict.push(missing);
        }
        Ok(Self { strict, position })
    }

    /// Every location mutually indifferent.
    pub fn indifferent(num_locations: usize) -> Self {
        Self::new(Vec::new(), num_locations).expect("empty prefix is always valid")
    }

    pub fn strict_prefix(&self) -> &[usize] {
        &self.strict
    }

    pub fn num_locations(&self) -> usize {
        self.position.len()
    }

    /// 0-based rank of `loc` in the strict prefix, `None` if unlisted.
    #[inline]
    pub fn rank(&self, loc: usize) -> Option<usize> {
        match self.position[loc] {
            UNLISTED => None,
            r => Some(r as usize),
        }
    }

    #[inline]
    pub fn is_listed(&self, loc: usize) -> bool {
        self.position[loc] != UNLISTED
    }

    /// `Greater` when `a` is strictly preferred to `b`.
    pub fn compare(&self, a: usize, b: usize) -> Ordering {
        // lower rank value is better; unlisted sorts last
        self.position[b].cmp(&self.position[a])
    }

    #[inline]
    pub fn strictly_prefers(&self, a: usize, b: usize) -> bool {
        self.compare(a, b) == Ordering::Greater
    }

    #[inline]
    pub fn weakly_prefers(&self, a: usize, b: usize) -> bool {
        self.compare(a, b) != Ordering::Less
    }
}

/// Preferences for every agent, indexed by agent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PreferenceProfile(Vec<AgentPreference>);

impl PreferenceProfile {
    pub fn new(prefs: Vec<AgentPreference>) -> Self {
        Self(prefs)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn agent(&self, i: usize) -> &AgentPreference {
        &self.0[i]
    }

    pub fn iter(&self) -> std::slice::Iter<'_, AgentPreference> {
        self.0.iter()
    }

    /// Copy of the profile with agent `i`'s preference replaced.
    pub fn with_agent(&self, i: usize, pref: AgentPreference) -> Self {
        let mut v = self.0.clone();
        v[i] = pref;
        Self(v)
    }
}

impl std::ops::Index<usize> for PreferenceProfile {
    type Output = AgentPreference;
    fn index(&self, i: usize) -> &AgentPreference {
        &self.0[i]
    }
}

/// Capacities, scores and location labels; everything a planner knows
/// about the market without the agents' preferences.
#[derive(Debug, Clone, PartialEq)]
pub struct PlannerView {
    locations: Vec<String>,
    capacities: Vec<u32>,
    outcomes: OutcomeMatrix,
}

impl PlannerView {
    pub fn new(locations: Vec<String>, capacities: Vec<u32>, outcomes: OutcomeMatrix) -> Result<Self> {
        if locations.len() != capacities.len() {
            return Err(Error::InvalidInstance(format!(
                "{} locations but {} capacities",
                locations.len(),
                capacities.len()
            )));
        }
        if outcomes.cols() != locations.len() {
            return Err(Error::InvalidInstance(format!(
                "outcome matrix has {} columns for {} locations",
                outcomes.cols(),
                locations.len()
            )));
        }
        let mut seen = HashMap::new();
        for (idx, name) in locations.iter().enumerate() {
            if let Some(prev) = seen.insert(name.as_str(), idx) {
                return Err(Error::InvalidInstance(format!(
                    "duplicate location identifier {name:?} at positions {prev} and {idx}"
                )));
            }
        }
        let slots: u64 = capacities.iter().map(|&c| c as u64).sum();
        if outcomes.rows() as u64 > slots {
            return Err(Error::Infeasible {
                agents: outcomes.rows(),
                slots,
            });
        }
        Ok(Self {
            locations,
            capacities,
            outcomes,
        })
    }

    pub fn n(&self) -> usize {
        self.outcomes.rows()
    }

    pub fn num_locations(&self) -> usize {
        self.locations.len()
    }

    pub fn locations(&self) -> &[String] {
        &self.locations
    }

    pub fn capacities(&self) -> &[u32] {
        &self.capacities
    }

    pub fn outcomes(&self) -> &OutcomeMatrix {
        &self.outcomes
    }

    pub fn with_preferences(self, preferences: PreferenceProfile) -> Result<Instance> {
        Instance::from_parts(self, preferences)
    }
}

/// The complete input to the mechanism.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    view: PlannerView,
    preferences: PreferenceProfile,
}

impl Instance {
    pub fn new(
        locations: Vec<String>,
        capacities: Vec<u32>,
        outcomes: OutcomeMatrix,
        preferences: PreferenceProfile,
    ) -> Result<Self> {
        PlannerView::new(locations, capacities, outcomes)?.with_preferences(preferences)
    }

    fn from_parts(view: PlannerView, preferences: PreferenceProfile) -> Result<Self> {
        if preferences.len() != view.n() {
            return Err(Error::InvalidInstance(format!(
                "{} preferences for {} agents",
                preferences.len(),
                view.n()
            )));
        }
        if let Some(i) = preferences
            .iter()
            .position(|p| p.num_locations() != view.num_locations())
        {
            return Err(Error::InvalidInstance(format!(
                "preference of agent {i} is over {} locations, instance has {}",
                preferences[i].num_locations(),
                view.num_locations()
            )));
        }
        Ok(Self { view, preferences })
    }

    /// Convenience constructor for label-based fixtures.
    pub fn from_labels(
        locations: &[&str],
        capacities: &[u32],
        scores: &[Vec<f64>],
        prefs: &[&[&str]],
    ) -> Result<Self> {
        let locs: Vec<String> = locations.iter().map(|s| s.to_string()).collect();
        let profile = prefs
            .iter()
            .map(|p| {
                let idx = p
                    .iter()
                    .map(|name| {
                        locations.iter().position(|l| l == name).ok_or_else(|| {
                            Error::InvalidInstance(format!("unknown location {name:?}"))
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                AgentPreference::new(idx, locations.len())
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(
            locs,
            capacities.to_vec(),
            OutcomeMatrix::from_rows(scores)?,
            PreferenceProfile::new(profile),
        )
    }

    pub fn n(&self) -> usize {
        self.view.n()
    }

    pub fn num_locations(&self) -> usize {
        self.view.num_locations()
    }

    pub fn locations(&self) -> &[String] {
        self.view.locations()
    }

    pub fn location_index(&self, name: &str) -> Option<usize> {
        self.view.locations.iter().position(|l| l == name)
    }

    pub fn capacities(&self) -> &[u32] {
        self.view.capacities()
    }

    pub fn outcomes(&self) -> &OutcomeMatrix {
        self.view.outcomes()
    }

    pub fn preferences(&self) -> &PreferenceProfile {
        &self.preferences
    }

    pub fn planner_view(&self) -> &PlannerView {
        &self.view
    }

    pub fn with_preferences(&self, preferences: PreferenceProfile) -> Result<Self> {
        Self::from_parts(self.view.clone(), preferences)
    }

    pub fn score(&self, agent: usize, location: usize) -> f64 {
        self.view.outcomes.get(agent, location)
    }
}

/// Total map from agent index to location index.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Matching(Vec<usize>);

impl Matching {
    pub fn new(assignment: Vec<usize>) -> Self {
        Self(assignment)
    }

    pub fn location_of(&self, agent: usize) -> usize {
        self.0[agent]
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Sum of assigned scores, accumulated in agent order.
    pub fn total_score(&self, outcomes: &OutcomeMatrix) -> f64 {
        self.0
            .iter()
            .enumerate()
            .map(|(i, &l)| outcomes.get(i, l))
            .sum()
    }

    pub fn loads(&self, num_locations: usize) -> Vec<u32> {
        let mut loads = vec![0u32; num_locations];
        for &l in &self.0 {
            loads[l] += 1;
        }
        loads
    }
}

pub fn is_feasible(m: &Matching, inst: &Instance) -> bool {
    m.len() == inst.n()
        && m.as_slice().iter().all(|&l| l < inst.num_locations())
        && m
            .loads(inst.num_locations())
            .iter()
            .zip(inst.capacities())
            .all(|(load, cap)| load <= cap)
}

pub fn is_g_acceptable(m: &Matching, inst: &Instance, g_bar: f64) -> bool {
    meets_threshold(m.total_score(inst.outcomes()), inst.n(), g_bar, EPS_TOL)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricReport {
    pub top_k_proportion: f64,
    pub realized_mean: f64,
}

/// Top-k share over strictly ranked positions plus the mean assigned score.
pub fn compute_metrics(m: &Matching, inst: &Instance, k: usize) -> MetricReport {
    compute_metrics_with(m, inst.outcomes(), inst.preferences(), k)
}

/// Same as [`compute_metrics`] against an arbitrary profile (used when the
/// planner scores a matching under predicted preferences).
pub fn compute_metrics_with(
    m: &Matching,
    outcomes: &OutcomeMatrix,
    prefs: &PreferenceProfile,
    k: usize,
) -> MetricReport {
    let n = m.len();
    if n == 0 {
        return MetricReport {
            top_k_proportion: 0.0,
            realized_mean: 0.0,
        };
    }
    let hits = m
        .as_slice()
        .iter()
        .enumerate()
        .filter(|&(i, &l)| prefs[i].rank(l).is_some_and(|r| r < k))
        .count();
    MetricReport {
        top_k_proportion: hits as f64 / n as f64,
        realized_mean: m.total_score(outcomes) / n as f64,
    }
}

/// `m1` weakly better for every agent and strictly better for one.
pub fn pareto_dominates(m1: &Matching, m2: &Matching, prefs: &PreferenceProfile) -> bool {
    let mut strict = false;
    for (i, (&a, &b)) in m1.as_slice().iter().zip(m2.as_slice()).enumerate() {
        match prefs[i].compare(a, b) {
            Ordering::Less => return false,
            Ordering::Greater => strict = true,
            Ordering::Equal => {}
        }
    }
    strict
}
