//! Priority-order strategies and the reordering experiment.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mechanism::{MechanismParams, MechanismRunner};
use crate::model::{compute_metrics_with, Instance, PlannerView, PreferenceProfile};

/// Default number of random candidate orders.
pub const DEFAULT_CANDIDATES: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub enum OrderingStrategy {
    Given(Vec<usize>),
    Random { seed: u64 },
    IncreasingVariance,
    DecreasingVariance,
    PseudoInferred {
        pseudo: PreferenceProfile,
        candidate_count: usize,
        seed: u64,
    },
}

/// `count` uniformly random permutations of `0..n` from one seed.
pub fn random_orders(n: usize, count: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng);
            order
        })
        .collect()
}

/// Agents sorted by population variance of their score rows, ties by index.
pub fn variance_order(view: &PlannerView, increasing: bool) -> Vec<usize> {
    let var: Vec<f64> = (0..view.n()).map(|i| view.outcomes().row_variance(i)).collect();
    let mut order: Vec<usize> = (0..view.n()).collect();
    order.sort_by(|&a, &b| {
        let by_var = var[a].total_cmp(&var[b]);
        let by_var = if increasing { by_var } else { by_var.reverse() };
        by_var.then(a.cmp(&b))
    });
    order
}

/// Index of the candidate order with the best top-3 share under `pseudo`,
/// first one on ties. Only the planner's data and the pseudo profile are
/// visible here.
pub fn select_by_pseudo(
    view: &PlannerView,
    pseudo: &PreferenceProfile,
    candidates: &[Vec<usize>],
    g_bar: f64,
) -> Result<usize> {
    let inst = view.clone().with_preferences(pseudo.clone())?;
    let runner = MechanismRunner::new(&inst)?;
    let scores = candidate_top3(&runner, candidates, g_bar)?;
    Ok(first_argmax(&scores))
}

fn candidate_top3(runner: &MechanismRunner<'_>, candidates: &[Vec<usize>], g_bar: f64) -> Result<Vec<f64>> {
    let inst = runner.instance();
    candidates
        .par_iter()
        .map(|order| {
            let out = runner.run(&MechanismParams::new(g_bar, order.clone()))?;
            Ok(compute_metrics_with(&out.matching, inst.outcomes(), inst.preferences(), 3).top_k_proportion)
        })
        .collect()
}

fn first_argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

pub fn make_order(inst: &Instance, strat: &OrderingStrategy, g_bar: f64) -> Result<Vec<usize>> {
    let n = inst.n();
    match strat {
        OrderingStrategy::Given(order) => {
            let mut seen = vec![false; n];
            if order.len() != n || order.iter().any(|&a| a >= n || std::mem::replace(&mut seen[a], true)) {
                return Err(Error::InvalidConfig(format!("order {order:?} is not a permutation of {n} agents")));
            }
            Ok(order.clone())
        }
        OrderingStrategy::Random { seed } => Ok(random_orders(n, 1, *seed).remove(0)),
        OrderingStrategy::IncreasingVariance => Ok(variance_order(inst.planner_view(), true)),
        OrderingStrategy::DecreasingVariance => Ok(variance_order(inst.planner_view(), false)),
        OrderingStrategy::PseudoInferred {
            pseudo,
            candidate_count,
            seed,
        } => {
            if *candidate_count == 0 {
                return Err(Error::InvalidConfig("candidate count must be at least 1".into()));
            }
            if pseudo.len() != n {
                return Err(Error::InvalidConfig(format!(
                    "pseudo profile has {} agents, instance has {n}",
                    pseudo.len()
                )));
            }
            let mut candidates = random_orders(n, *candidate_count, *seed);
            let pick = select_by_pseudo(inst.planner_view(), pseudo, &candidates, g_bar)?;
            Ok(candidates.swap_remove(pick))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrderResult {
    pub top3: f64,
    pub realized_mean: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PseudoChoice {
    pub label: String,
    /// Index into the random candidate orders.
    pub order_id: usize,
    pub result: OrderResult,
}

/// Everything measured at one threshold. Empty when infeasible.
#[derive(Debug, Clone, PartialEq)]
pub struct ReorderPoint {
    pub g_bar: f64,
    pub feasible: bool,
    pub random: Vec<OrderResult>,
    pub increasing_variance: Option<OrderResult>,
    pub decreasing_variance: Option<OrderResult>,
    pub pseudo: Vec<PseudoChoice>,
}

impl ReorderPoint {
    /// `(min, mean, max)` of the random orders' top-3 shares.
    pub fn top3_summary(&self) -> Option<(f64, f64, f64)> {
        summary(self.random.iter().map(|r| r.top3))
    }

    pub fn mean_summary(&self) -> Option<(f64, f64, f64)> {
        summary(self.random.iter().map(|r| r.realized_mean))
    }
}

fn summary(xs: impl Iterator<Item = f64> + Clone) -> Option<(f64, f64, f64)> {
    let count = xs.clone().count();
    if count == 0 {
        return None;
    }
    let min = xs.clone().fold(f64::INFINITY, f64::min);
    let max = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    Some((min, xs.sum::<f64>() / count as f64, max))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReorderSpec {
    pub g_grid: Vec<f64>,
    pub random_orders: usize,
    pub seed: u64,
    pub include_variance: bool,
    /// Labelled pseudo profiles; each picks among the same random orders.
    pub pseudo: Vec<(String, PreferenceProfile)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReorderTable {
    pub g_max: f64,
    pub points: Vec<ReorderPoint>,
}

/// One output line: `strategy` is `random`, `increasing_variance`,
/// `decreasing_variance`, `pseudo_inferred[_label]`, or a summary
/// `random_min` / `random_mean` / `random_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReorderRow {
    pub g_bar: f64,
    pub strategy: String,
    pub order_id: Option<usize>,
    pub top3: Option<f64>,
    pub realized_mean: Option<f64>,
    pub feasible: bool,
}

impl ReorderTable {
    pub fn rows(&self) -> Vec<ReorderRow> {
        let mut rows = Vec::new();
        for p in &self.points {
            let row = |strategy: String, order_id, r: Option<OrderResult>| ReorderRow {
                g_bar: p.g_bar,
                strategy,
                order_id,
                top3: r.map(|r| r.top3),
                realized_mean: r.map(|r| r.realized_mean),
                feasible: p.feasible,
            };
            if !p.feasible {
                rows.push(row("random".into(), None, None));
                continue;
            }
            for (i, r) in p.random.iter().enumerate() {
                rows.push(row("random".into(), Some(i), Some(*r)));
            }
            if let Some(r) = p.increasing_variance {
                rows.push(row("increasing_variance".into(), None, Some(r)));
            }
            if let Some(r) = p.decreasing_variance {
                rows.push(row("decreasing_variance".into(), None, Some(r)));
            }
            for c in &p.pseudo {
                let name = if c.label.is_empty() {
                    "pseudo_inferred".to_string()
                } else {
                    format!("pseudo_inferred_{}", c.label)
                };
                rows.push(row(name, Some(c.order_id), Some(c.result)));
            }
            if let (Some(t), Some(m)) = (p.top3_summary(), p.mean_summary()) {
                for (name, top3, mean) in [
                    ("random_min", t.0, m.0),
                    ("random_mean", t.1, m.1),
                    ("random_max", t.2, m.2),
                ] {
                    rows.push(row(
                        name.into(),
                        None,
                        Some(OrderResult {
                            top3,
                            realized_mean: mean,
                        }),
                    ));
                }
            }
        }
        rows
    }
}

/// Runs the mechanism at every threshold under the same random orders,
/// the variance orders, and pseudo-inferred picks among the random orders.
pub fn reorder_experiment(inst: &Instance, spec: &ReorderSpec) -> Result<ReorderTable> {
    if spec.random_orders == 0 {
        return Err(Error::InvalidConfig("at least one random order is required".into()));
    }
    let runner = MechanismRunner::new(inst)?;
    let pseudo_insts = spec
        .pseudo
        .iter()
        .map(|(label, p)| Ok((label.clone(), inst.planner_view().clone().with_preferences(p.clone())?)))
        .collect::<Result<Vec<_>>>()?;
    let pseudo_runners = pseudo_insts
        .iter()
        .map(|(label, i)| Ok((label.as_str(), MechanismRunner::new(i)?)))
        .collect::<Result<Vec<_>>>()?;
    let candidates = random_orders(inst.n(), spec.random_orders, spec.seed);
    let inc = variance_order(inst.planner_view(), true);
    let dec = variance_order(inst.planner_view(), false);
    let g_max = runner.g_max();

    let evaluate = |order: &[usize], g_bar: f64| -> Result<OrderResult> {
        let out = runner.run(&MechanismParams::new(g_bar, order.to_vec()))?;
        Ok(OrderResult {
            top3: compute_metrics_with(&out.matching, inst.outcomes(), inst.preferences(), 3).top_k_proportion,
            realized_mean: out.realized_mean,
        })
    };

    let points = spec
        .g_grid
        .iter()
        .map(|&g_bar| -> Result<ReorderPoint> {
            let mut point = ReorderPoint {
                g_bar,
                feasible: true,
                random: Vec::new(),
                increasing_variance: None,
                decreasing_variance: None,
                pseudo: Vec::new(),
            };
            point.random = match candidates
                .par_iter()
                .map(|o| evaluate(o, g_bar))
                .collect::<Result<Vec<_>>>()
            {
                Ok(r) => r,
                Err(Error::ThresholdInfeasible { .. }) => {
                    point.feasible = false;
                    return Ok(point);
                }
                Err(e) => return Err(e),
            };
            if spec.include_variance {
                point.increasing_variance = Some(evaluate(&inc, g_bar)?);
                point.decreasing_variance = Some(evaluate(&dec, g_bar)?);
            }
            for (label, pr) in &pseudo_runners {
                let order_id = first_argmax(&candidate_top3(pr, &candidates, g_bar)?);
                point.pseudo.push(PseudoChoice {
                    label: label.to_string(),
                    order_id,
                    result: point.random[order_id],
                });
            }
            Ok(point)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ReorderTable { g_max, points })
}
