//! Maximum-total-score assignment of agents to capacitated locations.
//!
//! The solver works on the transportation form of the problem: the
//! residual graph has one node per location plus a sink, an edge `u -> v`
//! whose cost is the cheapest loss from moving one seated agent out of `u`
//! into `v`, `u -> sink` when `u` has a free seat, and `sink -> v` when `v`
//! holds anyone. Agents are inserted one at a time along shortest paths
//! (successive shortest paths), which keeps the pool optimal after every
//! insertion. The same graph prices "force agent `a` into location `l`"
//! for every `l` with a single reverse shortest-path pass: the cheapest
//! alternating cycle through `a -> l` is `loss(l) = g_a(l0) - g_a(l) +
//! dist(l, l0)`, where `l0` is `a`'s current seat.
//!
//! Returned assignments are canonical: among optimal assignments, the one
//! whose location vector (in ascending agent order) is lexicographically
//! smallest.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::model::{Instance, OutcomeMatrix};

const NONE: usize = usize::MAX;

/// Heap entry ordered by `f64::total_cmp`, then node.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Key(f64, usize);

impl Eq for Key {}

impl PartialOrd for Key {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Key {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0).then(self.1.cmp(&other.1))
    }
}

/// Completion sub-problem: a subset of agents, residual capacities,
/// and the shared score matrix.
#[derive(Debug, Clone)]
pub struct PartialProblem<'a> {
    pub agents: Vec<usize>,
    pub capacities: Vec<u32>,
    pub scores: &'a OutcomeMatrix,
}

impl<'a> PartialProblem<'a> {
    /// Every agent of `inst` with its full capacities.
    pub fn full(inst: &'a Instance) -> Self {
        Self {
            agents: (0..inst.n()).collect(),
            capacities: inst.capacities().to_vec(),
            scores: inst.outcomes(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    /// Sum of assigned scores, accumulated in ascending agent order.
    pub total: f64,
    /// `(agent, location)` pairs sorted by agent.
    pub assignment: Vec<(usize, usize)>,
}

impl SolveResult {
    pub fn location_of(&self, agent: usize) -> Option<usize> {
        self.assignment
            .binary_search_by_key(&agent, |&(a, _)| a)
            .ok()
            .map(|i| self.assignment[i].1)
    }
}

/// Maximum-total assignment with the lexicographic tie-break.
pub fn solve_max_assignment(p: &PartialProblem<'_>) -> Result<SolveResult> {
    let mut agents = p.agents.clone();
    agents.sort_unstable();
    agents.dedup();
    let mut pool = Pool::new(p.scores, p.capacities.clone(), &agents)?;
    pool.canonicalize();
    let assignment: Vec<(usize, usize)> = agents.iter().map(|&a| (a, pool.seat(a))).collect();
    let total = assignment.iter().map(|&(a, l)| p.scores.get(a, l)).sum();
    Ok(SolveResult { total, assignment })
}

/// The maximum achievable mean outcome over feasible matchings.
pub fn solve_max_matching_value(inst: &Instance) -> Result<f64> {
    if inst.n() == 0 {
        return Ok(0.0);
    }
    let pool = Pool::new(
        inst.outcomes(),
        inst.capacities().to_vec(),
        &(0..inst.n()).collect::<Vec<_>>(),
    )?;
    Ok(pool.total() / inst.n() as f64)
}

/// Optimal pool of seated agents maintained under insertions and forced
/// relocations.
#[derive(Debug, Clone)]
pub(crate) struct Pool<'a> {
    scores: &'a OutcomeMatrix,
    cap: Vec<u32>,
    load: Vec<u32>,
    seat: Vec<usize>,
    members: Vec<Vec<usize>>,
    pinned: Vec<bool>,
    relax_eps: f64,
    tie_tol: f64,
    // cheapest move `u -> v` stored at `v * m + u`, rebuilt lazily per `u`
    edge_cost: Vec<f64>,
    edge_agent: Vec<usize>,
    dirty: Vec<bool>,
    // last shortest-path pass; `pot` orders the next search
    dist: Vec<f64>,
    next: Vec<usize>,
    pot: Vec<f64>,
    priced_for: Option<usize>,
}

impl<'a> Pool<'a> {
    pub(crate) fn new(scores: &'a OutcomeMatrix, cap: Vec<u32>, agents: &[usize]) -> Result<Self> {
        let m = cap.len();
        if scores.cols() != m {
            return Err(Error::InvalidInstance(format!(
                "{} capacities for {} score columns",
                m,
                scores.cols()
            )));
        }
        let slots: u64 = cap.iter().map(|&c| c as u64).sum();
        if agents.len() as u64 > slots {
            return Err(Error::Infeasible {
                agents: agents.len(),
                slots,
            });
        }
        let scale = 1.0 + scores.max_score() * (agents.len().max(1) as f64);
        let mut pool = Self {
            scores,
            load: vec![0; m],
            cap,
            seat: vec![NONE; scores.rows()],
            members: vec![Vec::new(); m],
            pinned: vec![false; scores.rows()],
            relax_eps: 1e-14 * scale,
            tie_tol: 1e-12 * scale,
            edge_cost: vec![f64::INFINITY; m * m],
            edge_agent: vec![NONE; m * m],
            dirty: vec![true; m],
            dist: vec![f64::INFINITY; m + 1],
            next: vec![NONE; m + 1],
            pot: vec![0.0; m + 1],
            priced_for: None,
        };
        for &a in agents {
            pool.insert(a);
        }
        Ok(pool)
    }

    #[inline]
    fn sink(&self) -> usize {
        self.cap.len()
    }

    #[inline]
    pub(crate) fn seat(&self, agent: usize) -> usize {
        self.seat[agent]
    }

    pub(crate) fn residual(&self) -> &[u32] {
        &self.cap
    }

    /// Total score of the pool, summed in ascending agent order.
    pub(crate) fn total(&self) -> f64 {
        self.seat
            .iter()
            .enumerate()
            .filter(|&(_, &l)| l != NONE)
            .map(|(a, &l)| self.scores.get(a, l))
            .sum()
    }

    /// Recomputes edge rows of locations whose movable members changed.
    fn refresh_edges(&mut self) {
        let m = self.cap.len();
        for u in 0..m {
            if !std::mem::take(&mut self.dirty[u]) {
                continue;
            }
            for v in 0..m {
                self.edge_cost[v * m + u] = f64::INFINITY;
                self.edge_agent[v * m + u] = NONE;
            }
            for &j in &self.members[u] {
                if self.pinned[j] {
                    continue;
                }
                let row = self.scores.row(j);
                let here = row[u];
                for v in 0..m {
                    let c = here - row[v];
                    if v != u && c < self.edge_cost[v * m + u] {
                        self.edge_cost[v * m + u] = c;
                        self.edge_agent[v * m + u] = j;
                    }
                }
            }
        }
    }

    /// Reverse shortest paths from every node to `target`. With
    /// `drain_edges`, paths may also pass `sink -> v` for occupied `v`.
    ///
    /// Label-correcting search that always expands the open node with the
    /// smallest `dist - pot`; with `pot` from the previous pass most nodes
    /// settle once. Edges out of `target` are never used.
    fn shortest_paths_to(&mut self, target: usize, drain_edges: bool) {
        self.refresh_edges();
        let m = self.cap.len();
        let sink = self.sink();
        let eps = self.relax_eps;
        let mut dist = std::mem::take(&mut self.dist);
        let mut next = std::mem::take(&mut self.next);
        dist.fill(f64::INFINITY);
        next.fill(NONE);
        dist[target] = 0.0;
        let mut open = vec![false; m + 1];
        open[target] = true;
        let mut heap = BinaryHeap::with_capacity(2 * (m + 1));
        heap.push(Reverse(Key(0.0 - self.pot[target], target)));
        let mut pops = 0usize;
        let pop_cap = 4 * (m + 1) * (m + 1);
        while let Some(Reverse(Key(key, x))) = heap.pop() {
            if !open[x] || key != dist[x] - self.pot[x] {
                continue;
            }
            open[x] = false;
            pops += 1;
            if pops > pop_cap {
                // only reachable through float-noise cycles
                break;
            }
            let dx = dist[x];
            let pot = &self.pot;
            let mut relax = |u: usize, cand: f64| {
                if u != target && cand < dist[u] - eps {
                    dist[u] = cand;
                    next[u] = x;
                    open[u] = true;
                    heap.push(Reverse(Key(cand - pot[u], u)));
                }
            };
            if x == sink {
                for u in 0..m {
                    if self.load[u] < self.cap[u] {
                        relax(u, dx);
                    }
                }
            } else {
                for (u, &c) in self.edge_cost[x * m..(x + 1) * m].iter().enumerate() {
                    if c.is_finite() {
                        relax(u, c + dx);
                    }
                }
                if drain_edges && self.load[x] > 0 {
                    relax(sink, dx);
                }
            }
        }
        for (p, &d) in self.pot.iter_mut().zip(&dist) {
            if d.is_finite() {
                *p = d;
            }
        }
        self.dist = dist;
        self.next = next;
    }

    fn move_agent(&mut self, agent: usize, to: usize) {
        let from = self.seat[agent];
        if from != NONE {
            let pos = self.members[from].iter().position(|&j| j == agent).unwrap();
            self.members[from].remove(pos);
            self.load[from] -= 1;
        }
        let slot = self.members[to].partition_point(|&j| j < agent);
        self.members[to].insert(slot, agent);
        self.load[to] += 1;
        self.seat[agent] = to;
        self.dirty[to] = true;
        if from != NONE {
            self.dirty[from] = true;
        }
    }

    /// Displacements along the stored path from `start` to the pass target.
    fn path_moves(&self, start: usize) -> Vec<(usize, usize)> {
        let m = self.cap.len();
        let sink = self.sink();
        let mut moves = Vec::new();
        let mut u = start;
        while self.next[u] != NONE {
            let v = self.next[u];
            if u != sink && v != sink {
                moves.push((self.edge_agent[v * m + u], v));
            }
            u = v;
        }
        moves
    }

    fn insert(&mut self, agent: usize) {
        let m = self.cap.len();
        let sink = self.sink();
        self.shortest_paths_to(sink, false);
        let row = self.scores.row(agent);
        let mut best = NONE;
        let mut best_cost = f64::INFINITY;
        for l in 0..m {
            if self.cap[l] == 0 || !self.dist[l].is_finite() {
                continue;
            }
            let c = self.dist[l] - row[l];
            if c < best_cost - self.relax_eps {
                best_cost = c;
                best = l;
            }
        }
        debug_assert!(best != NONE, "capacity check guarantees a free seat");
        for (j, v) in self.path_moves(best) {
            self.move_agent(j, v);
        }
        self.move_agent(agent, best);
        self.priced_for = None;
    }

    /// Loss in total score from forcing `agent` into each location, keeping
    /// the rest optimal. `INFINITY` where impossible.
    pub(crate) fn relocation_losses(&mut self, agent: usize) -> Vec<f64> {
        let m = self.cap.len();
        let home = self.seat[agent];
        let row = self.scores.row(agent);
        let mut losses = vec![f64::INFINITY; m];
        losses[home] = 0.0;
        self.shortest_paths_to(home, true);
        for (l, loss) in losses.iter_mut().enumerate() {
            if l != home && self.cap[l] > 0 && self.dist[l].is_finite() {
                *loss = row[home] - row[l] + self.dist[l];
            }
        }
        self.priced_for = Some(agent);
        losses
    }

    /// Applies the cheapest cycle forcing `agent` into `to`. Must follow
    /// [`Pool::relocation_losses`] for the same agent.
    pub(crate) fn relocate(&mut self, agent: usize, to: usize) {
        if self.seat[agent] == to {
            return;
        }
        assert_eq!(self.priced_for, Some(agent), "relocate without pricing");
        for (j, v) in self.path_moves(to) {
            self.move_agent(j, v);
        }
        self.move_agent(agent, to);
        self.priced_for = None;
    }

    /// Takes `agent` out of the pool along with the seat it occupies.
    pub(crate) fn retire(&mut self, agent: usize) {
        let l = self.seat[agent];
        let pos = self.members[l].iter().position(|&j| j == agent).unwrap();
        self.members[l].remove(pos);
        self.load[l] -= 1;
        self.cap[l] -= 1;
        self.seat[agent] = NONE;
        self.dirty[l] = true;
        self.priced_for = None;
    }

    /// Rewrites the pool into the lexicographically smallest optimal
    /// assignment.
    fn canonicalize(&mut self) {
        let agents: Vec<usize> = (0..self.seat.len()).filter(|&a| self.seat[a] != NONE).collect();
        for &a in &agents {
            let home = self.seat[a];
            if (0..home).any(|l| self.cap[l] > 0) {
                let losses = self.relocation_losses(a);
                if let Some(l) = (0..home).find(|&l| losses[l] <= self.tie_tol) {
                    self.relocate(a, l);
                }
            }
            self.pinned[a] = true;
            self.dirty[self.seat[a]] = true;
        }
        for &a in &agents {
            self.pinned[a] = false;
            self.dirty[self.seat[a]] = true;
        }
        self.priced_for = None;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn scores(rows: &[Vec<f64>]) -> OutcomeMatrix {
        OutcomeMatrix::from_rows(rows).unwrap()
    }

    #[test]
    fn single_agent_takes_argmax() {
        let s = scores(&[vec![0.1, 0.9]]);
        let r = solve_max_assignment(&PartialProblem {
            agents: vec![0],
            capacities: vec![1, 1],
            scores: &s,
        })
        .unwrap();
        assert_eq!(r.assignment, vec![(0, 1)]);
        assert_eq!(r.total, 0.9);
    }

    #[test]
    fn two_agent_example_optimum() {
        let inst = fixtures::two_agent_example();
        let r = solve_max_assignment(&PartialProblem::full(&inst)).unwrap();
        assert_eq!(r.assignment, vec![(0, 2), (1, 1)]);
        assert!((r.total - 1.8).abs() < 1e-12);
        assert!((solve_max_matching_value(&inst).unwrap() - 0.9).abs() < 1e-12);
    }

    #[test]
    fn constant_matrix_gives_lexicographically_smallest() {
        let inst = fixtures::constant_scores(5, &[2, 1, 3], 0.25);
        let r = solve_max_assignment(&PartialProblem::full(&inst)).unwrap();
        let locs: Vec<usize> = r.assignment.iter().map(|&(_, l)| l).collect();
        assert_eq!(locs, vec![0, 0, 1, 2, 2]);
        assert_eq!(r.total, 1.25);
        assert_eq!(solve_max_matching_value(&inst).unwrap(), 0.25);
    }

    #[test]
    fn single_agent_value() {
        let inst = crate::model::Instance::from_labels(&["A", "B"], &[1, 1], &[vec![0.2, 0.7]], &[&[]]).unwrap();
        assert_eq!(solve_max_matching_value(&inst).unwrap(), 0.7);
    }

    #[test]
    fn infeasible_subproblem_errors() {
        let s = scores(&[vec![0.1], vec![0.2]]);
        let err = solve_max_assignment(&PartialProblem {
            agents: vec![0, 1],
            capacities: vec![1],
            scores: &s,
        })
        .unwrap_err();
        assert!(matches!(err, Error::Infeasible { agents: 2, slots: 1 }));
    }

    #[test]
    fn respects_zero_capacity_and_subsets() {
        let s = scores(&[vec![0.9, 0.1, 0.2], vec![0.8, 0.3, 0.1], vec![0.7, 0.6, 0.5]]);
        let r = solve_max_assignment(&PartialProblem {
            agents: vec![2, 0],
            capacities: vec![0, 1, 1],
            scores: &s,
        })
        .unwrap();
        // agent 0 -> C (0.2) + agent 2 -> B (0.6) = 0.8 beats 0.1 + 0.5
        assert_eq!(r.assignment, vec![(0, 2), (2, 1)]);
        assert_eq!(r.location_of(2), Some(1));
        assert_eq!(r.location_of(1), None);
    }

    #[test]
    fn relocation_losses_match_forced_resolves() {
        let s = scores(&[
            vec![0.5, 0.2, 0.9, 0.1],
            vec![0.4, 0.8, 0.3, 0.6],
            vec![0.7, 0.7, 0.2, 0.3],
            vec![0.1, 0.5, 0.6, 0.9],
        ]);
        let caps = vec![1, 2, 1, 1];
        let all = [0, 1, 2, 3];
        let mut pool = Pool::new(&s, caps.clone(), &all).unwrap();
        let base = pool.total();
        let losses = pool.relocation_losses(1);
        for l in 0..4 {
            let mut rest_caps = caps.clone();
            rest_caps[l] -= 1;
            let rest = solve_max_assignment(&PartialProblem {
                agents: vec![0, 2, 3],
                capacities: rest_caps,
                scores: &s,
            })
            .unwrap();
            let forced = rest.total + s.get(1, l);
            assert!((base - losses[l] - forced).abs() < 1e-12, "location {l}");
        }
    }
}
