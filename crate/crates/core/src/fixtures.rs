//! Small hand-built instances shared by tests, the verification suite and
//! the CLI.

use crate::model::{Instance, Matching};
use crate::{lsap, oracles};

/// Two agents, three unit-capacity locations. Both rank A first; agent 0
/// ranks B over C, agent 1 ranks C over B, and each scores 0.9 at its
/// last choice.
pub fn two_agent_example() -> Instance {
    Instance::from_labels(
        &["A", "B", "C"],
        &[1, 1, 1],
        &[vec![0.1, 0.5, 0.9], vec![0.1, 0.9, 0.5]],
        &[&["A", "B", "C"], &["A", "C", "B"]],
    )
    .expect("fixture is valid")
}

pub const TWO_AGENT_G_BAR: f64 = 0.45;

pub const TTC_G_BAR: f64 = 0.5;

/// Three agents and three unit-capacity locations on which the
/// outcome-maximizing endowment followed by threshold-stopped cycle trading
/// can be manipulated by agent 0.
///
/// Agent 0 ranks B > C > A, agents 1 and 2 rank A first. The unique
/// outcome-maximizing matching is {0->A, 1->B, 2->C}; trading 0 and 1 drops
/// the mean to 0.3; the matching {0->C, 1->B, 2->A} keeps it at 0.6.
pub fn ttc_example() -> Instance {
    Instance::from_labels(
        &["A", "B", "C"],
        &[1, 1, 1],
        &[
            vec![0.9, 0.1, 0.6],
            vec![0.1, 0.8, 0.2],
            vec![0.4, 0.2, 0.7],
        ],
        &[&["B", "C", "A"], &["A", "B", "C"], &["A", "C", "B"]],
    )
    .expect("fixture is valid")
}

/// Re-derives the three properties the TTC fixture is built to have, by
/// enumeration. Returns a description of the first one that does not hold.
pub fn check_ttc_example(inst: &Instance) -> Result<(), String> {
    let outcomes = inst.outcomes();
    let n = inst.n() as f64;
    let all: Vec<Matching> = oracles::enumerate_feasible_matchings(inst, &Default::default())
        .map_err(|e| e.to_string())?
        .collect();
    let best = all
        .iter()
        .map(|m| m.total_score(outcomes))
        .fold(f64::NEG_INFINITY, f64::max);
    let maximizers: Vec<&Matching> = all
        .iter()
        .filter(|m| m.total_score(outcomes) == best)
        .collect();
    let endowment = Matching::new(vec![0, 1, 2]);
    if maximizers != [&endowment] {
        return Err(format!("outcome maximizers are {maximizers:?}"));
    }
    let lsap_value = lsap::solve_max_matching_value(inst).map_err(|e| e.to_string())?;
    if (lsap_value - best / n).abs() > 1e-12 {
        return Err(format!("solver value {lsap_value} != enumerated {}", best / n));
    }
    let swapped = Matching::new(vec![1, 0, 2]).total_score(outcomes) / n;
    if swapped >= TTC_G_BAR {
        return Err(format!("swap of agents 0 and 1 keeps mean {swapped}"));
    }
    let misreport = Matching::new(vec![2, 1, 0]).total_score(outcomes) / n;
    if misreport < TTC_G_BAR {
        return Err(format!("misreport outcome mean {misreport} below threshold"));
    }
    Ok(())
}

/// Every agent has the same score `c` everywhere.
pub fn constant_scores(n: usize, capacities: &[u32], c: f64) -> Instance {
    let m = capacities.len();
    let names: Vec<String> = (0..m).map(|l| format!("L{l}")).collect();
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let prefs: Vec<&[&str]> = vec![&[]; n];
    Instance::from_labels(&refs, capacities, &vec![vec![c; m]; n], &prefs).expect("fixture is valid")
}
