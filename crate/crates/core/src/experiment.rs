//! Threshold sweeps.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mechanism::{MechanismParams, MechanismRunner};
use crate::model::compute_metrics;
use crate::ordering::{make_order, OrderingStrategy};
use crate::model::Instance;

/// Grid steps used when no grid is given.
pub const DEFAULT_GRID_STEPS: usize = 50;

#[derive(Debug, Clone, PartialEq)]
pub enum GridSpec {
    Explicit(Vec<f64>),
    /// `start, start + step, ...` up to and including `stop` (within
    /// rounding).
    Range { start: f64, stop: f64, step: f64 },
    /// `steps + 1` evenly spaced points from 0 to the instance's maximum.
    UpToMax { steps: usize },
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec::UpToMax {
            steps: DEFAULT_GRID_STEPS,
        }
    }
}

impl GridSpec {
    pub fn resolve(&self, g_max: f64) -> Result<Vec<f64>> {
        let grid = match self {
            GridSpec::Explicit(v) => v.clone(),
            GridSpec::Range { start, stop, step } => {
                if !(*step > 0.0 && start.is_finite() && stop.is_finite()) {
                    return Err(Error::InvalidConfig(format!("bad grid range {start}:{stop}:{step}")));
                }
                let count = ((stop - start) / step + 1e-9).floor();
                if count < 0.0 {
                    return Err(Error::InvalidConfig(format!("grid stop {stop} precedes start {start}")));
                }
                (0..=count as usize).map(|i| start + i as f64 * step).collect()
            }
            GridSpec::UpToMax { steps } => {
                let steps = (*steps).max(1);
                (0..=steps).map(|i| g_max * i as f64 / steps as f64).collect()
            }
        };
        if grid.is_empty() {
            return Err(Error::InvalidConfig("empty threshold grid".into()));
        }
        if grid.iter().any(|g| !g.is_finite()) || grid.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::InvalidConfig("threshold grid must be finite and ascending".into()));
        }
        Ok(grid)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub grid: GridSpec,
    pub order: OrderingStrategy,
    pub k: usize,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            grid: GridSpec::default(),
            order: OrderingStrategy::Given(Vec::new()),
            k: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub g_bar: f64,
    pub feasible: bool,
    pub top_k: Option<f64>,
    pub realized_mean: Option<f64>,
    pub probes_used: usize,
    pub holds_count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub g_max: f64,
    pub k: usize,
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    /// Realized mean at the lowest threshold.
    pub fn baseline(&self) -> Option<f64> {
        self.rows.first().and_then(|r| r.realized_mean)
    }

    /// Feasible rows whose threshold lies above the baseline, where the
    /// constraint changes the outcome.
    pub fn tradeoff_rows(&self) -> Vec<&SweepRow> {
        let Some(base) = self.baseline() else {
            return Vec::new();
        };
        self.rows.iter().filter(|r| r.feasible && r.g_bar > base).collect()
    }

    /// First threshold whose realized mean beats the baseline by `delta`.
    pub fn first_exceeding(&self, delta: f64) -> Option<f64> {
        let base = self.baseline()?;
        self.rows
            .iter()
            .find(|r| r.realized_mean.is_some_and(|m| m > base + delta))
            .map(|r| r.g_bar)
    }
}

/// One mechanism run per grid point; an empty `Given` order means the
/// identity. Infeasible points are marked rather than failing the sweep.
pub fn sweep(inst: &Instance, spec: &SweepSpec) -> Result<SweepResult> {
    let runner = MechanismRunner::new(inst)?;
    let grid = spec.grid.resolve(runner.g_max())?;
    let fixed = match &spec.order {
        OrderingStrategy::Given(o) if o.is_empty() => Some((0..inst.n()).collect::<Vec<_>>()),
        OrderingStrategy::PseudoInferred { .. } => None,
        other => Some(make_order(inst, other, 0.0)?),
    };
    let rows = grid
        .par_iter()
        .map(|&g_bar| -> Result<SweepRow> {
            let order = match &fixed {
                Some(o) => o.clone(),
                None => make_order(inst, &spec.order, g_bar)?,
            };
            match runner.run(&MechanismParams::new(g_bar, order)) {
                Ok(out) => Ok(SweepRow {
                    g_bar,
                    feasible: true,
                    top_k: Some(compute_metrics(&out.matching, inst, spec.k).top_k_proportion),
                    realized_mean: Some(out.realized_mean),
                    probes_used: out.trace.probe_count(),
                    holds_count: out.trace.held_agents().len(),
                }),
                Err(Error::ThresholdInfeasible { .. }) => Ok(SweepRow {
                    g_bar,
                    feasible: false,
                    top_k: None,
                    realized_mean: None,
                    probes_used: 0,
                    holds_count: 0,
                }),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepResult {
        g_max: runner.g_max(),
        k: spec.k,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::mechanism::run_mechanism;
    use crate::model::EPS_TOL;
    use crate::simgen::{generate_instance, SimConfig};

    #[test]
    fn grid_forms() {
        assert_eq!(GridSpec::UpToMax { steps: 2 }.resolve(0.8).unwrap(), vec![0.0, 0.4, 0.8]);
        let r = GridSpec::Range {
            start: 0.1,
            stop: 0.3,
            step: 0.1,
        }
        .resolve(1.0)
        .unwrap();
        assert_eq!(r.len(), 3);
        assert!(GridSpec::Explicit(vec![0.3, 0.1]).resolve(1.0).is_err());
        assert!(GridSpec::Explicit(vec![]).resolve(1.0).is_err());
        assert_eq!(GridSpec::default().resolve(1.0).unwrap().len(), DEFAULT_GRID_STEPS + 1);
    }

    #[test]
    fn grid_above_max_is_all_infeasible() {
        let inst = fixtures::two_agent_example();
        let spec = SweepSpec {
            grid: GridSpec::Explicit(vec![0.91, 0.95, 1.0]),
            ..Default::default()
        };
        let res = sweep(&inst, &spec).unwrap();
        assert!(res.rows.iter().all(|r| !r.feasible && r.top_k.is_none()));
    }

    #[test]
    fn zero_threshold_row_is_serial_dictatorship() {
        let inst = fixtures::two_agent_example();
        let spec = SweepSpec {
            grid: GridSpec::Explicit(vec![0.0]),
            k: 1,
            ..Default::default()
        };
        let row = &sweep(&inst, &spec).unwrap().rows[0];
        // agent 0 takes A, agent 1 takes its next choice C
        assert_eq!(row.top_k, Some(0.5));
        assert!((row.realized_mean.unwrap() - 0.3).abs() < 1e-12);
        assert_eq!(row.holds_count, 0);
    }

    #[test]
    fn rows_are_monotone_and_independent() {
        let inst = generate_instance(&SimConfig::new(30, 0.5, 0.0, Some(10), 3)).unwrap();
        let spec = SweepSpec {
            grid: GridSpec::Range {
                start: 0.0,
                stop: 1.0,
                step: 0.05,
            },
            order: OrderingStrategy::Random { seed: 4 },
            k: 3,
        };
        let res = sweep(&inst, &spec).unwrap();
        let feasible: Vec<bool> = res.rows.iter().map(|r| r.feasible).collect();
        assert!(feasible.windows(2).all(|w| w[0] >= w[1]));
        let order = make_order(&inst, &spec.order, 0.0).unwrap();
        for r in res.rows.iter().filter(|r| r.feasible) {
            assert!(r.realized_mean.unwrap() >= r.g_bar - EPS_TOL);
            let solo = run_mechanism(&inst, &MechanismParams::new(r.g_bar, order.clone())).unwrap();
            assert_eq!(Some(solo.realized_mean), r.realized_mean);
        }
        assert!(res.first_exceeding(0.01).unwrap() > res.baseline().unwrap());
        assert!(res.tradeoff_rows().iter().all(|r| r.g_bar > res.baseline().unwrap()));
    }
}
