use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use cpm_core::experiment::{sweep, GridSpec, SweepSpec};
use cpm_core::io::{self, Record};
use cpm_core::mechanism::ProbeFault;
use cpm_core::oracles::{self, PropertySuiteConfig, RandomInstanceSpec, SuiteOptions};
use cpm_core::ordering::{make_order, reorder_experiment, OrderingStrategy, ReorderSpec, DEFAULT_CANDIDATES};
use cpm_core::simgen::{generate_instance, perturb_preferences, SimConfig};
use cpm_core::{compute_metrics, Instance, MechanismParams, MechanismRunner, EPS_TOL};

use crate::config::Config;
use crate::{Command, GridArgs, OrderArg};

/// Raised when an oracle suite reports a failure.
#[derive(Debug)]
pub struct OracleFailure(pub usize);

impl fmt::Display for OracleFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} oracle check(s) failed", self.0)
    }
}

impl std::error::Error for OracleFailure {}

pub fn run(cmd: &Command, cfg: &Config) -> Result<()> {
    match cmd {
        Command::Gen(a) => {
            let out: PathBuf = cfg
                .pick(a.out.clone(), "out")?
                .ok_or_else(|| anyhow!("--out is required"))?;
            let sim = SimConfig {
                n: cfg.pick(a.n, "n")?.ok_or_else(|| anyhow!("--n is required"))?,
                rho_p: cfg.pick(a.rho_p, "rho_p")?.unwrap_or(0.0),
                rho_op: cfg.pick(a.rho_op, "rho_op")?.unwrap_or(0.0),
                truncation_k: cfg.pick(a.truncation, "truncation")?.filter(|&k| k > 0),
                seed: cfg.pick(a.seed, "seed")?.unwrap_or(0),
            };
            let inst = io::quantize_instance(&generate_instance(&sim)?)?;
            io::write_bundle(&inst, &out)?;
            let g_max = MechanismRunner::new(&inst)?.g_max();
            println!(
                "n={} locations={} g_max={} seed={}",
                inst.n(),
                inst.num_locations(),
                io::fmt_g12(g_max),
                sim.seed
            );
            Ok(())
        }
        Command::Gmax(a) => {
            let inst = load(cfg, a.instance.clone())?;
            println!("{}", io::fmt_g12(MechanismRunner::new(&inst)?.g_max()));
            Ok(())
        }
        Command::Assign(a) => {
            let inst = load(cfg, a.instance.clone())?;
            let runner = MechanismRunner::new(&inst)?;
            let mut g_bar: f64 = cfg
                .pick(a.g_bar, "g_bar")?
                .ok_or_else(|| anyhow!("--g-bar is required"))?;
            if cfg.flag(a.clamp_to_gmax, "clamp_to_gmax")? {
                g_bar = g_bar.min(runner.g_max());
            }
            let strategy = order_strategy(cfg, &a.order, &inst)?;
            let order = make_order(&inst, &strategy, g_bar)?;
            let tolerance = cfg.pick(a.tolerance, "tolerance")?.unwrap_or(EPS_TOL);
            let out = runner.run(&MechanismParams::new(g_bar, order).with_tolerance(tolerance))?;
            let matching_path = cfg
                .pick(a.matching.clone(), "matching")?
                .unwrap_or_else(|| "matching.csv".into());
            let trace_path = cfg.pick(a.trace.clone(), "trace")?.unwrap_or_else(|| "trace.csv".into());
            write(&matching_path, &io::matching_csv(&out.matching, &inst))?;
            write(&trace_path, &io::records_text(&io::trace_records(&out.trace, &inst)))?;
            let metrics = compute_metrics(&out.matching, &inst, 3);
            println!(
                "g_bar={} g_max={} realized_mean={} top3={} holds={} probes={}",
                io::fmt_g12(g_bar),
                io::fmt_g12(out.trace.g_max),
                io::fmt_g12(out.realized_mean),
                io::fmt_g12(metrics.top_k_proportion),
                out.trace.held_agents().len(),
                out.trace.probe_count()
            );
            Ok(())
        }
        Command::Sweep(a) => {
            let inst = load(cfg, a.instance.clone())?;
            let spec = SweepSpec {
                grid: grid_spec(cfg, &a.grid)?,
                order: order_strategy(cfg, &a.order, &inst)?,
                k: cfg.pick(a.k, "k")?.unwrap_or(3),
            };
            let res = sweep(&inst, &spec)?;
            emit(cfg.pick(a.out.clone(), "out")?, &io::sweep_csv(&res))
        }
        Command::Verify(a) => {
            let (tolerance, fault) = match cfg.pick(a.self_test.clone(), "self_test")?.as_deref() {
                None => (EPS_TOL, None),
                Some("sign-flip") => (EPS_TOL, Some(ProbeFault::SignFlip)),
                Some("omit-held") => (EPS_TOL, Some(ProbeFault::OmitHeldAgents)),
                Some(other) => match other.strip_prefix("tolerance=") {
                    Some(t) => (t.parse().with_context(|| format!("bad tolerance {t:?}"))?, None),
                    None => bail!("unknown self-test {other:?}"),
                },
            };
            let defaults = RandomInstanceSpec::default();
            let prop = PropertySuiteConfig {
                instances: cfg.pick(a.instances, "instances")?.unwrap_or(100),
                seed: cfg.pick(a.seed, "seed")?.unwrap_or(0),
                spec: RandomInstanceSpec {
                    max_agents: cfg.pick(a.max_n, "max_n")?.unwrap_or(defaults.max_agents),
                    max_locations: cfg.pick(a.max_locations, "max_locations")?.unwrap_or(defaults.max_locations),
                    max_capacity: cfg.pick(a.max_capacity, "max_capacity")?.unwrap_or(defaults.max_capacity),
                    ..defaults
                },
                tolerance,
                fault,
                ..Default::default()
            };
            verify(tolerance, fault, &prop)
        }
        Command::Reorder(a) => {
            let inst = load(cfg, a.instance.clone())?;
            let runner = MechanismRunner::new(&inst)?;
            let seed = cfg.pick(a.seed, "seed")?.unwrap_or(0);
            let mut pseudo = Vec::new();
            if let Some(noise) = cfg.pick(a.pseudo_noise, "pseudo_noise")? {
                let pseudo_seed = cfg.pick(a.pseudo_seed, "pseudo_seed")?.unwrap_or(seed);
                pseudo.push((String::new(), perturb_preferences(&inst, noise, pseudo_seed)));
            }
            let spec = ReorderSpec {
                g_grid: grid_spec(cfg, &a.grid)?.resolve(runner.g_max())?,
                random_orders: cfg.pick(a.orders, "orders")?.unwrap_or(DEFAULT_CANDIDATES),
                seed,
                include_variance: !cfg.flag(a.no_variance, "no_variance")?,
                pseudo,
            };
            let table = reorder_experiment(&inst, &spec)?;
            emit(cfg.pick(a.out.clone(), "out")?, &io::reorder_csv(&table))
        }
    }
}

fn load(cfg: &Config, flag: Option<PathBuf>) -> Result<Instance> {
    let path: PathBuf = cfg
        .pick(flag, "instance")?
        .ok_or_else(|| anyhow!("an instance bundle path is required"))?;
    Ok(io::read_bundle(&path)?)
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn emit(path: Option<PathBuf>, text: &str) -> Result<()> {
    match path {
        Some(p) => write(&p, text),
        None => Ok(std::io::stdout().lock().write_all(text.as_bytes())?),
    }
}

fn grid_spec(cfg: &Config, a: &GridArgs) -> Result<GridSpec> {
    let list: Option<String> = cfg.pick(a.grid.clone(), "grid")?;
    let range: Option<String> = cfg.pick(a.grid_range.clone(), "grid_range")?;
    let steps: Option<usize> = cfg.pick(a.grid_steps, "grid_steps")?;
    match (list, range, steps) {
        (Some(l), None, None) => Ok(GridSpec::Explicit(
            l.split(',')
                .map(|x| x.trim().parse::<f64>().with_context(|| format!("bad grid value {x:?}")))
                .collect::<Result<_>>()?,
        )),
        (None, Some(r), None) => {
            let parts: Vec<f64> = r
                .split(':')
                .map(|x| x.trim().parse::<f64>().with_context(|| format!("bad grid range {r:?}")))
                .collect::<Result<_>>()?;
            let [start, stop, step] = parts[..] else {
                bail!("grid range must be start:stop:step, got {r:?}");
            };
            Ok(GridSpec::Range { start, stop, step })
        }
        (None, None, steps) => Ok(GridSpec::UpToMax {
            steps: steps.unwrap_or(cpm_core::experiment::DEFAULT_GRID_STEPS),
        }),
        _ => bail!("give at most one of --grid, --grid-range, --grid-steps"),
    }
}

fn order_strategy(cfg: &Config, a: &OrderArg, inst: &Instance) -> Result<OrderingStrategy> {
    let spec: Option<String> = cfg.pick(a.order.clone(), "order")?;
    parse_order(spec.as_deref().unwrap_or("identity"), inst)
}

fn parse_order(spec: &str, inst: &Instance) -> Result<OrderingStrategy> {
    let n = inst.n();
    let mut parts = spec.split(':');
    let head = parts.next().unwrap_or_default().trim();
    let mut params = std::collections::BTreeMap::new();
    for p in parts {
        let (k, v) = p
            .split_once('=')
            .ok_or_else(|| anyhow!("order parameter {p:?} must look like key=value"))?;
        params.insert(k.trim(), v.trim());
    }
    let num = |key: &str| -> Result<Option<f64>> {
        params
            .get(key)
            .map(|v| v.parse::<f64>().with_context(|| format!("order parameter {key}={v}")))
            .transpose()
    };
    let int = |key: &str| -> Result<Option<u64>> {
        params
            .get(key)
            .map(|v| v.parse::<u64>().with_context(|| format!("order parameter {key}={v}")))
            .transpose()
    };
    Ok(match head {
        "identity" => OrderingStrategy::Given((0..n).collect()),
        "random" => OrderingStrategy::Random {
            seed: int("seed")?.unwrap_or(0),
        },
        "increasing_variance" => OrderingStrategy::IncreasingVariance,
        "decreasing_variance" => OrderingStrategy::DecreasingVariance,
        "pseudo" => {
            let seed = int("seed")?.unwrap_or(0);
            OrderingStrategy::PseudoInferred {
                pseudo: perturb_preferences(inst, num("noise")?.unwrap_or(0.0).max(0.0), seed),
                candidate_count: int("candidates")?.unwrap_or(DEFAULT_CANDIDATES as u64) as usize,
                seed,
            }
        }
        list => {
            let order = list
                .split(',')
                .map(|x| match x.trim().parse::<usize>() {
                    Ok(a) if (1..=n).contains(&a) => Ok(a - 1),
                    _ => Err(anyhow!("order entry {x:?} is not an agent number in 1..={n}")),
                })
                .collect::<Result<Vec<_>>>()?;
            OrderingStrategy::Given(order)
        }
    })
}

fn verify(tolerance: f64, fault: Option<ProbeFault>, prop: &PropertySuiteConfig) -> Result<()> {
    let suite = oracles::verify_mechanism_example_suite(&SuiteOptions {
        tolerance,
        fault,
        ..Default::default()
    });
    let report = oracles::run_property_suite(prop)?;
    let mut records = Vec::new();
    let mut failures = 0;
    let mut push = |name: &str, pass: bool, detail: &str| {
        records.push(Record {
            step: records.len() + 1,
            agent: None,
            location: Some(name.to_string()),
            value: None,
            verdict: if pass { "pass" } else { "fail" }.into(),
        });
        if !pass {
            failures += 1;
        }
        eprintln!("{name}: {} ({detail})", if pass { "PASS" } else { "FAIL" });
    };
    for item in &suite.items {
        push(item.name, item.pass, &item.detail);
    }
    let runs = format!("{} instances, {} runs", report.instances, report.runs);
    let first = |v: &[String]| v.first().cloned().unwrap_or_else(|| runs.clone());
    push("property_run_invariants", report.invariant_failures.is_empty(), &first(&report.invariant_failures));
    push("property_constrained_efficiency", report.efficiency_failures.is_empty(), &first(&report.efficiency_failures));
    push("property_strategy_proofness", report.manipulations.is_empty(), &first(&report.manipulations));
    print!("{}", io::records_text(&records));
    if failures > 0 {
        return Err(OracleFailure(failures).into());
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use cpm_core::fixtures;

    #[test]
    fn order_specs() {
        let inst = fixtures::two_agent_example();
        assert_eq!(parse_order("2,1", &inst).unwrap(), OrderingStrategy::Given(vec![1, 0]));
        assert_eq!(parse_order("identity", &inst).unwrap(), OrderingStrategy::Given(vec![0, 1]));
        assert_eq!(parse_order("random:seed=3", &inst).unwrap(), OrderingStrategy::Random { seed: 3 });
        assert!(parse_order("0,1", &inst).is_err());
        assert!(parse_order("random:seed", &inst).is_err());
        assert!(matches!(
            parse_order("pseudo:noise=0:candidates=5", &inst).unwrap(),
            OrderingStrategy::PseudoInferred { candidate_count: 5, .. }
        ));
    }

    #[test]
    fn grid_flags_are_exclusive() {
        let cfg = Config::default();
        let both = GridArgs {
            grid: Some("0.1".into()),
            grid_range: Some("0:1:0.5".into()),
            grid_steps: None,
        };
        assert!(grid_spec(&cfg, &both).is_err());
        let range = GridArgs {
            grid: None,
            grid_range: Some("0:1:0.5".into()),
            grid_steps: None,
        };
        assert_eq!(grid_spec(&cfg, &range).unwrap().resolve(1.0).unwrap(), vec![0.0, 0.5, 1.0]);
    }
}
