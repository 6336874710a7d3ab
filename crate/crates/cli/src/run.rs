//! `identify`: dispatch a config to the estimators and collect a run record.

use std::fs::File;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sysid_core::altmin::{self, AltMinOptions};
use sysid_core::asymptotics::expansion_validation;
use sysid_core::full_obs::{self, GdOptions};
use sysid_core::partial_obs::{self, DecisionPoint, PgdOptions};
use sysid_core::realization::{self, ImpulseResponse, ImpulseResponseJson, SystemRealization, SILVERMAN_SHIFTS};
use sysid_core::{io, linalg, DescentReport, Matrix, ObservedData, Termination, Trajectory, Vector, VERSION};

use crate::config::{LoadedConfig, Method};
use crate::simulate::{observation_matrix, synthesize};

const DEFAULT_RANK_TOL: f64 = 1e-9;

/// One estimator run at one `(gamma, mu)` point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunEntry {
    pub method: Method,
    pub gamma: Option<f64>,
    pub mu: Option<f64>,
    pub rho: Option<f64>,
    #[serde(rename = "A")]
    pub a: Option<Vec<Vec<f64>>>,
    pub termination: Option<Termination>,
    pub iterations: Option<usize>,
    pub objective: Vec<f64>,
    pub grad_norm: Vec<f64>,
    /// Final gradient norm or stationarity residual.
    pub residual: Option<f64>,
    /// Frobenius distance to the ground-truth matrix, when one is known.
    pub error: Option<f64>,
    #[serde(default)]
    pub details: Value,
}

impl RunEntry {
    fn new(method: Method, gamma: Option<f64>, mu: Option<f64>, rho: Option<f64>) -> Self {
        Self {
            method,
            gamma,
            mu,
            rho,
            a: None,
            termination: None,
            iterations: None,
            objective: Vec::new(),
            grad_norm: Vec::new(),
            residual: None,
            error: None,
            details: Value::Null,
        }
    }

    fn with_estimate(mut self, a: &Matrix) -> Self {
        self.a = Some(linalg::to_rows(a));
        self
    }

    fn with_report(mut self, report: &DescentReport) -> Self {
        self.termination = Some(report.termination);
        self.iterations = Some(report.iterations());
        self.objective = report.objective.clone();
        self.grad_norm = report.grad_norm.clone();
        self.residual = report.grad_norm.last().copied();
        self
    }

    pub fn converged(&self) -> bool {
        self.termination.map_or(true, |t| t == Termination::Converged)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub schema_version: u32,
    pub library_version: String,
    pub method: Method,
    pub seed: u64,
    pub config: crate::config::ExperimentConfig,
    pub runs: Vec<RunEntry>,
    #[serde(default)]
    pub diagnostics: Value,
    /// The only field that varies between identical runs.
    pub wall_clock_seconds: f64,
}

impl RunRecord {
    pub fn converged(&self) -> bool {
        self.runs.iter().all(RunEntry::converged)
    }
}

fn vectors(vs: &[Vector]) -> Vec<Vec<f64>> {
    vs.iter().map(|v| v.iter().copied().collect()).collect()
}

struct Inputs<'a> {
    cfg: &'a LoadedConfig,
    seed: u64,
}

impl Inputs<'_> {
    fn trajectory(&self) -> Result<Trajectory> {
        let c = &self.cfg.config;
        if let Some(p) = c.data.as_ref().and_then(|d| d.trajectory.as_ref()) {
            let p = self.cfg.resolve(p);
            return io::load_trajectory(&p).with_context(|| format!("reading {}", p.display()));
        }
        match &c.system {
            Some(sys) => Ok(synthesize(sys, self.seed)?.trajectory),
            None => bail!("method `{}` needs `data.trajectory` or `system`", c.method.name()),
        }
    }

    fn observed(&self) -> Result<ObservedData> {
        let c = &self.cfg.config;
        if let Some(data) = &c.data {
            if let Some(p) = &data.observations {
                let csv = self.cfg.resolve(p);
                let sidecar = self.cfg.sidecar_path().expect("observations present");
                return io::load_observed(&csv, &sidecar).with_context(|| format!("reading {}", csv.display()));
            }
            if data.trajectory.is_some() {
                return Ok(ObservedData::from_trajectory(&self.trajectory()?));
            }
        }
        match &c.system {
            Some(sys) => Ok(synthesize(sys, self.seed)?.observed),
            None => bail!(
                "method `{}` needs `data.observations`, `data.trajectory` or `system`",
                c.method.name()
            ),
        }
    }

    fn impulse_response(&self, depth: usize) -> Result<ImpulseResponse> {
        let c = &self.cfg.config;
        if let Some(p) = c.data.as_ref().and_then(|d| d.impulse_response.as_ref()) {
            let p = self.cfg.resolve(p);
            let raw: ImpulseResponseJson =
                serde_json::from_reader(File::open(&p)?).with_context(|| format!("reading {}", p.display()))?;
            return Ok(ImpulseResponse::from_json(&raw)?);
        }
        let Some(sys) = &c.system else {
            bail!("method `{}` needs `data.impulse_response` or `system`", c.method.name());
        };
        let Some(b) = &sys.b else {
            bail!("field `system.B` is required to build an impulse response");
        };
        let real = SystemRealization::new(sys.a.to_matrix("A")?, b.to_matrix("B")?, observation_matrix(sys)?)?;
        Ok(realization::markov_params(&real, 2 * depth + SILVERMAN_SHIFTS)?)
    }

    fn truth(&self) -> Result<Option<Matrix>> {
        let c = &self.cfg.config;
        match (&c.truth, &c.system) {
            (Some(t), _) => Ok(Some(t.to_matrix("truth")?)),
            (None, Some(sys)) => Ok(Some(sys.a.to_matrix("A")?)),
            _ => Ok(None),
        }
    }

    fn init(&self) -> Result<Option<Matrix>> {
        self.cfg.config.params.init.as_ref().map(|m| m.to_matrix("init")).transpose()
    }
}

/// `(gamma, mu)` pairs to run.
fn grid(cfg: &LoadedConfig) -> Vec<(f64, f64)> {
    let p = &cfg.config.params;
    match &cfg.config.sweep {
        None => vec![(p.gamma, p.mu.unwrap_or(p.gamma))],
        Some(s) => match &s.mu {
            Some(mus) => s.gamma.iter().flat_map(|&g| mus.iter().map(move |&m| (g, m))).collect(),
            None => s.gamma.iter().map(|&g| (g, p.mu.unwrap_or(g))).collect(),
        },
    }
}

fn run_point(inputs: &Inputs, traj: Option<&Trajectory>, data: Option<&ObservedData>, gamma: f64, mu: f64) -> Result<RunEntry> {
    let cfg = &inputs.cfg.config;
    let p = &cfg.params;
    let method = cfg.method;
    let full = || RunEntry::new(method, Some(gamma), None, None);
    let partial = || RunEntry::new(method, Some(gamma), Some(mu), None);
    let entry = match method {
        Method::Ls => RunEntry::new(method, None, None, None).with_estimate(&full_obs::least_squares(traj.unwrap())?),
        Method::Ridge => full().with_estimate(&full_obs::ridge(traj.unwrap(), gamma)?),
        Method::Dual => {
            let traj = traj.unwrap();
            let (coeffs, value) = full_obs::dual_solve(traj, gamma)?;
            let mut e = full().with_estimate(&coeffs.reconstruct(traj));
            e.details = json!({ "p": vectors(coeffs.as_slice()), "dual_value": value });
            e
        }
        Method::Gd => {
            let traj = traj.unwrap();
            let defaults = GdOptions::default();
            let opts = GdOptions {
                step: p.step,
                max_iters: p.max_iters.unwrap_or(defaults.max_iters),
                grad_tol: p.grad_tol.unwrap_or(defaults.grad_tol),
                init: inputs.init()?,
            };
            let (a, report) = full_obs::gradient_descent(traj, gamma, &opts)?;
            let mut e = full().with_estimate(&a).with_report(&report);
            e.details = json!({
                "step_bound": full_obs::step_bound(traj, gamma),
                "objective_increases": report.objective_increases,
            });
            e
        }
        Method::Neumann => {
            let order = p.order.unwrap_or(1);
            let mut e = full().with_estimate(&full_obs::neumann_expansion(traj.unwrap(), gamma, order)?);
            e.details = json!({ "order": order });
            e
        }
        Method::Lift => {
            let data = data.unwrap();
            let mut e = full().with_estimate(&partial_obs::lift_estimator(data, gamma)?);
            e.details = json!({ "states": vectors(partial_obs::lifted_states(data)?.states()) });
            e
        }
        Method::Pgd => {
            let data = data.unwrap();
            let defaults = PgdOptions::default();
            let init = inputs.init()?.map(|a| DecisionPoint {
                a,
                ..DecisionPoint::zeros(data.state_dim(), data.horizon())
            });
            let opts = PgdOptions {
                max_iters: p.max_iters.unwrap_or(defaults.max_iters),
                grad_tol: p.grad_tol.unwrap_or(defaults.grad_tol),
                step_rule: p.step_rule.unwrap_or(defaults.step_rule),
                min_step: defaults.min_step,
                init,
            };
            let run = partial_obs::multi_start(data, gamma, mu, &opts, p.starts.unwrap_or(1).max(1), inputs.seed)?;
            let mut e = partial().with_estimate(&run.point.a).with_report(&run.report);
            e.residual = Some(run.stationarity);
            e.details = json!({
                "v": vectors(&run.point.v),
                "states": vectors(&run.states),
                "trust_radius": partial_obs::trust_ball(data, gamma, mu)?,
            });
            e
        }
        Method::Altmin => {
            let data = data.unwrap();
            let defaults = AltMinOptions::default();
            let opts = AltMinOptions {
                max_iters: p.max_iters.unwrap_or(defaults.max_iters),
                grad_tol: p.grad_tol.unwrap_or(defaults.grad_tol),
                init: inputs.init()?,
            };
            let run = altmin::alternate(data, gamma, mu, p.rho, &opts)?;
            let mut e = RunEntry::new(method, Some(gamma), Some(mu), Some(p.rho))
                .with_estimate(&run.a)
                .with_report(&run.report);
            e.residual = Some(run.stationarity);
            e.details = json!({
                "states": vectors(&run.states),
                "a_change": run.report.step,
                "ledger": run.ledger,
            });
            e
        }
        Method::Dualstep => {
            let data = data.unwrap();
            let n = data.state_dim();
            let from = inputs.init()?.unwrap_or_else(|| Matrix::zeros(n, n));
            let mut e = partial().with_estimate(&altmin::dual_control_step(&from, data, gamma, mu)?);
            e.details = json!({ "from": linalg::to_rows(&from) });
            e
        }
        Method::Simulate | Method::Realize | Method::Silverman | Method::Asymptotics => unreachable!(),
    };
    Ok(entry)
}

fn realization_entry(inputs: &Inputs) -> Result<RunEntry> {
    let cfg = &inputs.cfg.config;
    let p = &cfg.params;
    let tol = p.rank_tol.unwrap_or(DEFAULT_RANK_TOL);
    let depth_hint = cfg.system.as_ref().map(|s| s.x.to_vector().len() + 1).unwrap_or(4);
    let g = inputs.impulse_response(p.depth.unwrap_or(depth_hint))?;
    let max_depth = p.depth.unwrap_or_else(|| g.len().saturating_sub(1 + SILVERMAN_SHIFTS) / 2);
    let mut e = RunEntry::new(cfg.method, None, None, None);
    if cfg.method == Method::Silverman {
        e.details = serde_json::to_value(realization::silverman_order(&g, max_depth, tol)?)?;
        return Ok(e);
    }
    let order = match p.order {
        Some(o) => o,
        None => match realization::silverman_order(&g, max_depth, tol)?.order {
            Some(o) => o,
            None => bail!("Hankel ranks did not stabilize up to depth {max_depth}; set `params.order` or supply more Markov parameters"),
        },
    };
    let sys = realization::minimal_realization(&g, order, tol)?;
    let rebuilt = realization::markov_params(&sys, g.len() - 1)?;
    let markov_error = (1..g.len())
        .map(|t| linalg::max_abs(&(g.block(t) - rebuilt.block(t))))
        .fold(0.0, f64::max);
    e = e.with_estimate(&sys.a);
    e.details = json!({
        "order": order,
        "B": linalg::to_rows(&sys.b),
        "C": linalg::to_rows(&sys.c),
        "markov_error": markov_error,
    });
    Ok(e)
}

fn asymptotics_entries(inputs: &Inputs) -> Result<(Vec<RunEntry>, Value)> {
    let cfg = &inputs.cfg.config;
    let Some(sys) = &cfg.system else {
        bail!("method `asymptotics` needs `system` (exact data from A, C, x, T)");
    };
    let Some(sweep) = &cfg.sweep else {
        bail!("method `asymptotics` needs `sweep.gamma`");
    };
    let p = &cfg.params;
    let defaults = AltMinOptions::default();
    let opts = AltMinOptions {
        max_iters: p.max_iters.unwrap_or(defaults.max_iters),
        grad_tol: p.grad_tol.unwrap_or(defaults.grad_tol),
        init: inputs.init()?,
    };
    let abar = sys.a.to_matrix("A")?;
    let diag = expansion_validation(&abar, &observation_matrix(sys)?, &sys.x.to_vector(), sys.horizon, &sweep.gamma, &opts)?;
    let entries = diag
        .points
        .iter()
        .map(|pt| {
            let mut e = RunEntry::new(Method::Asymptotics, Some(pt.gamma), Some(pt.gamma), Some(0.0)).with_estimate(&pt.estimate);
            e.termination = Some(pt.termination);
            e.iterations = Some(pt.iterations);
            e.residual = Some(pt.stationarity);
            e.error = Some(pt.distance_to_min_norm);
            e.details = json!({
                "scaled_deviation": linalg::to_rows(&pt.scaled_deviation),
                "relative_gap": pt.relative_gap,
            });
            e
        })
        .collect();
    let diagnostics = json!({
        "min_norm": linalg::to_rows(&diag.min_norm),
        "A1": diag.a1.as_ref().map(linalg::to_rows),
        "top_gap": diag.top_gap,
        "monotone_distance": diag.monotone_distance,
    });
    Ok((entries, diagnostics))
}

/// Runs the configured method over its `(gamma, mu)` grid on `jobs` worker threads.
pub fn identify(cfg: &LoadedConfig, seed: u64, jobs: usize) -> Result<RunRecord> {
    let start = Instant::now();
    cfg.check_paths()?;
    let inputs = Inputs { cfg, seed };
    let method = cfg.config.method;
    let (runs, diagnostics) = match method {
        Method::Simulate => bail!("method `simulate` is handled by the `simulate` subcommand"),
        Method::Realize | Method::Silverman => (vec![realization_entry(&inputs)?], Value::Null),
        Method::Asymptotics => asymptotics_entries(&inputs)?,
        _ => {
            let traj = method.full_observation().then(|| inputs.trajectory()).transpose()?;
            let data = method.partial_observation().then(|| inputs.observed()).transpose()?;
            let truth = inputs.truth()?;
            let points = grid(cfg);
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(jobs.max(1))
                .build()
                .context("cannot start worker pool")?;
            let mut runs = pool.install(|| {
                points
                    .par_iter()
                    .map(|&(g, m)| {
                        run_point(&inputs, traj.as_ref(), data.as_ref(), g, m)
                            .with_context(|| format!("method `{}` at gamma={g}", method.name()))
                    })
                    .collect::<Result<Vec<_>>>()
            })?;
            if let Some(t) = &truth {
                for e in &mut runs {
                    if let Some(a) = e.a.as_ref().and_then(|rows| linalg::from_rows(rows)) {
                        if a.shape() == t.shape() {
                            e.error = Some((a - t).norm());
                        }
                    }
                }
            }
            (runs, Value::Null)
        }
    };
    let mut config = cfg.config.clone();
    config.seed = Some(seed);
    Ok(RunRecord {
        schema_version: crate::config::SCHEMA_VERSION,
        library_version: VERSION.to_string(),
        method,
        seed,
        config,
        runs,
        diagnostics,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    })
}
