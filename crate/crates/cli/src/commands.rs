//! The pipelines behind the subcommands. Each takes parsed inputs and an output directory,
//! writes its files and returns what it wrote.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use splitfit_core::secant::{simplex_around, StepReport};
use splitfit_core::{
    clever_section, eliminate_linear, error_domain_1d, global_min, iterate, iterate_with_elimination,
    resolve_degenerate, response, scan, scan_follower, CleverSection, Data, Error as CoreError, FollowerModel,
    GridScan, GridSpec, Model, Params, StopReason,
};

use crate::config::{named_values, Config, Engine};
use crate::error::{CliError, Result};
use crate::io::{fmt_num, write_json, write_series, Table};

pub const SERIES_FILE: &str = "data.csv";
pub const TRUTH_FILE: &str = "truth.json";
pub const REPORT_FILE: &str = "fit_report.json";
pub const SCAN_FILE: &str = "scan.csv";
pub const TRACE_FILE: &str = "trace.csv";
pub const ANALYSIS_FILE: &str = "analysis.json";
pub const CURVE_FILE: &str = "compression_curve.csv";

pub fn section_file(parameter: &str) -> String {
    format!("section_{parameter}.csv")
}

fn create_dir(out: &Path) -> Result<()> {
    std::fs::create_dir_all(out).map_err(|e| CliError::config_io(out, e))
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

// ---------------------------------------------------------------------------------------
// simulate

/// Generative parameters written next to simulated data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub model: String,
    pub parameters: Vec<String>,
    pub values: Vec<f64>,
    pub noise: crate::noise::NoiseSpec,
}

pub fn simulate(config: &Config, seed: Option<u64>, out: &Path) -> Result<Data> {
    let model = config.build_model()?;
    let truth = config.truth(model.space())?;
    let p = Params::new(model.space().clone(), truth.clone())?;
    let schedule = config.schedule()?;
    let mut noise = config.noise.clone();
    if let Some(seed) = seed {
        noise.seed = seed;
    }
    let exact = response(&model, &p, &schedule)?;
    let z = noise.generate(exact.len())?;
    let data = Data::new(schedule, exact.iter().zip(&z).map(|(u, z)| u + z).collect())?;

    create_dir(out)?;
    write_series(&out.join(SERIES_FILE), &data)?;
    write_json(
        &out.join(TRUTH_FILE),
        &Truth {
            model: model.name().to_string(),
            parameters: model.space().names().to_vec(),
            values: truth,
            noise,
        },
    )?;
    Ok(data)
}

// ---------------------------------------------------------------------------------------
// engines

/// Raw result of one engine run.
#[derive(Debug, Clone)]
pub struct EngineOutcome {
    /// Full parameter vector of the best point; empty when nothing was evaluated.
    pub solution: Vec<f64>,
    pub merit: f64,
    /// Residual evaluations (secant) or eliminations (grid) performed by the engine.
    pub evaluations: usize,
    pub iterations: usize,
    pub stop: Option<StopReason>,
    pub failure: Option<String>,
    pub scan: Option<GridScan<f64>>,
    pub trace: Vec<StepReport<f64>>,
    /// Model indices of the coordinates the secant trace records.
    pub free: Vec<usize>,
}

fn start_and_steps(config: &Config, model: &Model, free: &[usize], data: &Data) -> Result<(Vec<f64>, Vec<f64>)> {
    let space = model.space();
    let mut start = named_values(space, &config.solver.start, "solver.start")?;
    let steps = named_values(space, &config.solver.step, "solver.step")?;
    let split = space.split();
    if start.iter().enumerate().any(|(i, v)| v.is_none() && split.is_linear(i)) && free.len() == space.len() {
        let mut nonlinear = Vec::new();
        for &i in split.nonlinear() {
            nonlinear.push(start[i].ok_or_else(|| CliError::Config(format!("solver.start lacks {}", space.name(i))))?);
        }
        let e = eliminate_linear(model, &nonlinear, data, config.rank_tol())?;
        for (i, v) in start.iter_mut().enumerate() {
            v.get_or_insert(e.parameters.get(i));
        }
    }
    let mut center = Vec::with_capacity(free.len());
    let mut step = Vec::with_capacity(free.len());
    for &i in free {
        let x = start[i].ok_or_else(|| CliError::Config(format!("solver.start lacks {}", space.name(i))))?;
        center.push(x);
        step.push(steps[i].unwrap_or(if x == 0.0 { 0.1 } else { 0.1 * x.abs() }));
    }
    Ok((center, step))
}

/// Runs one engine on `model`; solver failures come back as an outcome with `failure` set.
pub fn run_engine(model: &Model, data: &Data, config: &Config, engine: Engine, seed: Option<u64>) -> Result<EngineOutcome> {
    let space = model.space();
    if engine == Engine::Grid {
        let spec = config.grid_spec(space)?;
        let sc = scan(model, data, &spec, config.rank_tol())?;
        let (p, merit) = global_min(&sc)?;
        return Ok(EngineOutcome {
            solution: p.into_values(),
            merit,
            evaluations: sc.evaluations,
            iterations: 0,
            stop: None,
            failure: None,
            scan: Some(sc),
            trace: Vec::new(),
            free: Vec::new(),
        });
    }

    let mut opts = config.solver.options;
    if let Some(seed) = seed {
        opts.seed = seed;
    }
    let free: Vec<usize> = match engine {
        Engine::SecantEliminated => space.split().nonlinear().to_vec(),
        _ => (0..space.len()).collect(),
    };
    let (center, steps) = start_and_steps(config, model, &free, data)?;
    let initial = simplex_around(&center, &steps);
    let run = match engine {
        Engine::SecantEliminated => iterate_with_elimination(model, data, initial, &opts),
        _ => iterate(model, data, initial, &opts),
    };
    match run {
        Ok(fit) => Ok(EngineOutcome {
            solution: fit.solution.into_values(),
            merit: fit.merit,
            evaluations: fit.evaluations,
            iterations: fit.iterations,
            stop: Some(fit.stop),
            failure: None,
            scan: None,
            trace: fit.trace,
            free,
        }),
        Err(CoreError::SolverFailure {
            reason,
            best,
            best_merit,
            iterations,
            evaluations,
        }) => {
            let solution = if best.is_empty() || engine != Engine::SecantEliminated {
                best
            } else {
                eliminate_linear(model, &best, data, opts.rank_tol)
                    .map(|e| e.parameters.into_values())
                    .unwrap_or_default()
            };
            Ok(EngineOutcome {
                solution,
                merit: best_merit,
                evaluations,
                iterations,
                stop: None,
                failure: Some(reason),
                scan: None,
                trace: Vec::new(),
                free,
            })
        }
        Err(e) => Err(e.into()),
    }
}

// ---------------------------------------------------------------------------------------
// fit report

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Ok,
    Failed,
}

/// Error domain of one parameter: the sublevel set of its follower clever section at `‖z‖²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterError {
    pub parameter: String,
    pub level: f64,
    pub intervals: Vec<[f64; 2]>,
    pub half_width: f64,
    pub holds_minimizer: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasinJumps {
    pub parameter: String,
    /// Present when the real-life section was computed (grid engine).
    pub real_life: Option<bool>,
    pub follower: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub model: String,
    pub engine: Engine,
    pub status: Status,
    pub failure: Option<String>,
    pub parameters: Vec<String>,
    pub solution: Vec<f64>,
    pub merit: Option<f64>,
    pub noise_norm_sq: Option<f64>,
    pub evaluations: usize,
    pub iterations: usize,
    pub stop: Option<StopReason>,
    pub error_intervals: Vec<ParameterError>,
    pub basin_jumps: Vec<BasinJumps>,
}

impl FitReport {
    pub fn value(&self, name: &str) -> Option<f64> {
        let i = self.parameters.iter().position(|p| p == name)?;
        self.solution.get(i).copied()
    }

    fn p_min(&self, model: &Model) -> Result<Params> {
        if self.model != model.name() || self.parameters != model.space().names() {
            return Err(CliError::Config(format!(
                "fit report is for model {}, configuration builds {}",
                self.model,
                model.name()
            )));
        }
        if self.solution.is_empty() {
            return Err(CliError::Data("fit report holds no solution".into()));
        }
        Ok(Params::new(model.space().clone(), self.solution.clone())?)
    }
}

/// Follower quantities at `p_min`: noise vector, follower scan and per-axis error domains.
struct FollowerView {
    follower: FollowerModel<f64>,
    sections: Vec<CleverSection<f64>>,
    errors: Vec<ParameterError>,
    noise_norm_sq: f64,
}

fn follower_view(model: &Model, data: &Data, grid: Option<&GridSpec<f64>>, rank_tol: f64, p_min: &Params) -> Result<FollowerView> {
    let follower = FollowerModel::new(model.clone(), p_min.clone(), data)?;
    let z = follower.noise_decompose(data)?;
    let mut sections = Vec::new();
    let mut errors = Vec::new();
    if let Some(grid) = grid {
        let sc = scan_follower(&follower, grid, rank_tol)?;
        for axis in &grid.axes {
            let section = clever_section(&sc, axis.parameter_index)?;
            let domain = error_domain_1d(&section, z.norm_sq);
            errors.push(ParameterError {
                parameter: model.space().name(axis.parameter_index).to_string(),
                level: domain.level,
                intervals: domain.intervals.iter().map(|&(a, b)| [a, b]).collect(),
                half_width: domain.half_width,
                holds_minimizer: domain.containing_minimizer.is_some(),
            });
            sections.push(section);
        }
    }
    Ok(FollowerView {
        follower,
        sections,
        errors,
        noise_norm_sq: z.norm_sq,
    })
}

fn real_sections(sc: &GridScan<f64>) -> Result<Vec<CleverSection<f64>>> {
    Ok(sc.grid.axes.iter().map(|a| clever_section(sc, a.parameter_index)).collect::<std::result::Result<_, _>>()?)
}

fn scan_table(sc: &GridScan<f64>, model: &Model) -> Table {
    let mut header: Vec<String> = model.space().names().to_vec();
    header.extend(["merit", "effective_rank", "failed"].map(String::from));
    let mut table = Table::new(header);
    let n = model.space().len();
    for node in &sc.nodes {
        let mut row: Vec<String> = if node.failed() {
            let mut v = vec!["NaN".to_string(); n];
            for (a, (axis, &k)) in sc.grid.axes.iter().zip(&node.index).enumerate() {
                v[axis.parameter_index] = fmt_num(sc.axis_values[a][k]);
            }
            v
        } else {
            node.parameters.iter().map(|&x| fmt_num(x)).collect()
        };
        row.push(fmt_num(node.value));
        row.push(node.effective_rank.to_string());
        row.push(u8::from(node.failed()).to_string());
        table.rows.push(row);
    }
    table
}

fn trace_table(outcome: &EngineOutcome, model: &Model) -> Table {
    let names = model.space().names();
    let mut header: Vec<String> = vec!["iteration".into()];
    header.extend(outcome.free.iter().map(|&i| names[i].clone()));
    header.extend(
        ["merit_before", "merit_after", "best_merit", "step_norm", "action", "projected"].map(String::from),
    );
    let mut table = Table::new(header);
    for step in &outcome.trace {
        let mut row = vec![step.iteration.to_string()];
        row.extend(step.new_point.iter().map(|&x| fmt_num(x)));
        row.extend([step.merit_before, step.merit_after, step.best_merit, step.step_norm].map(fmt_num));
        let action = serde_json::to_value(step.action).ok().and_then(|v| v.as_str().map(String::from));
        row.push(action.unwrap_or_default());
        row.push(u8::from(step.projected).to_string());
        table.rows.push(row);
    }
    table
}

/// Fits `data`, writes the report plus the scan (grid) or trace (secant) table.
///
/// On solver failure the report with the best point found is still written and the error
/// is returned afterwards.
pub fn fit(config: &Config, data: &Data, engine: Engine, seed: Option<u64>, out: &Path) -> Result<FitReport> {
    let model = config.build_model()?;
    let outcome = run_engine(&model, data, config, engine, seed)?;
    fit_with(config, &model, data, engine, outcome, out)
}

/// Report-writing half of [`fit`] for an engine outcome computed elsewhere.
pub fn fit_with(config: &Config, model: &Model, data: &Data, engine: Engine, outcome: EngineOutcome, out: &Path) -> Result<FitReport> {
    let space = model.space();
    let mut report = FitReport {
        model: model.name().to_string(),
        engine,
        status: if outcome.failure.is_some() { Status::Failed } else { Status::Ok },
        failure: outcome.failure.clone(),
        parameters: space.names().to_vec(),
        solution: outcome.solution.clone(),
        merit: finite(outcome.merit),
        noise_norm_sq: None,
        evaluations: outcome.evaluations,
        iterations: outcome.iterations,
        stop: outcome.stop,
        error_intervals: Vec::new(),
        basin_jumps: Vec::new(),
    };

    if outcome.failure.is_none() {
        let p_min = Params::new(space.clone(), outcome.solution.clone())?;
        let grid = match &config.grid {
            Some(_) => Some(config.grid_spec(space)?),
            None => None,
        };
        let view = follower_view(model, data, grid.as_ref(), config.rank_tol(), &p_min)?;
        report.noise_norm_sq = finite(view.noise_norm_sq);
        let real = match &outcome.scan {
            Some(sc) => Some(real_sections(sc)?),
            None => None,
        };
        report.basin_jumps = view
            .sections
            .iter()
            .enumerate()
            .map(|(k, s)| BasinJumps {
                parameter: space.name(s.parameter_index).to_string(),
                real_life: real.as_ref().map(|r| r[k].has_basin_jump()),
                follower: s.has_basin_jump(),
            })
            .collect();
        report.error_intervals = view.errors;
    }

    create_dir(out)?;
    write_json(&out.join(REPORT_FILE), &report)?;
    match &outcome.scan {
        Some(sc) if !config.output.skip_scan_table => scan_table(sc, model).write(&out.join(SCAN_FILE))?,
        Some(_) => {}
        None => trace_table(&outcome, model).write(&out.join(TRACE_FILE))?,
    }
    match outcome.failure {
        Some(reason) => Err(CliError::Solver(format!("{reason}; best point written to {}", out.join(REPORT_FILE).display()))),
        None => Ok(report),
    }
}

// ---------------------------------------------------------------------------------------
// sections

/// Writes the real-life and follower clever section of every grid axis parameter.
pub fn sections(config: &Config, data: &Data, report: &FitReport, out: &Path) -> Result<Vec<PathBuf>> {
    let model = config.build_model()?;
    let p_min = report.p_min(&model)?;
    let grid = config.grid_spec(model.space())?;
    let real = real_sections(&scan(&model, data, &grid, config.rank_tol())?)?;
    let view = follower_view(&model, data, Some(&grid), config.rank_tol(), &p_min)?;

    create_dir(out)?;
    let mut written = Vec::new();
    for (r, f) in real.iter().zip(&view.sections) {
        let mut table = Table::new(["x_real_life", "real_life", "x_follower", "follower"]);
        for (a, b) in r.samples.iter().zip(&f.samples) {
            table.push_numbers([a.x, a.value, b.x, b.value]);
        }
        let path = out.join(section_file(model.space().name(r.parameter_index)));
        table.write(&path)?;
        written.push(path);
    }
    Ok(written)
}

// ---------------------------------------------------------------------------------------
// analyze

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeCheck {
    pub point: Vec<f64>,
    pub merit: f64,
    pub follower_merit: f64,
    /// Band `‖z‖² ± 2‖h′‖‖z‖` for `F − F′`.
    pub band: [f64; 2],
    pub in_band: bool,
    /// `|F − (F′ − 2h′·z + ‖z‖²)|`.
    pub identity_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Analysis {
    pub model: String,
    pub parameters: Vec<String>,
    pub p_min: Vec<f64>,
    /// `u(p_min)`.
    pub fitted: Vec<f64>,
    /// `z = f − u(p_min)`.
    pub noise: Vec<f64>,
    pub noise_norm_sq: f64,
    pub error_intervals: Vec<ParameterError>,
    /// `|p_min − truth|` when the configuration carries a truth vector.
    pub true_error: Option<Vec<f64>>,
    pub probes: Vec<ProbeCheck>,
    pub max_identity_residual: f64,
}

fn default_probes(p_min: &Params, grid: Option<&GridSpec<f64>>) -> Vec<Vec<f64>> {
    let mut probes = vec![p_min.values().to_vec()];
    for axis in grid.map(|g| g.axes.as_slice()).unwrap_or_default() {
        for x in [axis.lo, axis.hi] {
            let mut p = p_min.values().to_vec();
            p[axis.parameter_index] = x;
            probes.push(p);
        }
    }
    probes
}

pub fn analyze(config: &Config, data: &Data, report: &FitReport, out: &Path) -> Result<Analysis> {
    let model = config.build_model()?;
    let space = model.space();
    let p_min = report.p_min(&model)?;
    let grid = match &config.grid {
        Some(_) => Some(config.grid_spec(space)?),
        None => None,
    };
    let view = follower_view(&model, data, grid.as_ref(), config.rank_tol(), &p_min)?;
    let z = view.follower.noise_decompose(data)?;

    let probes: Vec<Vec<f64>> = if config.analysis.probes.is_empty() {
        default_probes(&p_min, grid.as_ref())
    } else {
        config
            .analysis
            .probes
            .iter()
            .map(|m| {
                let named = named_values(space, m, "analysis.probes")?;
                Ok(named.iter().zip(p_min.values()).map(|(v, &p)| v.unwrap_or(p)).collect())
            })
            .collect::<Result<_>>()?
    };
    let mut checks = Vec::new();
    for point in probes {
        let p = Params::new(space.clone(), point.clone())?;
        let rel = view.follower.merit_relation_check(data, &p)?;
        let band = view.follower.similarity_band(&z, &p)?;
        checks.push(ProbeCheck {
            point,
            merit: rel.lhs,
            follower_merit: rel.follower,
            band: [band.lower, band.upper],
            in_band: band.contains(rel.lhs - rel.follower),
            identity_residual: rel.gap(),
        });
    }
    let true_error = if config.model.truth.is_empty() {
        None
    } else {
        let truth = config.truth(space)?;
        Some(p_min.values().iter().zip(&truth).map(|(p, t)| (p - t).abs()).collect())
    };

    let analysis = Analysis {
        model: model.name().to_string(),
        parameters: space.names().to_vec(),
        p_min: p_min.values().to_vec(),
        fitted: view.follower.simulated_data().values().to_vec(),
        noise: z.entries.clone(),
        noise_norm_sq: z.norm_sq,
        error_intervals: view.errors,
        true_error,
        max_identity_residual: checks.iter().map(|c| c.identity_residual).fold(0.0, f64::max),
        probes: checks,
    };
    create_dir(out)?;
    write_json(&out.join(ANALYSIS_FILE), &analysis)?;
    Ok(analysis)
}

// ---------------------------------------------------------------------------------------
// compression curve

/// One identified point per stage: the section sample nearest to the long-stage value.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub stage: usize,
    pub parameters: Vec<f64>,
    pub merit: f64,
    /// Distance between the long-stage value and the sample used.
    pub gap: f64,
}

/// Resolves every stage at the long-stage value of the (single) grid axis parameter.
pub fn compression_curve(config: &Config, stages: &[Data], long: &FitReport, out: &Path) -> Result<Vec<CurvePoint>> {
    let model = config.build_model()?;
    let space = model.space();
    long.p_min(&model)?;
    let grid = config.grid_spec(space)?;
    let [axis] = grid.axes.as_slice() else {
        return Err(CliError::Config("compression-curve needs a grid with exactly one axis".into()));
    };
    let name = space.name(axis.parameter_index);
    let known = long
        .value(name)
        .ok_or_else(|| CliError::Data(format!("fit report has no value for {name}")))?;
    if stages.is_empty() {
        return Err(CliError::Data("no stage data given".into()));
    }

    let mut points = Vec::new();
    for (k, data) in stages.iter().enumerate() {
        let section = clever_section(&scan(&model, data, &grid, config.rank_tol())?, axis.parameter_index)?;
        let resolved = resolve_degenerate(&section, known).map_err(|e| match e {
            CoreError::OutsideSampledRange { .. } => CliError::Config(format!("stage {}: {name}: {e}", k + 1)),
            e => e.into(),
        })?;
        points.push(CurvePoint {
            stage: k + 1,
            parameters: resolved.parameters.values().to_vec(),
            merit: section.samples[resolved.sample_index].value,
            gap: resolved.gap,
        });
    }

    let mut header = vec!["stage".to_string()];
    header.extend(space.names().iter().cloned());
    header.extend(["merit", "gap"].map(String::from));
    let mut table = Table::new(header);
    for p in &points {
        let mut row = vec![p.stage.to_string()];
        row.extend(p.parameters.iter().map(|&x| fmt_num(x)));
        row.extend([fmt_num(p.merit), fmt_num(p.gap)]);
        table.rows.push(row);
    }
    create_dir(out)?;
    table.write(&out.join(CURVE_FILE))?;
    Ok(points)
}
