//! Subcommand implementations.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use boro_core::bootstrap::{estimate_disappointment, BootstrapPlan};
use boro_core::divergences::ModelDistance;
use boro_core::engine::SolveSettings;
use boro_core::experiments::{
    newsvendor_loss, newsvendor_sweep, portfolio_loss, portfolio_sweep, ExperimentName,
    NewsvendorSweep, PortfolioRow, PortfolioSweep, ProximityKind, RadiusGrid, SweepRow,
};
use boro_core::io::{fmt12, read_dataset, write_table};
use boro_core::learners::{Formulation, Learner, NnLearner, NwLearner};
use boro_core::model::{Dataset, EmpiricalModel, Loss};
use boro_core::nominal::{nominal_prescribe, Prescription};
use boro_core::robust::{calibrate_radius, min_radii, robust_prescribe, RobustConfig};
use boro_core::smoothers::{bandwidth_rule_of_thumb, Bandwidth, Smoother};
use serde::Serialize;

use crate::config::{LossKind, OneOrMany, RunConfig, Seeds};
use crate::error::CliError;

/// What to run, with the command-specific arguments that are not config keys.
pub enum Job {
    Prescribe(PathBuf),
    Bootstrap(PathBuf, Option<PathBuf>),
    Experiment(Option<String>, Option<PathBuf>),
    Calibrate(Option<PathBuf>, Option<usize>),
}

pub fn dispatch(job: Job, cfg: RunConfig) -> Result<(), CliError> {
    match job {
        Job::Prescribe(data) => prescribe(&data, cfg),
        Job::Bootstrap(data, out) => bootstrap(&data, out.as_deref(), cfg),
        Job::Experiment(name, out) => experiment(name.as_deref(), out, cfg),
        Job::Calibrate(data, n) => calibrate(data.as_deref(), n, cfg),
    }
}

fn log_config(cfg: &RunConfig) {
    eprintln!("resolved config:\n{}", cfg.to_toml().trim_end());
}

fn read_data(path: &Path) -> Result<Dataset, CliError> {
    let file = File::open(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    Ok(read_dataset(std::io::BufReader::new(file))?)
}

fn settings(cfg: &RunConfig) -> SolveSettings {
    let mut s = SolveSettings::default();
    if let Some(it) = cfg.max_iter {
        s.max_iter = it;
    }
    s
}

fn loss_of(kind: LossKind) -> Box<dyn Loss> {
    match kind {
        LossKind::Newsvendor => Box::new(newsvendor_loss()),
        LossKind::Portfolio => Box::new(portfolio_loss()),
    }
}

fn check_loss(loss: &dyn Loss, data: &Dataset) -> Result<(), CliError> {
    match loss.dim_y() {
        Some(k) if k != data.dim_y() => Err(boro_core::Error::DimensionMismatch {
            expected: k,
            got: data.dim_y(),
        }
        .into()),
        _ => Ok(()),
    }
}

fn context(cfg: &RunConfig, data: &Dataset) -> Result<Vec<f64>, CliError> {
    let x = cfg.context.clone().ok_or_else(|| {
        CliError::Config("a context is required (--context or the `context` key)".into())
    })?;
    if x.len() != data.dim_x() {
        return Err(boro_core::Error::DimensionMismatch {
            expected: data.dim_x(),
            got: x.len(),
        }
        .into());
    }
    Ok(x)
}

/// Learner from the config, filling defaults into `cfg`.
///
/// Defaults: Nadaraya-Watson with a Gaussian smoother, or nearest neighbors
/// with the naive smoother and Mahalanobis proximity; rule-of-thumb bandwidth
/// and `k = round(√n)`.
fn learner(cfg: &mut RunConfig, data: &Dataset) -> Result<Learner, CliError> {
    let f = *cfg.formulation.get_or_insert(Formulation::Nw);
    let smoother = *cfg.smoother.get_or_insert(match f {
        Formulation::Nw => Smoother::Gaussian,
        Formulation::Nn => Smoother::Naive,
    });
    let h = match cfg.bandwidth {
        Some(h) => Bandwidth::new(h)?,
        None => bandwidth_rule_of_thumb(data)?,
    };
    cfg.bandwidth = Some(h.value());
    Ok(match f {
        Formulation::Nw => Learner::Nw(NwLearner::new(smoother, h)),
        Formulation::Nn => {
            let k = *cfg
                .k
                .get_or_insert(((data.n() as f64).sqrt().round() as usize).max(1));
            if k == 0 || k > data.n() {
                return Err(CliError::Config(format!(
                    "k must lie in 1..={}, got {k}",
                    data.n()
                )));
            }
            let proximity = cfg
                .proximity
                .get_or_insert(ProximityKind::Mahalanobis)
                .fit(data)?;
            Learner::Nn(NnLearner::new(smoother, h, k, proximity))
        }
    })
}

fn distance(cfg: &mut RunConfig) -> Result<ModelDistance, CliError> {
    Ok(cfg
        .distance
        .get_or_insert_with(|| "bootstrap".into())
        .parse()?)
}

fn single_target(cfg: &RunConfig) -> Result<Option<f64>, CliError> {
    match cfg.target_b.as_ref().map(OneOrMany::to_vec) {
        None => Ok(None),
        Some(v) if v.len() == 1 => Ok(Some(v[0])),
        Some(v) => Err(CliError::Config(format!(
            "expected a single target_b, got {}",
            v.len()
        ))),
    }
}

/// Robust configurations requested by `radius`, `r_grid` or `target_b`.
fn robust_configs(cfg: &mut RunConfig, default_radius: f64) -> Result<Vec<RobustConfig>, CliError> {
    let d = distance(cfg)?;
    let given = [
        cfg.radius.is_some(),
        cfg.r_grid.is_some(),
        cfg.target_b.is_some(),
    ];
    if given.iter().filter(|&&g| g).count() > 1 {
        return Err(CliError::Config(
            "give only one of radius, r_grid and target_b".into(),
        ));
    }
    let out: Vec<RobustConfig> = if let Some(bs) = &cfg.target_b {
        bs.to_vec()
            .into_iter()
            .map(RobustConfig::with_target)
            .collect::<Result<_, _>>()?
    } else {
        let rs = match (&cfg.r_grid, cfg.radius) {
            (Some(g), _) => g.clone(),
            (None, Some(r)) => vec![r],
            (None, None) => {
                cfg.radius = Some(default_radius);
                vec![default_radius]
            }
        };
        rs.into_iter()
            .map(RobustConfig::with_radius)
            .collect::<Result<_, _>>()?
    };
    Ok(out.into_iter().map(|c| c.distance(d.clone())).collect())
}

fn fmt_vec(v: &[f64]) -> String {
    format!(
        "[{}]",
        v.iter().map(|x| fmt12(*x)).collect::<Vec<_>>().join(", ")
    )
}

fn prescribe(data_path: &Path, mut cfg: RunConfig) -> Result<(), CliError> {
    let data = read_data(data_path)?;
    let kind = *cfg.loss.get_or_insert(LossKind::Newsvendor);
    let loss = loss_of(kind);
    check_loss(loss.as_ref(), &data)?;
    let xbar = context(&cfg, &data)?;
    let l = learner(&mut cfg, &data)?;
    if single_target(&cfg)?.is_some() && cfg.radius.is_some() {
        return Err(CliError::Config(
            "give either radius or target_b, not both".into(),
        ));
    }
    if cfg.r_grid.is_some() {
        return Err(CliError::Config(
            "prescribe takes radius or target_b, not r_grid".into(),
        ));
    }
    let rc = robust_configs(&mut cfg, 0.0)?.remove(0);
    log_config(&cfg);
    let m = EmpiricalModel::from_dataset(&data);
    let s = settings(&cfg);
    let nominal = nominal_prescribe(&l, loss.as_ref(), &m, &xbar, &s)?;
    let robust = robust_prescribe(&rc, &l, loss.as_ref(), &m, &xbar, &s)?;
    let mut out = std::io::stdout().lock();
    let io = |e: std::io::Error| CliError::Io(e.to_string());
    writeln!(out, "formulation = \"{}\"", l.kind()).map_err(io)?;
    writeln!(out, "n = {}", data.n()).map_err(io)?;
    writeln!(out, "context = {}", fmt_vec(&xbar)).map_err(io)?;
    writeln!(out, "decision = {}", fmt_vec(&robust.z)).map_err(io)?;
    writeln!(out, "robust_cost = {}", fmt12(robust.cost)).map_err(io)?;
    writeln!(out, "radius = {}", fmt12(robust.radius)).map_err(io)?;
    match robust.active_j {
        Some(j) => writeln!(out, "active_j = {j}").map_err(io)?,
        None => writeln!(out, "active_j = \"none\"").map_err(io)?,
    }
    writeln!(out, "nominal_decision = {}", fmt_vec(&nominal.z)).map_err(io)?;
    writeln!(out, "nominal_cost = {}", fmt12(nominal.cost)).map_err(io)?;
    Ok(())
}

fn open_out(path: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?,
        )),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn bootstrap(data_path: &Path, out: Option<&Path>, mut cfg: RunConfig) -> Result<(), CliError> {
    let data = read_data(data_path)?;
    let kind = *cfg.loss.get_or_insert(LossKind::Newsvendor);
    let loss = loss_of(kind);
    check_loss(loss.as_ref(), &data)?;
    let xbar = context(&cfg, &data)?;
    let n_grid = cfg.n_grid.get_or_insert_with(|| vec![data.n()]).clone();
    if let Some(&bad) = n_grid.iter().find(|&&n| n == 0 || n > data.n()) {
        return Err(CliError::Config(format!(
            "n_grid entry {bad} outside 1..={}",
            data.n()
        )));
    }
    let m = *cfg.m.get_or_insert(1000);
    let seed = cfg.seed.unwrap_or(0);
    let rcs = robust_configs(&mut cfg, 0.0)?;
    let s = settings(&cfg);
    let fixed_bandwidth = cfg.bandwidth;
    let fixed_k = cfg.k;
    let mut rows = Vec::new();
    let mut logged = false;
    for &n in &n_grid {
        let sub = data.select(&(0..n).collect::<Vec<_>>())?;
        cfg.bandwidth = fixed_bandwidth;
        cfg.k = fixed_k;
        let l = learner(&mut cfg, &sub)?;
        if !logged {
            log_config(&cfg);
            logged = true;
        }
        let em = EmpiricalModel::from_dataset(&sub);
        let plan = BootstrapPlan::new(m, seed)?;
        for rc in &rcs {
            let p: Prescription = robust_prescribe(rc, &l, loss.as_ref(), &em, &xbar, &s)?;
            let rep = estimate_disappointment(&p, &l, loss.as_ref(), &sub, &xbar, &plan)?;
            rows.push(vec![
                n.to_string(),
                fmt12(p.radius),
                fmt12(rep.empirical_b),
                fmt12(rep.bound_b),
                m.to_string(),
                seed.to_string(),
            ]);
        }
    }
    write_table(
        &["n", "r", "empirical_b", "bound_b", "m", "seed"],
        &rows,
        open_out(out)?,
    )?;
    Ok(())
}

#[derive(Serialize)]
struct ManifestFile {
    name: String,
    formulation: Formulation,
    robust: bool,
    columns: Vec<String>,
    description: String,
}

#[derive(Serialize)]
struct Manifest {
    experiment: ExperimentName,
    seeds: Vec<u64>,
    files: Vec<ManifestFile>,
    config: RunConfig,
}

fn variant(robust: bool) -> &'static str {
    if robust {
        "robust"
    } else {
        "nominal"
    }
}

fn write_file(
    dir: &Path,
    name: &str,
    header: &[&str],
    rows: &[Vec<String>],
) -> Result<(), CliError> {
    let path = dir.join(name);
    let f = File::create(&path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    write_table(header, rows, BufWriter::new(f))?;
    Ok(())
}

fn experiment(
    name: Option<&str>,
    out: Option<PathBuf>,
    mut cfg: RunConfig,
) -> Result<(), CliError> {
    let exp: ExperimentName = match (name, cfg.experiment) {
        (Some(s), _) => s.parse()?,
        (None, Some(e)) => e,
        (None, None) => {
            return Err(CliError::Config(
                "an experiment name is required (newsvendor or portfolio)".into(),
            ))
        }
    };
    cfg.experiment = Some(exp);
    let base = cfg.seed.unwrap_or(0);
    let seeds = cfg.seeds.get_or_insert(Seeds::Count(10)).resolve(base);
    if seeds.is_empty() {
        return Err(CliError::Config("at least one seed is required".into()));
    }
    let formulations = match cfg.formulation {
        Some(f) => vec![f],
        None => vec![Formulation::Nw, Formulation::Nn],
    };
    let convention = *cfg.variance_convention.get_or_insert_with(Default::default);
    let folds = *cfg.folds.get_or_insert(10);
    let dir = out.unwrap_or_else(|| PathBuf::from("results").join(exp.to_string()));
    std::fs::create_dir_all(&dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    let s = settings(&cfg);
    let mut files = Vec::new();
    match exp {
        ExperimentName::Newsvendor => {
            if cfg.r_grid.is_some() && cfg.target_b.is_some() {
                return Err(CliError::Config(
                    "give either r_grid or target_b, not both".into(),
                ));
            }
            let radii = match (&cfg.r_grid, &cfg.target_b) {
                (Some(rs), _) => RadiusGrid::Radii(rs.clone()),
                (None, Some(bs)) => RadiusGrid::Targets(bs.to_vec()),
                (None, None) => {
                    cfg.target_b = Some(OneOrMany::Many(vec![0.1, 0.01]));
                    RadiusGrid::Targets(vec![0.1, 0.01])
                }
            };
            let sweep = NewsvendorSweep {
                n_grid: cfg.n_grid.get_or_insert_with(|| vec![50, 100, 200]).clone(),
                radii,
                m: *cfg.m.get_or_insert(2000),
                seeds: seeds.clone(),
                convention,
                folds,
                formulations: formulations.clone(),
                settings: s,
            };
            log_config(&cfg);
            let rows = newsvendor_sweep(&sweep)?;
            let header = [
                "n",
                "r",
                "target_b",
                "empirical_b",
                "bound_b",
                "m",
                "seed",
                "empty_windows",
            ];
            for &f in &formulations {
                for robust in [false, true] {
                    let mut sel: Vec<&SweepRow> = rows
                        .iter()
                        .filter(|r| r.formulation == f && r.robust == robust)
                        .collect();
                    let key = |r: &SweepRow| r.target_b.unwrap_or(r.r);
                    sel.sort_by(|a, b| {
                        a.n.cmp(&b.n)
                            .then(key(b).total_cmp(&key(a)))
                            .then(a.seed.cmp(&b.seed))
                    });
                    let table: Vec<Vec<String>> = sel
                        .iter()
                        .map(|r| {
                            vec![
                                r.n.to_string(),
                                fmt12(r.r),
                                r.target_b.map(fmt12).unwrap_or_default(),
                                fmt12(r.empirical_b),
                                fmt12(r.bound_b),
                                r.m.to_string(),
                                r.seed.to_string(),
                                r.empty_windows.to_string(),
                            ]
                        })
                        .collect();
                    let name = format!("newsvendor_{f}_{}.csv", variant(robust));
                    write_file(&dir, &name, &header, &table)?;
                    files.push(ManifestFile {
                        name,
                        formulation: f,
                        robust,
                        columns: header.iter().map(|s| s.to_string()).collect(),
                        description: "bootstrap disappointment per training seed: radius used, target disappointment \
                                      (empty for nominal), fraction of disappointing resamples, theoretical bound, \
                                      resamples, seed, resamples with an empty context window"
                            .into(),
                    });
                }
            }
        }
        ExperimentName::Portfolio => {
            if cfg.r_grid.is_some() || cfg.radius.is_some() {
                return Err(CliError::Config(
                    "the portfolio experiment is calibrated by target_b only".into(),
                ));
            }
            let target_b = match single_target(&cfg)? {
                Some(b) => b,
                None => {
                    cfg.target_b = Some(OneOrMany::One(0.01));
                    0.01
                }
            };
            let sweep = PortfolioSweep {
                n_grid: cfg
                    .n_grid
                    .get_or_insert_with(|| vec![20, 50, 100, 200])
                    .clone(),
                target_b,
                seeds: seeds.clone(),
                test_sets: *cfg.test_sets.get_or_insert(200),
                test_size: *cfg.test_size.get_or_insert(200),
                convention,
                folds,
                formulations: formulations.clone(),
                settings: s,
            };
            log_config(&cfg);
            let rows = portfolio_sweep(&sweep)?;
            let header = [
                "n",
                "seeds",
                "r_mean",
                "train_cost_mean",
                "oos_mean",
                "oos_se",
            ];
            for &f in &formulations {
                for robust in [false, true] {
                    let table: Vec<Vec<String>> = sweep
                        .n_grid
                        .iter()
                        .map(|&n| {
                            let sel: Vec<&PortfolioRow> = rows
                                .iter()
                                .filter(|r| r.formulation == f && r.robust == robust && r.n == n)
                                .collect();
                            averaged(n, &sel)
                        })
                        .collect();
                    let name = format!("portfolio_{f}_{}.csv", variant(robust));
                    write_file(&dir, &name, &header, &table)?;
                    files.push(ManifestFile {
                        name,
                        formulation: f,
                        robust,
                        columns: header.iter().map(|s| s.to_string()).collect(),
                        description: "out-of-sample cost averaged over the training seeds: number of seeds, mean \
                                      radius, mean training cost, mean out-of-sample cost, its standard error across \
                                      seeds (the test-set standard error when there is one seed)"
                            .into(),
                    });
                }
            }
        }
    }
    let manifest = Manifest {
        experiment: exp,
        seeds,
        files,
        config: cfg,
    };
    let text = toml::to_string(&manifest).map_err(|e| CliError::Io(format!("manifest: {e}")))?;
    let path = dir.join("manifest.toml");
    std::fs::write(&path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    eprintln!(
        "wrote {} files to {}",
        manifest.files.len() + 1,
        dir.display()
    );
    Ok(())
}

fn averaged(n: usize, rows: &[&PortfolioRow]) -> Vec<String> {
    let k = rows.len() as f64;
    let mean = |f: &dyn Fn(&PortfolioRow) -> f64| rows.iter().map(|r| f(r)).sum::<f64>() / k;
    let oos = mean(&|r| r.oos_mean);
    let se = if rows.len() > 1 {
        (rows.iter().map(|r| (r.oos_mean - oos).powi(2)).sum::<f64>() / (k - 1.0) / k).sqrt()
    } else {
        rows[0].oos_se
    };
    vec![
        n.to_string(),
        rows.len().to_string(),
        fmt12(mean(&|r| r.r)),
        fmt12(mean(&|r| r.train_cost)),
        fmt12(oos),
        fmt12(se),
    ]
}

fn calibrate(
    data_path: Option<&Path>,
    n: Option<usize>,
    mut cfg: RunConfig,
) -> Result<(), CliError> {
    let b = single_target(&cfg)?.ok_or_else(|| {
        CliError::Config("a target disappointment is required (--target-b)".into())
    })?;
    let f = *cfg.formulation.get_or_insert(Formulation::Nw);
    let (n, r) = match (f, data_path) {
        (Formulation::Nw, None) => {
            let n = n.ok_or_else(|| CliError::Config("give --n or --data".into()))?;
            log_config(&cfg);
            (n, calibrate_radius(f, b, n, None)?)
        }
        (Formulation::Nw, Some(p)) => {
            let data = read_data(p)?;
            log_config(&cfg);
            (data.n(), calibrate_radius(f, b, data.n(), None)?)
        }
        (Formulation::Nn, None) => {
            return Err(CliError::Config(
                "nearest-neighbors calibration needs --data and --context".into(),
            ))
        }
        (Formulation::Nn, Some(p)) => {
            let data = read_data(p)?;
            let xbar = context(&cfg, &data)?;
            let Learner::Nn(l) = learner(&mut cfg, &data)? else {
                unreachable!("formulation is nn")
            };
            let d = distance(&mut cfg)?;
            log_config(&cfg);
            let m = EmpiricalModel::from_dataset(&data);
            let radii = min_radii(&d, &l, &m, &xbar)?;
            (data.n(), calibrate_radius(f, b, data.n(), Some(&radii))?)
        }
    };
    let row = vec![f.to_string(), n.to_string(), fmt12(b), fmt12(r)];
    write_table(
        &["formulation", "n", "target_b", "r"],
        &[row],
        std::io::stdout().lock(),
    )?;
    Ok(())
}
