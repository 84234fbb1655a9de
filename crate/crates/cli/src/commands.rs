use std::io::Write;
use std::path::Path;

use nalgebra::DVector;
use serde::Serialize;
use sgmpc_core::calibration::{calibrate_with, CalibrationOptions};
use sgmpc_core::reachability::{coupled_initial_proxy, propagate_proxy_from};
use sgmpc_core::Error as CoreError;
use sgmpc_sim::containment::study_direction;
use sgmpc_sim::pipeline::{design, support_profile};
use sgmpc_sim::report::{bound_size_svg, write_containment_csv, write_trials_csv, MethodOutcome};
use sgmpc_sim::*;
use sha2::{Digest, Sha256};

use crate::output::{OutDir, Stamp};
use crate::{Common, Failure, EXIT_CHECK, EXIT_DEGENERATE, EXIT_INFEASIBLE, EXIT_INPUT};

/// Effective configuration after command-line overrides.
struct Run {
    cfg: ExperimentConfig,
    env: Environment,
    out: OutDir,
}

impl Run {
    fn new(common: &Common) -> Result<Self, Failure> {
        let mut cfg = match &common.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::defaults(EnvKind::Msd),
        };
        if let Some(s) = common.seed {
            cfg.seed = s;
        }
        if let Some(n) = common.trials {
            cfg.trials = n;
        }
        cfg.validate()?;
        let env = Environment::from_config(&cfg)?;
        let stamp = Stamp {
            config_hash: cfg.hash(),
            seed: cfg.seed,
        };
        let dir = common.out.clone().unwrap_or_else(|| cfg.out.clone());
        let out = OutDir::create(dir, stamp, common.verbose)?;
        Ok(Self { cfg, env, out })
    }

    fn settings(&self) -> PipelineSettings {
        PipelineSettings {
            delta: self.cfg.delta,
            dr_covariance: self.cfg.dr_covariance,
        }
    }

    fn calibration(&self) -> Result<NoiseCalibration, Failure> {
        let c = NoiseCalibration::from_env(&self.env, self.cfg.calibration_samples, self.cfg.seed)?;
        self.out.log(format!(
            "{}: calibrated sigma_w {:.6} sigma_eps {:.6} from {} samples",
            self.env.name(),
            c.sigma_w,
            c.sigma_eps,
            c.samples
        ));
        Ok(c)
    }

    /// One pipeline per configured method; infeasible designs are kept as
    /// diagnostics instead of aborting the run.
    fn pipelines(&self, calib: &NoiseCalibration) -> Result<Vec<(Method, Result<Pipeline, String>)>, Failure> {
        let mut out = Vec::new();
        for &m in &self.cfg.methods {
            match build_pipeline(&self.env, calib, m, &self.settings()) {
                Ok(p) => out.push((m, Ok(p))),
                Err(e) => match infeasibility(&e) {
                    Some(msg) => {
                        self.out.log(format!("{}: infeasible design: {msg}", m.label()));
                        out.push((m, Err(msg)));
                    }
                    None => return Err(e.into()),
                },
            }
        }
        Ok(out)
    }
}

fn infeasibility(e: &SimError) -> Option<String> {
    match e {
        SimError::InitiallyInfeasible(_)
        | SimError::Core(CoreError::Infeasible(_) | CoreError::EmptySet(_)) => Some(e.to_string()),
        _ => None,
    }
}

fn csv_failure(e: csv::Error) -> Failure {
    match e.kind() {
        csv::ErrorKind::Io(_) => Failure::new(EXIT_INPUT, e.to_string()),
        _ => Failure::new(EXIT_INPUT, format!("malformed CSV: {e}")),
    }
}

/// Rows of numbers; a non-numeric first row is taken as a header.
fn read_samples(path: &Path) -> Result<(Vec<DVector<f64>>, Vec<u8>), Failure> {
    let bytes = std::fs::read(path).map_err(|e| Failure::new(EXIT_INPUT, format!("cannot read {}: {e}", path.display())))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(bytes.as_slice());
    let mut samples = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(csv_failure)?;
        let parsed: Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(v) => samples.push(DVector::from_vec(v)),
            Err(_) if i == 0 => continue,
            Err(e) => return Err(Failure::new(EXIT_INPUT, format!("row {}: {e}", i + 1))),
        }
    }
    Ok((samples, bytes))
}

#[derive(Serialize)]
struct CalibrationReport {
    input: String,
    input_sha256: String,
    samples: usize,
    dim: usize,
    sigma: f64,
    sigma_sq: f64,
    /// Unit direction of the maximizing `λ`.
    direction: Vec<f64>,
    /// `‖λ‖` at the maximum, in data units.
    scale: f64,
    mean: Vec<f64>,
}

pub fn calibrate(common: &Common, samples_csv: &Path) -> Result<(), Failure> {
    let run = Run::new(common)?;
    let (samples, bytes) = read_samples(samples_csv)?;
    if samples.is_empty() {
        return Err(Failure::new(EXIT_DEGENERATE, format!("{} holds no samples", samples_csv.display())));
    }
    let opts = CalibrationOptions {
        seed: run.cfg.seed,
        ..CalibrationOptions::default()
    };
    let res = calibrate_with(&samples, &opts)?;
    run.out.log(format!("calibrated {} samples: sigma {:.6}", samples.len(), res.sigma.sigma()));
    run.out.json(
        "calibration.json",
        &CalibrationReport {
            input: samples_csv.display().to_string(),
            input_sha256: hex::encode(Sha256::digest(&bytes)),
            samples: samples.len(),
            dim: samples[0].len(),
            sigma: res.sigma.sigma(),
            sigma_sq: res.sigma.variance(),
            direction: res.direction.iter().copied().collect(),
            scale: res.lambda_norm,
            mean: res.mean.iter().copied().collect(),
        },
    )?;
    Ok(())
}

#[derive(Serialize)]
struct PropagateMethod {
    method: Method,
    #[serde(skip_serializing_if = "Option::is_none")]
    steady_support: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    steady_state: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    infeasible: Option<String>,
}

#[derive(Serialize)]
struct PropagateReport {
    environment: &'static str,
    sigma_w: f64,
    sigma_eps: f64,
    /// Unit normal of the first constraint row, along which supports are taken.
    direction: Vec<f64>,
    proxy_converged_at: usize,
    methods: Vec<PropagateMethod>,
}

pub fn propagate(common: &Common) -> Result<(), Failure> {
    let run = Run::new(common)?;
    let calib = run.calibration()?;
    let d = design(&run.env, &calib)?;
    let nx = run.env.nx();
    let len = run.env.steps + run.env.horizon + 1;
    let seq = propagate_proxy_from(&d.err, &d.noise, &coupled_initial_proxy(nx, run.env.sigma0 * run.env.sigma0), len)?;
    run.out.csv("proxies.csv", |w| seq.write_csv(w).map_err(Failure::from))?;

    let pipes = run.pipelines(&calib)?;
    let feasible: Vec<&Pipeline> = pipes.iter().filter_map(|(_, p)| p.as_ref().ok()).collect();
    let Some(first) = feasible.first() else {
        return Err(Failure::new(EXIT_INFEASIBLE, "every method is infeasible"));
    };
    let dir = study_direction(first)?;
    let mut profiles = Vec::new();
    for p in &feasible {
        profiles.push((p.method, support_profile(p, &dir, len)?));
    }
    run.out.csv("supports.csv", |w| {
        let mut header = vec!["t".to_string()];
        header.extend(profiles.iter().map(|(m, _)| format!("support_{}", m.label())));
        writeln!(w, "{}", header.join(","))?;
        for t in 0..len {
            let cells: Vec<String> = profiles.iter().map(|(_, s)| s[t].to_string()).collect();
            writeln!(w, "{t},{}", cells.join(","))?;
        }
        Ok(())
    })?;

    let methods = pipes
        .iter()
        .map(|(m, p)| match p {
            Ok(p) => Ok(PropagateMethod {
                method: *m,
                steady_support: Some(p.steady_set.support(&dir)?),
                steady_state: Some(p.steady_state.0.iter().copied().collect()),
                infeasible: None,
            }),
            Err(msg) => Ok(PropagateMethod {
                method: *m,
                steady_support: None,
                steady_state: None,
                infeasible: Some(msg.clone()),
            }),
        })
        .collect::<Result<Vec<_>, CoreError>>()?;
    run.out.json(
        "propagate.json",
        &PropagateReport {
            environment: run.env.name(),
            sigma_w: calib.sigma_w,
            sigma_eps: calib.sigma_eps,
            direction: dir.iter().copied().collect(),
            proxy_converged_at: seq.converged_at,
            methods,
        },
    )?;
    Ok(())
}

/// Closed-loop campaign per feasible pipeline, writing one trial CSV each.
fn campaigns(run: &Run, pipes: &[(Method, Result<Pipeline, String>)]) -> Result<Vec<MethodOutcome>, Failure> {
    let mut outcomes = Vec::new();
    for (m, p) in pipes {
        let p = match p {
            Ok(p) => p,
            Err(msg) => {
                outcomes.push(MethodOutcome {
                    method: *m,
                    metrics: None,
                    infeasible: Some(msg.clone()),
                });
                continue;
            }
        };
        run.out.log(format!("{}: {} trials of {} steps", m.label(), run.cfg.trials, run.env.steps));
        match run_pipeline_campaign(p, run.cfg.trials, run.env.steps, run.cfg.seed) {
            Ok(recs) => {
                run.out.csv(&format!("trials_{}.csv", m.label()), |w| {
                    write_trials_csv(&recs, &run.env, w).map_err(Failure::from)
                })?;
                let metrics = mpc_metrics(&recs)?;
                run.out.log(format!(
                    "{}: MCP {:.2}% mean cost {:.4} fallbacks {}",
                    m.label(),
                    metrics.mcp,
                    metrics.mean_cost,
                    metrics.fallbacks
                ));
                outcomes.push(MethodOutcome {
                    method: *m,
                    metrics: Some(metrics),
                    infeasible: None,
                });
            }
            Err(e) => match infeasibility(&e) {
                Some(msg) => {
                    run.out.log(format!("{}: {msg}", m.label()));
                    outcomes.push(MethodOutcome {
                        method: *m,
                        metrics: None,
                        infeasible: Some(msg),
                    });
                }
                None => return Err(e.into()),
            },
        }
    }
    Ok(outcomes)
}

#[derive(Serialize)]
struct RunReport<'a> {
    environment: &'static str,
    trials: usize,
    steps: usize,
    delta: f64,
    results: &'a [MethodOutcome],
}

pub fn mpc_run(common: &Common) -> Result<(), Failure> {
    let run = Run::new(common)?;
    let calib = run.calibration()?;
    let pipes = run.pipelines(&calib)?;
    let outcomes = campaigns(&run, &pipes)?;
    run.out.json(
        "summary.json",
        &RunReport {
            environment: run.env.name(),
            trials: run.cfg.trials,
            steps: run.env.steps,
            delta: run.cfg.delta,
            results: &outcomes,
        },
    )?;
    if outcomes.iter().all(|o| o.metrics.is_none()) {
        return Err(Failure::new(EXIT_INFEASIBLE, "every method is infeasible"));
    }
    Ok(())
}

pub struct Comparison {
    pub delta: f64,
    pub study: Option<ContainmentStudy>,
    pub outcomes: Vec<MethodOutcome>,
}

impl Comparison {
    fn metrics(&self, m: Method) -> Option<&MpcMetrics> {
        self.outcomes.iter().find(|o| o.method == m)?.metrics.as_ref()
    }
}

#[derive(Serialize)]
struct MetricsRow {
    method: &'static str,
    status: &'static str,
    containment_min: Option<f64>,
    steady_support: Option<f64>,
    mcp: Option<f64>,
    mean_cost: Option<f64>,
    cost_ci_low: Option<f64>,
    cost_ci_high: Option<f64>,
    fallbacks: Option<usize>,
}

pub fn compare(common: &Common) -> Result<Comparison, Failure> {
    let run = Run::new(common)?;
    compare_with(&run)
}

fn compare_with(run: &Run) -> Result<Comparison, Failure> {
    let calib = run.calibration()?;
    let pipes = run.pipelines(&calib)?;
    let feasible: Vec<&Pipeline> = pipes.iter().filter_map(|(_, p)| p.as_ref().ok()).collect();
    let study = if feasible.is_empty() {
        None
    } else {
        run.out.log(format!("containment: {} trajectories of {} steps", run.cfg.containment_trials, run.env.steps));
        let s = containment_study(&feasible, run.cfg.containment_trials, run.env.steps, run.cfg.delta, run.cfg.seed)?;
        run.out.csv("containment.csv", |w| write_containment_csv(&s, w).map_err(Failure::from))?;
        run.out.svg("bounds.svg", &bound_size_svg(&s, run.cfg.delta))?;
        Some(s)
    };
    let outcomes = campaigns(run, &pipes)?;
    let cmp = Comparison {
        delta: run.cfg.delta,
        study,
        outcomes,
    };

    let rows: Vec<MetricsRow> = cmp
        .outcomes
        .iter()
        .map(|o| {
            let c = cmp.study.as_ref().and_then(|s| s.method(o.method));
            let m = o.metrics.as_ref();
            MetricsRow {
                method: o.method.label(),
                status: if m.is_some() { "ok" } else { "infeasible" },
                containment_min: c.map(|c| c.containment.min),
                steady_support: c.and_then(|c| c.support.last().copied()),
                mcp: m.map(|m| m.mcp),
                mean_cost: m.map(|m| m.mean_cost),
                cost_ci_low: m.map(|m| m.cost_ci.0),
                cost_ci_high: m.map(|m| m.cost_ci.1),
                fallbacks: m.map(|m| m.fallbacks),
            }
        })
        .collect();
    run.out.csv("metrics.csv", |w| {
        let mut cw = csv::Writer::from_writer(w);
        for r in &rows {
            cw.serialize(r).map_err(csv_failure)?;
        }
        cw.flush()?;
        Ok(())
    })?;
    run.out.json(
        "compare.json",
        &RunReport {
            environment: run.env.name(),
            trials: run.cfg.trials,
            steps: run.env.steps,
            delta: run.cfg.delta,
            results: &cmp.outcomes,
        },
    )?;
    Ok(cmp)
}

#[derive(Serialize)]
struct Verdict {
    name: &'static str,
    pass: bool,
    detail: String,
}

fn verdicts(cmp: &Comparison) -> Vec<Verdict> {
    let mut v = Vec::new();
    let budget = 100.0 * cmp.delta;
    let study = cmp.study.as_ref();
    let sg_set = study.and_then(|s| s.method(Method::SubGaussian));
    v.push(match sg_set {
        Some(c) => Verdict {
            name: "containment",
            pass: c.containment.min >= 100.0 - budget,
            detail: format!("minimum per-step containment {:.3}% (need {:.1}%)", c.containment.min, 100.0 - budget),
        },
        None => Verdict {
            name: "containment",
            pass: false,
            detail: "sub-Gaussian sets unavailable".into(),
        },
    });
    if let (Some(s), Some(sg)) = (study, sg_set) {
        let tol = 1e-12;
        let mut bad = 0;
        for t in 0..s.steps {
            let q_ok = s.quantile[t] <= sg.support[t] + tol;
            let others_ok = s
                .methods
                .iter()
                .filter(|m| m.method != Method::SubGaussian)
                .all(|m| sg.support[t] <= m.support[t] + tol);
            bad += usize::from(!(q_ok && others_ok));
        }
        v.push(Verdict {
            name: "bound ordering",
            pass: bad == 0,
            detail: format!("quantile <= sub-Gaussian <= baselines fails at {bad} of {} steps", s.steps),
        });
    }
    match cmp.metrics(Method::SubGaussian) {
        Some(m) => v.push(Verdict {
            name: "chance constraint",
            pass: m.mcp <= budget,
            detail: format!("maximum constraint violation probability {:.2}% (budget {budget:.1}%)", m.mcp),
        }),
        None => v.push(Verdict {
            name: "chance constraint",
            pass: false,
            detail: "sub-Gaussian controller infeasible".into(),
        }),
    }
    if let (Some(sg), Some(dr)) = (cmp.metrics(Method::SubGaussian), cmp.metrics(Method::DistributionallyRobust)) {
        v.push(Verdict {
            name: "cost ordering",
            pass: sg.mean_cost < dr.mean_cost,
            detail: format!("mean cost sub-Gaussian {:.4} vs distributionally robust {:.4}", sg.mean_cost, dr.mean_cost),
        });
    }
    v
}

pub fn check(common: &Common) -> Result<(), Failure> {
    let run = Run::new(common)?;
    let cmp = compare_with(&run)?;
    let verdicts = verdicts(&cmp);
    for v in &verdicts {
        eprintln!("{} {}: {}", if v.pass { "PASS" } else { "FAIL" }, v.name, v.detail);
    }
    #[derive(Serialize)]
    struct CheckReport<'a> {
        pass: bool,
        checks: &'a [Verdict],
    }
    let pass = verdicts.iter().all(|v| v.pass);
    run.out.json("check.json", &CheckReport { pass, checks: &verdicts })?;
    if pass {
        Ok(())
    } else {
        Err(Failure::new(EXIT_CHECK, "acceptance checks failed"))
    }
}
