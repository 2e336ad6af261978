//! Runs the pipelines named in an [`ExperimentConfig`] and writes
//! `summary.json` plus CSV detail files.
//!
//! The summary holds no timings or paths, so one config and seed always
//! produce the same bytes.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};
use thiserror::Error;

use crate::cantor::{build_cantor_field, verify_cantor_separation};
use crate::config::{ExperimentConfig, FieldKind};
use crate::construction::{run_construction_recipes, visit_rates, ConstructionConfig, ConstructionState};
use crate::density::{arc_calibration, fhc_harness, geometric_windows};
use crate::diophantine::{solve_simultaneous, syndetic_return_set, TorusTarget};
use crate::eigenfields::{eigenvector_2b, EigenFamily};
use crate::ergodicity::{
    cesaro_average, correlation_closed_form, correlation_monte_carlo, nonergodicity_witness,
    steinhaus_correlation, witness_floor, CorrelationSpec,
};
use crate::operators::{OperatorKind, OperatorSpec};
use crate::steinhaus::{khinchine_ratio, SteinhausSeries};
use crate::{DualFunctional, C64};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("invalid config:\n{0}")]
    Config(String),
    #[error("{module}: {source}")]
    Pipeline {
        module: &'static str,
        source: crate::Error,
    },
    #[error("writing {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunReport {
    pub summary: Value,
    /// Pipelines whose pass criterion failed.
    pub failed: Vec<String>,
}

impl RunReport {
    pub fn pass(&self) -> bool {
        self.failed.is_empty()
    }

    pub fn summary_text(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.summary).expect("summary serializes");
        s.push('\n');
        s
    }
}

struct Sink<'a> {
    dir: &'a Path,
}

impl Sink<'_> {
    fn write(&self, name: &str, text: &str) -> Result<(), RunError> {
        let path = self.dir.join(name);
        fs::write(&path, text).map_err(|source| RunError::Io { path, source })
    }
}

fn at<T>(module: &'static str, r: crate::Result<T>) -> Result<T, RunError> {
    r.map_err(|source| RunError::Pipeline { module, source })
}

/// Runs every configured pipeline and writes the reports into `out`.
pub fn run_experiment(cfg: &ExperimentConfig, out: &Path) -> Result<RunReport, RunError> {
    let v = cfg.violations();
    if !v.is_empty() {
        let lines: Vec<String> = v.iter().map(|x| x.to_string()).collect();
        return Err(RunError::Config(lines.join("\n")));
    }
    fs::create_dir_all(out).map_err(|source| RunError::Io {
        path: out.to_path_buf(),
        source,
    })?;
    let sink = Sink { dir: out };
    sink.write("config.toml", &cfg.to_toml())?;

    let seed = cfg.seed();
    let op = at("operators", OperatorSpec::from_kind(cfg.operator.clone(), cfg.dimension))?;
    let mut family: Option<EigenFamily> = None;
    let mut get_family = || -> Result<EigenFamily, RunError> {
        if family.is_none() {
            let f = match cfg.family.field {
                FieldKind::SqrtPrime2b => {
                    EigenFamily::sqrt_prime_2b(weight(&cfg.operator), cfg.dimension, cfg.family.samples)
                }
                FieldKind::Diagonal => EigenFamily::diagonal(&op),
            };
            family = Some(at("eigenfields", f)?);
        }
        Ok(family.clone().expect("just built"))
    };

    let mut pipelines = serde_json::Map::new();
    let mut failed = Vec::new();
    let mut record = |name: &str, mut value: Value, pass: bool| {
        value["pass"] = Value::Bool(pass);
        if !pass {
            failed.push(name.to_string());
        }
        pipelines.insert(name.to_string(), value);
    };

    if let Some(k) = &cfg.khinchine {
        let coeffs = if k.coefficients.is_empty() {
            vec![C64::new(1.0, 0.0); k.equal]
        } else {
            k.coefficients.clone()
        };
        let r = at("steinhaus", khinchine_ratio(&coeffs, k.trials, seed))?;
        let [lo, hi] = k.band.unwrap_or([0.0, 1.0]);
        let pass = r.ratio >= lo && r.ratio <= hi;
        record("khinchine", json!({ "terms": coeffs.len(), "trials": k.trials, "band": [lo, hi], "report": r }), pass);
    }

    if let Some(e) = &cfg.ergodicity {
        let spec = at("ergodicity", CorrelationSpec::symmetric(e.c.clone(), e.angles.clone()))?;
        let cesaro = at("ergodicity", cesaro_average(|n| correlation_closed_form(&spec, n), e.horizon))?;
        let cesaro_exact = at("ergodicity", cesaro_average(|n| steinhaus_correlation(&spec, n), e.horizon))?;
        let witness = at("ergodicity", nonergodicity_witness(&spec, e.horizon))?;
        let floor = at("ergodicity", witness_floor(&spec, e.eps, e.delta, &geometric_windows(e.horizon)))?;
        let mut pass = floor.holds;
        let mut value = json!({
            "horizon": e.horizon,
            "product_term": spec.product_term(),
            "diagonal_term": spec.diagonal_term(),
            "cesaro": cesaro,
            "cesaro_steinhaus": cesaro_exact,
            "witness": witness,
            "floor": floor,
        });
        if e.mc_trials > 0 {
            let mc = at("ergodicity", ergodicity_mc(&op, &spec, e.mc_n, e.mc_trials, seed))?;
            let closed = correlation_closed_form(&spec, e.mc_n);
            let exact = steinhaus_correlation(&spec, e.mc_n);
            let agrees = mc.agrees_with(closed, 3.0);
            pass &= agrees;
            value["monte_carlo"] = json!({
                "n": e.mc_n,
                "estimate": mc,
                "closed_form": closed,
                "steinhaus": exact,
                "agrees_with_closed_form": agrees,
                "agrees_with_steinhaus": mc.agrees_with(exact, 3.0),
            });
        }
        sink.write("ergodicity.csv", &spec.to_csv(e.horizon))?;
        record("ergodicity", value, pass);
    }

    if let Some(d) = &cfg.diophantine {
        let k = d.angles.len() as u32;
        let points = d.grid.pow(k);
        let mut csv = String::from("target,p,verified\n");
        let mut solved = 0u64;
        let mut verified = 0u64;
        let mut max_p = 0u64;
        for idx in 0..points {
            let mut rest = idx;
            let mut targets = Vec::with_capacity(k as usize);
            for _ in 0..k {
                targets.push((rest % d.grid) as f64 / d.grid as f64);
                rest /= d.grid;
            }
            let t = at("diophantine", TorusTarget::from_target_angles(d.angles.clone(), &targets, d.eta))?;
            let p = at("diophantine", solve_simultaneous(&t, d.p_max))?;
            let ok = p.is_some_and(|p| t.holds(p));
            solved += u64::from(p.is_some());
            verified += u64::from(ok);
            max_p = max_p.max(p.unwrap_or(0));
            let names: Vec<String> = targets.iter().map(|x| x.to_string()).collect();
            let _ = writeln!(
                csv,
                "{},{},{ok}",
                names.join(";"),
                p.map(|p| p.to_string()).unwrap_or_default()
            );
        }
        sink.write("diophantine.csv", &csv)?;
        let mut pass = verified == points;
        let mut value = json!({
            "targets": points,
            "solved": solved,
            "verified": verified,
            "max_p": max_p,
            "p_max": d.p_max,
        });
        if d.syndetic_eta > 0.0 {
            let s = at("diophantine", syndetic_return_set(&d.angles, d.syndetic_eta, d.syndetic_horizon))?;
            pass &= !s.d.is_empty() && s.inclusion_holds();
            value["syndetic"] = json!({
                "eta": s.eta,
                "horizon": s.horizon,
                "size": s.d.len(),
                "size_prime": s.d_prime.len(),
                "max_gap": s.max_gap,
                "density": s.density,
                "violations": s.violations,
            });
        }
        record("diophantine", value, pass);
    }

    if let Some(c) = &cfg.cantor {
        let seed_family = get_family()?;
        let field = at("cantor", build_cantor_field(&seed_family, c.root, c.depth))?;
        let r = verify_cantor_separation(&field);
        sink.write("cantor.csv", &field.to_csv())?;
        let failing = r.branches.iter().filter(|b| b.margin <= 0.0).count();
        record(
            "cantor",
            json!({
                "depth": c.depth,
                "leaves": field.leaves().len(),
                "min_same_level_separation": r.min_same_level_separation,
                "min_margin": r.min_margin,
                "branches": r.branches.len(),
                "branches_failing": failing,
                "violations": r.violations,
            }),
            r.pass,
        );
    }

    let mut state: Option<ConstructionState> = None;
    if let Some(c) = &cfg.construct {
        let fam = get_family()?;
        let ccfg = ConstructionConfig {
            max_fit_terms: c.max_fit_terms,
            mc_trials: c.mc_trials,
            ..ConstructionConfig::default()
        };
        let st = at("construction", run_construction_recipes(&op, &fam, &c.blocks, &ccfg, seed))?;
        let rates = at("construction", visit_rates(&st, c.visit_samples))?;
        let mut csv = String::from("block,terms,pi,log2_bound,upper_99,certified,rate,designated_rate,floor\n");
        let mut blocks = Vec::new();
        let mut pass = true;
        for (b, r) in st.blocks.iter().zip(&rates) {
            let ok = b.bound_certified() && r.meets_floor();
            pass &= ok;
            let _ = writeln!(
                csv,
                "{},{},{},{},{},{},{},{},{}",
                b.index,
                b.terms.len(),
                b.pi(),
                b.log2_bound,
                b.expected_norm_upper,
                b.bound_certified(),
                r.rate,
                r.designated_rate,
                r.floor
            );
            blocks.push(json!({
                "index": b.index,
                "terms": b.terms.len(),
                "pi": b.pi(),
                "return_times": b.return_times.times().len(),
                "log2_bound": b.log2_bound,
                "expected_norm": b.expected_norm,
                "upper_99": b.expected_norm_upper,
                "certified": b.bound_certified(),
                "schedule": b.schedule,
                "fit_residual": b.fit.residual,
                "visits": r,
                "meets_floor": r.meets_floor(),
            }));
        }
        sink.write("construction.csv", &csv)?;
        record("construct", json!({ "blocks": blocks }), pass);
        state = Some(st);
    }

    if let (Some(d), Some(st)) = (&cfg.density, &state) {
        let phi = at("density", st.sample(d.sample))?.full();
        let targets: Vec<_> = st
            .blocks
            .iter()
            .map(|b| b.target.inflated(0.5f64.powi(b.index as i32 - 1)))
            .collect();
        let windows = geometric_windows(d.horizon);
        let r = at("density", fhc_harness(&phi, &targets, d.horizon, &windows))?;
        for (i, t) in r.targets.iter().enumerate() {
            sink.write(&format!("visits_block{}.csv", i + 1), &t.record.to_csv())?;
        }
        let mut pass = r.pass;
        let mut value = json!({ "sample": d.sample, "report": r });
        if d.calibration_arc > 0.0 {
            let fam = get_family()?;
            let pair = &fam.pairs()[0];
            let (x, ball) = at("density", arc_calibration(C64::new(1.0, 0.0), pair, d.calibration_arc))?;
            let rec = at("density", crate::density::visit_times(&x, &ball, d.horizon))?;
            let freq = rec.count() as f64 / d.horizon as f64;
            let ok = (freq - d.calibration_arc).abs() < 0.01;
            pass &= ok;
            value["calibration"] = json!({
                "theta": pair.theta(),
                "arc": d.calibration_arc,
                "frequency": freq,
                "within_0.01": ok,
            });
        }
        record("density", value, pass);
    }

    let summary = json!({
        "seed": seed,
        "dimension": cfg.dimension,
        "operator": cfg.operator,
        "pipelines": Value::Object(pipelines),
        "pass": failed.is_empty(),
        "failed": failed.clone(),
    });
    let report = RunReport { summary, failed };
    sink.write("summary.json", &report.summary_text())?;
    Ok(report)
}

fn weight(kind: &OperatorKind) -> f64 {
    match kind {
        OperatorKind::ScaledBackwardShift { weight } => *weight,
        _ => f64::NAN,
    }
}

/// Realises `spec` as a series of 2B eigenvectors read by the first
/// coordinate functional, then estimates its correlation at time `n`.
fn ergodicity_mc(
    op: &OperatorSpec,
    spec: &CorrelationSpec,
    n: u64,
    trials: u64,
    seed: u64,
) -> crate::Result<crate::stats::McEstimate> {
    let d = op.dim();
    let w = weight(op.kind());
    let x = DualFunctional::coordinate(d, 0)?;
    let mut pairs = Vec::new();
    let mut coeffs = Vec::new();
    for (&c, &t) in spec.c().iter().zip(spec.angles()) {
        let pair = eigenvector_2b(t, w, d)?;
        coeffs.push(c / x.pair(pair.vector())?);
        pairs.push(pair);
    }
    let series = SteinhausSeries::from_parts(&coeffs, &pairs, seed)?;
    correlation_monte_carlo(op, &series, &x, &x, n, trials, seed)
}
