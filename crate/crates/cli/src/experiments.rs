use serde_json::{json, Value};
use ym2_core::character::{llt_report, segal_amplitude};
use ym2_core::field::{charfun_mc, TestForm};
use ym2_core::group::{irreps_up_to, GroupElement, Irrep};
use ym2_core::lattice::MorseLattice;
use ym2_core::norms::{tightness_experiment, NormParams};
use ym2_core::quad::integrate_with_breaks;
use ym2_core::sampler::{boundary_law_check, condition_close, Observable};

use crate::config::{ExperimentConfig, Kind};

/// One experiment's CSV table, named pass/fail checks and a kind-specific JSON payload.
pub struct Outcome {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
    pub checks: Vec<(String, bool)>,
    pub payload: Value,
}

impl Outcome {
    fn new(header: &[&'static str]) -> Self {
        Outcome { header: header.to_vec(), rows: Vec::new(), checks: Vec::new(), payload: Value::Null }
    }

    fn row(&mut self, cells: Vec<String>) {
        debug_assert_eq!(cells.len(), self.header.len());
        self.rows.push(cells);
    }

    fn check(&mut self, name: impl Into<String>, ok: bool) {
        self.checks.push((name.into(), ok));
    }
}

pub enum RunError {
    Config(String),
    Compute(String),
}

impl From<ym2_core::Error> for RunError {
    fn from(e: ym2_core::Error) -> Self {
        match e {
            ym2_core::Error::InvalidArgument(m) => RunError::Config(m),
            other => RunError::Compute(other.to_string()),
        }
    }
}

type Res = Result<Outcome, RunError>;

fn f(x: f64) -> String {
    format!("{x}")
}

fn irreps(cfg: &ExperimentConfig, default: &[i64]) -> Result<Vec<Irrep>, RunError> {
    let idx = cfg.irreps.clone().unwrap_or_else(|| default.to_vec());
    Ok(idx.into_iter().map(|i| Irrep::new(cfg.group, i)).collect::<Result<Vec<_>, _>>()?)
}

fn lattice(cfg: &ExperimentConfig, n: u32) -> Result<MorseLattice, RunError> {
    Ok(MorseLattice::build(cfg.genus, n, cfg.area_spec.into(), cfg.total_area)?)
}

pub fn run(cfg: &ExperimentConfig, threads: usize) -> Res {
    match cfg.kind {
        Kind::GroupTables => group_tables(cfg),
        Kind::ActionCheck => action_check(cfg),
        Kind::Segal => segal(cfg),
        Kind::Llt => llt(cfg),
        Kind::Sample => sample(cfg, threads),
        Kind::Charfun => charfun(cfg, threads),
        Kind::Norms => norms(cfg, threads),
        Kind::Condition => condition(cfg, threads),
    }
}

fn group_tables(cfg: &ExperimentConfig) -> Res {
    let mut out = Outcome::new(&["irrep", "dim", "casimir", "norm_sq"]);
    let ls = irreps_up_to(cfg.group, cfg.c2max_or(20.0));
    let breaks: Vec<f64> = (0..=64).map(|k| k as f64 * std::f64::consts::PI / 64.0).collect();
    let gram = |a: &Irrep, b: &Irrep| {
        integrate_with_breaks(
            |x| (a.character_at_angle(x) * b.character_at_angle(x).conj()).re * cfg.group.class_haar_density(x),
            &breaks,
            1e-14,
            1e-12,
        )
    };
    let mut worst: f64 = 0.0;
    for (i, a) in ls.iter().enumerate() {
        for (j, b) in ls.iter().enumerate().skip(i) {
            let g = gram(a, b)?;
            worst = worst.max((g - if i == j { 1.0 } else { 0.0 }).abs());
            if i == j {
                out.row(vec![a.index.to_string(), a.dim().to_string(), f(a.casimir()), f(g)]);
            }
        }
    }
    out.check("orthonormal", worst < 1e-9);
    out.payload = json!({ "irreps": ls.len(), "max_gram_residual": worst });
    Ok(out)
}

fn action_check(cfg: &ExperimentConfig) -> Res {
    let times = cfg.times.clone().unwrap_or_else(|| vec![0.01, 0.02, 0.05, 0.1, 0.2]);
    let report = cfg.family().verify_h(&times, cfg.seed)?;
    let mut out = Outcome::new(&["t", "quantity", "value"]);
    for p in &report.points {
        let t = f(p.t);
        out.row(vec![t.clone(), "second_moment_ratio".into(), f(p.second_moment_ratio)]);
        out.row(vec![t.clone(), "tail_mass".into(), f(p.tail_mass)]);
        for (name, v) in ["moment_ratio_1", "moment_ratio_1.5", "moment_ratio_2"].iter().zip(p.moment_ratios) {
            out.row(vec![t.clone(), (*name).into(), f(v)]);
        }
    }
    out.check("second_moment", report.second_moment_ok);
    out.check("tail", report.tail_ok);
    out.check("moments", report.moments_ok);
    out.check("symmetry", report.symmetry_ok);
    out.payload = serde_json::to_value(&report).unwrap_or(Value::Null);
    Ok(out)
}

fn segal(cfg: &ExperimentConfig) -> Res {
    let areas = cfg.areas.clone().unwrap_or_else(|| vec![cfg.total_area]);
    let boundary: Vec<GroupElement> =
        cfg.boundary_angles.iter().flatten().map(|&a| GroupElement::from_class_angle(cfg.group, a)).collect();
    let z = segal_amplitude(cfg.genus, &boundary, &areas, &cfg.family(), cfg.c2max_or(200.0))?;
    let mut out = Outcome::new(&["quantity", "genus", "boundaries", "value", "stderr"]);
    out.row(vec!["Z".into(), cfg.genus.to_string(), boundary.len().to_string(), f(z.value), String::new()]);
    out.check("truncation", !z.under_truncated);
    out.payload = serde_json::to_value(z).unwrap_or(Value::Null);
    Ok(out)
}

fn llt(cfg: &ExperimentConfig) -> Res {
    let ladder: Vec<usize> = cfg.ladder().map_err(|e| RunError::Config(e.0))?.iter().map(|&n| n as usize).collect();
    let k = cfg.derivatives.unwrap_or(2);
    let rows = llt_report(&cfg.family(), &ladder, k, cfg.c2max_or(80.0))?;
    let mut out = Outcome::new(&["n", "distance", "ck_bound", "ck_distance", "tail"]);
    for r in &rows {
        out.row(vec![r.n.to_string(), f(r.sup_distance), f(r.ck_bound), f(r.ck_distance), f(r.tail)]);
    }
    out.check("distance_decreasing", rows.windows(2).all(|w| w[1].sup_distance < w[0].sup_distance));
    out.check("truncation", rows.iter().all(|r| !r.under_truncated));
    out.payload = serde_json::to_value(&rows).unwrap_or(Value::Null);
    Ok(out)
}

fn sample(cfg: &ExperimentConfig, threads: usize) -> Res {
    let lat = lattice(cfg, cfg.resolution().map_err(|e| RunError::Config(e.0))?)?;
    let ls = irreps(cfg, &[1, 2, 3])?;
    let rows = boundary_law_check(&lat, &cfg.family(), &ls, cfg.samples_or(10_000), cfg.seed, threads)?;
    let mut out = Outcome::new(&["irrep", "value", "stderr", "prediction"]);
    for r in &rows {
        out.row(vec![r.irrep.to_string(), f(r.mean), f(r.se), f(r.prediction)]);
    }
    out.check("boundary_law", rows.iter().all(|r| r.within(4.0)));
    out.payload = serde_json::to_value(&rows).unwrap_or(Value::Null);
    Ok(out)
}

fn charfun(cfg: &ExperimentConfig, threads: usize) -> Res {
    let grid = cfg.test_function.as_ref().ok_or_else(|| RunError::Config("charfun needs `test_function`".into()))?;
    let ladder = cfg.ladder().map_err(|e| RunError::Config(e.0))?;
    let fam = cfg.family();
    let samples = cfg.samples_or(10_000);
    let mut out = Outcome::new(&["resolution", "re", "im", "stderr", "target", "error"]);
    let mut last = (f64::NAN, f64::NAN);
    let mut rejected = 0;
    for &n in ladder {
        let lat = lattice(cfg, n)?;
        let psi = TestForm::from_grid(&lat, cfg.group, grid)?;
        let target = (-0.5 * psi.sigma_norm_sq).exp();
        let c = charfun_mc(&lat, &fam, &psi, samples, cfg.seed.wrapping_add(n as u64), threads)?;
        let err = (c.value() - target).norm();
        rejected += c.rejected;
        out.row(vec![n.to_string(), f(c.re), f(c.im), f(c.se()), f(target), f(err)]);
        last = (err, c.se());
    }
    let tol = cfg.tolerance.unwrap_or(0.02);
    out.check("finest_within_tolerance", last.0 <= tol + 4.0 * last.1);
    out.payload = json!({ "tolerance": tol, "rejected": rejected });
    Ok(out)
}

fn norms(cfg: &ExperimentConfig, threads: usize) -> Res {
    let ladder = cfg.ladder().map_err(|e| RunError::Config(e.0))?;
    let params = NormParams { alpha: cfg.alpha.unwrap_or_default(), p: cfg.p.unwrap_or_default(), s: cfg.s.unwrap_or(0.0) };
    let report = tightness_experiment(
        cfg.genus,
        ladder,
        cfg.area_spec.into(),
        &cfg.family(),
        &params,
        cfg.samples_or(1000),
        cfg.seed,
        threads,
    )?;
    let mut out = Outcome::new(&["resolution", "value", "stderr", "top_value", "rejected"]);
    for r in &report.rows {
        out.row(vec![r.resolution.to_string(), f(r.mean), f(r.se), f(r.top_mean), r.rejected.to_string()]);
    }
    out.check("bounded", report.bounded());
    out.payload = serde_json::to_value(&report).unwrap_or(Value::Null);
    Ok(out)
}

fn condition(cfg: &ExperimentConfig, threads: usize) -> Res {
    let lat = lattice(cfg, cfg.resolution().map_err(|e| RunError::Config(e.0))?)?;
    let level = cfg.level.unwrap_or(5 * lat.rows / 8);
    if level == 0 || level >= lat.rows {
        return Err(RunError::Config(format!("`level` must be in 1..{}", lat.rows)));
    }
    let [row, col] = cfg.face.unwrap_or([0, 0]);
    let face = lat.face_index(row, col)?;
    let irrep = irreps(cfg, &[1])?.into_iter().next().ok_or_else(|| RunError::Config("`irreps` is empty".into()))?;
    let obs = Observable::face_character(&lat, face, irrep);
    let samples = cfg.samples_or(10_000);
    let est = condition_close(&lat, &cfg.family(), &obs, level, samples, cfg.seed, threads)?;
    let mut out = Outcome::new(&["level", "face", "irrep", "value", "stderr", "ess"]);
    out.row(vec![level.to_string(), face.to_string(), irrep.index.to_string(), f(est.estimate), f(est.se), f(est.ess)]);
    out.check("effective_sample_size", est.ess >= 0.05 * samples as f64);
    out.payload = json!({ "estimate": est.estimate, "se": est.se, "ess": est.ess, "samples": est.samples });
    Ok(out)
}

