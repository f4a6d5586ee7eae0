//! Monte Carlo estimates of the probabilistic corollaries.

use rayon::prelude::*;

use super::config::{Scenario, TrialConfig};
use super::instances::{ball_points, feature_radius_sq, synthesize_teacher};
use super::report::{Aggregate, AggregateReport, TrialRecord, Verdict};
use crate::data::{Dataset, LabeledExample, Point, Task};
use crate::error::{Error, Result};
use crate::interpolation::{fit_min_norm, Interpolator};
use crate::kernel::{gram_matrix, kernel_eval};
use crate::maxmargin::{loo_report_with, solve_hard_margin_with, SolverOptions, DEFAULT_MARGIN_TOL};
use crate::numerics::linalg::lstsq_min_norm;
use crate::numerics::rng::{RngStream, Seed};

/// Stream index of the teacher, outside the range of trial indices.
const TEACHER_STREAM: u64 = u64::MAX;
const PINV_RANK_TOL: f64 = 1e-10;
/// Relative tolerance of the per-trial telescoping certificate.
const CERTIFICATE_TOL: f64 = 1e-7;
const SUPPORT_PROBES: usize = 10_000;
const MIN_SUPPORT_FRACTION: f64 = 1e-3;

pub(crate) fn trial_seed(cfg: &TrialConfig, index: usize) -> Seed {
    cfg.seed.derive(index as u64)
}

pub fn teacher(cfg: &TrialConfig) -> Result<Interpolator> {
    let mut rng = RngStream::new(cfg.seed.derive(TEACHER_STREAM));
    synthesize_teacher(&mut rng, &cfg.kernel, cfg.d, cfg.teacher_anchors, cfg.radius, cfg.teacher_norm)
}

/// Minimum-norm interpolant, through the pseudoinverse of the Gram matrix
/// when it is numerically singular (repeated directions under the linear
/// or polynomial kernel). The flag reports the fallback.
pub fn fit_interpolant(s: &Dataset, cfg: &TrialConfig) -> Result<(Interpolator, bool)> {
    match fit_min_norm(s, &cfg.kernel, 0.0) {
        Ok(f) => Ok((f, false)),
        Err(Error::NearSingularKernel { .. }) => {
            let pts = s.points();
            let g = gram_matrix(&cfg.kernel, &pts, &pts)?;
            let alpha = lstsq_min_norm(&g, &s.labels(), PINV_RANK_TOL)?;
            Ok((Interpolator::from_coefficients(pts, alpha, cfg.kernel)?, true))
        }
        Err(e) => Err(e),
    }
}

fn check_radius(cfg: &TrialConfig, pts: &[Point], r_sq: f64) -> Result<()> {
    for p in pts {
        let v = kernel_eval(&cfg.kernel, p, p)?;
        if v > r_sq + 1e-12 {
            return Err(Error::Construction(format!("K(x, x) = {v} exceeds R^2 = {r_sq}")));
        }
    }
    Ok(())
}

fn loss_key(m: usize) -> String {
    format!("loss_m{m:03}")
}

/// One trial: `n + 1` i.i.d. inputs labeled by the teacher; the last one is
/// the singleton out-sample. `f_m` interpolates the first `m` points. Each
/// `m` also checks the deterministic certificate
/// `L(x_{n+1}, f_m) <= R^2 (|f_{m+1}'|^2 - |f_m|^2)` where `f_{m+1}'`
/// interpolates the first `m` points and `x_{n+1}`.
pub fn interp_corollary_trial(cfg: &TrialConfig, teacher: &Interpolator, index: usize) -> Result<TrialRecord> {
    let seed = trial_seed(cfg, index);
    let mut rng = RngStream::new(seed);
    let r_sq = feature_radius_sq(&cfg.kernel, cfg.radius);
    let pts = ball_points(&mut rng, cfg.n + 1, cfg.d, cfg.radius);
    check_radius(cfg, &pts, r_sq)?;
    let ys = teacher.predict_many(&pts)?;
    let examples: Vec<LabeledExample> = pts.iter().zip(ys.iter()).map(|(p, &y)| LabeledExample::new(p.clone(), y)).collect();
    let test = &examples[cfg.n];

    let mut rec = TrialRecord::new(index, seed);
    let mut fallbacks = 0usize;
    let mut certified = true;
    let mut total = 0.0;
    for m in 1..=cfg.n {
        let prefix = Dataset::new(examples[..m].to_vec(), Task::Regression)?;
        let (f_m, fb) = fit_interpolant(&prefix, cfg)?;
        let mut with_test = examples[..m].to_vec();
        with_test.push(test.clone());
        let (f_next, fb_next) = fit_interpolant(&Dataset::new(with_test, Task::Regression)?, cfg)?;
        fallbacks += fb as usize + fb_next as usize;
        let loss = (test.y - f_m.predict(&test.x)?).powi(2);
        let cert = r_sq * (f_next.norm_sq - f_m.norm_sq);
        certified &= loss <= cert + CERTIFICATE_TOL * (1.0 + loss + r_sq * f_next.norm_sq);
        total += loss;
        rec.set(loss_key(m), loss);
        if m == cfg.n {
            rec.set("norm_sq_n", f_m.norm_sq);
        }
    }
    rec.set("mean_loss_over_m", total / cfg.n as f64);
    rec.set("fallback_fits", fallbacks as f64);
    rec.check("telescoping_certificate", certified);
    Ok(rec)
}

pub fn run_interp_corollary(cfg: &TrialConfig) -> Result<AggregateReport> {
    expect_scenario(cfg, Scenario::InterpCorollary)?;
    cfg.validate()?;
    let t = teacher(cfg)?;
    let records = (0..cfg.trials)
        .into_par_iter()
        .map(|i| interp_corollary_trial(cfg, &t, i))
        .collect::<Result<Vec<_>>>()?;
    let mut rep = AggregateReport::new(cfg.clone(), records);
    if rep.records.is_empty() {
        return Ok(rep);
    }
    rep.aggregate_all();
    rep.collect_failures();
    let r_sq = feature_radius_sq(&cfg.kernel, cfg.radius);
    let bound = cfg.teacher_norm.powi(2) * r_sq / cfg.n as f64;
    rep.bounds.insert("corollary_bound".into(), bound);
    rep.bounds.insert("r_sq".into(), r_sq);

    let mut best: Option<(usize, Aggregate)> = None;
    for m in 1..=cfg.n {
        let a = rep.aggregates[&loss_key(m)].clone();
        if best.as_ref().is_none_or(|(_, b)| a.mean < b.mean) {
            best = Some((m, a));
        }
    }
    let (m_star, a) = best.expect("n >= 1");
    rep.bounds.insert("argmin_m".into(), m_star as f64);
    rep.verdicts.insert(
        "min_mean_loss".into(),
        Verdict::at_most(a.mean, bound + 3.0 * a.std_error, false),
    );
    let avg = &rep.aggregates["mean_loss_over_m"];
    rep.verdicts.insert(
        "mean_loss_over_m".into(),
        Verdict::at_most(avg.mean, bound + 3.0 * avg.std_error, false),
    );
    certificate_verdict(&mut rep, "telescoping_certificate");
    Ok(rep)
}

fn certificate_verdict(rep: &mut AggregateReport, key: &str) {
    let failures = rep.records.iter().filter(|r| r.passes.get(key) == Some(&false)).count();
    rep.verdicts.insert(key.into(), Verdict::at_most(failures as f64, 0.0, false));
}

fn expect_scenario(cfg: &TrialConfig, want: Scenario) -> Result<()> {
    if cfg.scenario != want {
        return Err(Error::invalid(format!("scenario {} given to the {} runner", cfg.scenario, want)));
    }
    Ok(())
}

/// Draws `count` examples from the teacher's margin distribution: inputs
/// uniform on the ball conditioned on `|teacher(x)| >= margin`, labeled by
/// the sign of the teacher.
fn margin_examples(rng: &mut RngStream, cfg: &TrialConfig, teacher: &Interpolator, count: usize) -> Result<Vec<LabeledExample>> {
    let mut out = Vec::with_capacity(count);
    let budget = count.saturating_mul(1_000_000).max(1);
    let mut attempts = 0usize;
    while out.len() < count {
        attempts += 1;
        if attempts > budget {
            return Err(Error::invalid("teacher attains the margin too rarely"));
        }
        let x = ball_points(rng, 1, cfg.d, cfg.radius).remove(0);
        let v = teacher.predict(&x)?;
        if v.abs() >= cfg.margin {
            out.push(LabeledExample::new(x, v.signum()));
        }
    }
    Ok(out)
}

/// Fraction of the input ball where the teacher attains the margin.
pub fn support_fraction(cfg: &TrialConfig, teacher: &Interpolator) -> Result<f64> {
    let mut rng = RngStream::new(cfg.seed.derive(TEACHER_STREAM - 1));
    let probe = ball_points(&mut rng, SUPPORT_PROBES, cfg.d, cfg.radius);
    let hits = teacher.predict_many(&probe)?.iter().filter(|v| v.abs() >= cfg.margin).count();
    Ok(hits as f64 / SUPPORT_PROBES as f64)
}

/// One trial: train on `n` margin draws, test on `test_points` fresh
/// draws, and record the leave-one-out certificate of the training sample.
pub fn svm_generalization_trial(cfg: &TrialConfig, teacher: &Interpolator, index: usize) -> Result<TrialRecord> {
    let seed = trial_seed(cfg, index);
    let mut rng = RngStream::new(seed);
    let r_sq = feature_radius_sq(&cfg.kernel, cfg.radius);
    let train = Dataset::new(margin_examples(&mut rng, cfg, teacher, cfg.n)?, Task::Classification)?;
    check_radius(cfg, &train.points(), r_sq)?;
    let test = margin_examples(&mut rng, cfg, teacher, cfg.test_points)?;
    let opts = SolverOptions::default();
    let construction = |e: Error| match e {
        Error::InfeasiblePrimal { .. } | Error::NonConvergence { .. } => {
            Error::Construction(format!("teacher-separable trial {index} failed to train: {e}"))
        }
        other => other,
    };
    let model = solve_hard_margin_with(&train, &cfg.kernel, &opts).map_err(construction)?;
    let xs: Vec<Point> = test.iter().map(|e| e.x.clone()).collect();
    let f = model.decision_many(&xs)?;
    let errors = test.iter().zip(f.iter()).filter(|(e, &v)| e.y * v <= 0.0).count();

    let mut rec = TrialRecord::new(index, seed);
    rec.set("test_error", errors as f64 / cfg.test_points as f64);
    rec.set("norm_sq", model.norm_sq);
    rec.check(
        "norm_within_teacher",
        model.norm_sq <= cfg.teacher_norm.powi(2) / cfg.margin.powi(2) * (1.0 + 1e-6) + 1e-9,
    );
    if cfg.n >= 2 {
        let loo = loo_report_with(&train, &cfg.kernel, &opts, DEFAULT_MARGIN_TOL).map_err(|e| match e {
            Error::LooSubproblem { source, .. } => construction(*source),
            other => construction(other),
        })?;
        rec.set("loo_mean_hinge", loo.mean_hinge);
        rec.set("loo_bound", loo.bound);
        rec.check("loo_certificate", loo.pass);
    }
    Ok(rec)
}

pub fn run_svm_generalization(cfg: &TrialConfig) -> Result<AggregateReport> {
    expect_scenario(cfg, Scenario::SvmGeneralization)?;
    cfg.validate()?;
    let t = teacher(cfg)?;
    let support = support_fraction(cfg, &t)?;
    if support < MIN_SUPPORT_FRACTION {
        return Err(Error::invalid(format!(
            "teacher attains margin {} on only {support} of the input ball",
            cfg.margin
        )));
    }
    let records = (0..cfg.trials)
        .into_par_iter()
        .map(|i| svm_generalization_trial(cfg, &t, i))
        .collect::<Result<Vec<_>>>()?;
    let mut rep = AggregateReport::new(cfg.clone(), records);
    if rep.records.is_empty() {
        return Ok(rep);
    }
    rep.aggregate_all();
    rep.collect_failures();
    let r_sq = feature_radius_sq(&cfg.kernel, cfg.radius);
    let bound = r_sq * cfg.teacher_norm.powi(2) / cfg.n as f64;
    rep.bounds.insert("generalization_bound".into(), bound);
    rep.bounds.insert("r_sq".into(), r_sq);
    rep.bounds.insert("support_fraction".into(), support);
    let a = &rep.aggregates["test_error"];
    rep.verdicts.insert(
        "misclassification".into(),
        Verdict::at_most(a.mean, bound + 3.0 * a.std_error, bound >= 1.0),
    );
    certificate_verdict(&mut rep, "norm_within_teacher");
    if cfg.n >= 2 {
        certificate_verdict(&mut rep, "loo_certificate");
    }
    Ok(rep)
}
