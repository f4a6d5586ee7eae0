//! Batch execution of the deterministic certificates over random instances.

use nalgebra::DVector;
use rayon::prelude::*;

use super::config::{Scenario, TrialConfig};
use super::instances::{quadratic_pair, rkhs_instance, svm_instance, QuadraticLimits, RkhsLimits, SvmLimits};
use super::montecarlo::trial_seed;
use super::report::{Aggregate, AggregateReport, TrialRecord, Verdict};
use crate::error::{Error, Result};
use crate::interpolation::{
    dissimilarity_singleton, interp_tol, sharpness_witness, theorem1_report, DEFAULT_BOUND_TOL,
};
use crate::maxmargin::{batch_bound_from, loo_report, SplitSolution, SolverOptions, DEFAULT_MARGIN_TOL};
use crate::numerics::rng::RngStream;
use crate::parametric::{
    check_metric_regularity, check_var_cvx, check_var_qg, default_rho, kappa_exact, DeltaGrid,
};

/// Absolute slack of the witness inequalities.
const WITNESS_TOL: f64 = 1e-8;
/// Relative agreement of the eigen and closed-form singleton `D^2`.
const SINGLETON_TOL: f64 = 1e-8;
/// Absolute slack of the `delta_star <= kappa / c` chain.
const CHAIN_TOL: f64 = 1e-6;

fn record_check<T>(rec: &mut TrialRecord, key: &str, r: Result<T>, f: impl FnOnce(&mut TrialRecord, T) -> bool) {
    match r {
        Ok(v) => {
            let pass = f(rec, v);
            rec.check(key, pass);
        }
        Err(e) => rec.fail_with(key, &e),
    }
}

/// Theorem-1 bounds, the sharpness witness and the singleton closed form
/// on one random interpolation instance.
pub fn interp_sweep_trial(cfg: &TrialConfig, index: usize) -> TrialRecord {
    let seed = trial_seed(cfg, index);
    let mut rng = RngStream::new(seed);
    let mut rec = TrialRecord::new(index, seed);
    let limits = RkhsLimits {
        max_dim: cfg.d,
        max_in: cfg.n,
        max_out: cfg.n_out,
    };
    let inst = match rkhs_instance(&mut rng, &limits) {
        Ok(i) => i,
        Err(e) => {
            rec.fail_with("instance", &e);
            return rec;
        }
    };
    let (pair, k) = (&inst.pair, &inst.kernel);
    rec.set("n_in", pair.s_in.len() as f64);
    rec.set("n_out", pair.s_out.len() as f64);

    let report = theorem1_report(pair, k, DEFAULT_BOUND_TOL);
    let mut norm_in = None;
    record_check(&mut rec, "theorem1", report, |rec, r| {
        let tol = DEFAULT_BOUND_TOL * (1.0 + r.lhs.abs());
        rec.set("slack_6", r.slack_6);
        rec.set("slack_7", r.slack_7);
        rec.set("d_sq", r.d_sq);
        norm_in = Some(r.norm_sq_in.sqrt());
        r.slack_6 >= -tol && r.slack_7 >= -tol
    });

    if let Some(norm_in) = norm_in {
        let r = 1.5 * norm_in + 0.5;
        let tol = interp_tol(&pair.s_in);
        record_check(&mut rec, "witness", sharpness_witness(pair, k, r, tol), |rec, w| {
            let norm = w.f_tilde.norm_sq.sqrt();
            rec.set("witness_in_loss", w.in_loss);
            rec.set("witness_margin", w.achieved - w.certified_rhs);
            w.in_loss <= tol * tol && norm <= r + WITNESS_TOL && w.achieved >= w.certified_rhs - WITNESS_TOL
        });
    }

    if pair.s_out.len() == 1 {
        let x = &pair.s_out.examples()[0].x;
        let closed = dissimilarity_singleton(&pair.s_in, x, k);
        let eig = rec.value("d_sq");
        record_check(&mut rec, "singleton_closed_form", closed, |rec, c| {
            let gap = eig.map(|e| (e - c.d_sq).abs()).unwrap_or(f64::INFINITY);
            rec.set("singleton_gap", gap);
            gap <= SINGLETON_TOL * (1.0 + c.d_sq)
        });
    }
    rec
}

/// Strong duality, KKT conditions, the sandwich under the prescribed and
/// random multipliers, the batch bound and the leave-one-out bound on one
/// random separable instance.
pub fn svm_sweep_trial(cfg: &TrialConfig, index: usize) -> TrialRecord {
    let seed = trial_seed(cfg, index);
    let mut rng = RngStream::new(seed);
    let mut rec = TrialRecord::new(index, seed);
    let limits = SvmLimits {
        max_dim: cfg.d,
        max_n: cfg.n.max(2),
    };
    let inst = match svm_instance(&mut rng, &limits) {
        Ok(i) => i,
        Err(e) => {
            rec.fail_with("instance", &e);
            return rec;
        }
    };
    let tol = DEFAULT_MARGIN_TOL;
    rec.set("n", inst.data.len() as f64);
    let sol = match SplitSolution::new(&inst.split, &inst.kernel, &SolverOptions::default()) {
        Ok(s) => s,
        Err(e) => {
            rec.fail_with("solve", &e);
            return rec;
        }
    };
    let full = &sol.full;
    let identity_gap = (full.dual_sum() - full.norm_sq).abs();
    rec.set("identity_gap", identity_gap);
    rec.check("strong_duality", identity_gap <= tol * (1.0 + full.norm_sq));
    record_check(&mut rec, "kkt", full.margins(&inst.data), |rec, m| {
        let min_margin = m.min();
        let slackness = m
            .iter()
            .zip(full.alpha.iter())
            .map(|(mi, a)| (a * (mi - 1.0)).abs())
            .fold(0.0, f64::max);
        rec.set("min_margin", min_margin);
        rec.set("complementary_slackness", slackness);
        min_margin >= 1.0 - tol && slackness <= tol
    });

    let mut worst_upper = f64::INFINITY;
    let mut worst_lower = f64::INFINITY;
    let mut gammas = vec![sol.prescribed_gamma()];
    let m = sol.q_out.nrows();
    for _ in 0..cfg.random_gammas {
        let scale = 10f64.powf(rng.uniform_range(-3.0, 1.0)) / sol.lambda_max_out.max(1e-300);
        gammas.push(DVector::from_fn(m, |_, _| rng.uniform() * scale));
    }
    let mut sandwich_ok = true;
    for g in &gammas {
        match sol.sandwich(g, tol) {
            Ok(s) => {
                worst_upper = worst_upper.min(s.upper_gap);
                worst_lower = worst_lower.min(s.lower_gap);
                sandwich_ok &= s.pass;
            }
            Err(e) => {
                rec.fail_with("sandwich", &e);
                sandwich_ok = false;
                break;
            }
        }
    }
    if rec.passes.get("sandwich").is_none() {
        rec.check("sandwich", sandwich_ok);
    }
    rec.set("sandwich_upper_gap", worst_upper);
    rec.set("sandwich_lower_gap", worst_lower);

    record_check(&mut rec, "batch_bound", batch_bound_from(&sol, &inst.split, None, tol), |rec, b| {
        rec.set("batch_slack", b.rhs - b.lhs);
        b.pass
    });
    record_check(&mut rec, "loo", loo_report(&inst.data, &inst.kernel, tol), |rec, l| {
        rec.set("loo_slack", l.bound - l.mean_hinge);
        l.pass
    });
    rec
}

/// Quadratic growth, metric regularity and localization on one random
/// pair of least-squares evaluations. Localization needs unique minimizers
/// and runs on the full-rank half of the instances.
pub fn parametric_sweep_trial(cfg: &TrialConfig, index: usize) -> TrialRecord {
    let seed = trial_seed(cfg, index);
    let mut rng = RngStream::new(seed);
    let mut rec = TrialRecord::new(index, seed);
    let full_rank = rng.bernoulli(0.5) && cfg.n >= 1;
    let limits = QuadraticLimits {
        max_dim: cfg.d,
        max_n: cfg.n,
    };
    let pair = match quadratic_pair(&mut rng, &limits, full_rank) {
        Ok(p) => p,
        Err(e) => {
            rec.fail_with("instance", &e);
            return rec;
        }
    };
    let (q_in, q_out) = (&pair.q_in, &pair.q_out);
    let eps = 10f64.powf(rng.uniform_range(-4.0, 0.0));
    let qg_seed = seed.derive(1);
    let qg = default_rho(q_in, q_out).and_then(|rho| check_var_qg(q_in, q_out, eps, rho, cfg.trial_dirs, qg_seed));
    record_check(&mut rec, "var_qg", qg, |rec, r| {
        rec.set("qg_slack", r.bound - r.max_dist);
        rec.set("qg_trials", r.trials as f64);
        r.pass
    });
    record_check(&mut rec, "metric_regularity", check_metric_regularity(q_in, q_out), |rec, r| {
        rec.set("metric_regularity_slack", r.rhs - r.lhs);
        r.pass
    });
    if full_rank {
        let grid = DeltaGrid::default();
        record_check(&mut rec, "var_cvx", check_var_cvx(q_in, q_out, &grid), |rec, r| {
            rec.set("cvx_slack", r.delta_star - r.distance);
            rec.set("delta_star", r.delta_star);
            r.pass
        });
        if let Some(ds) = rec.value("delta_star").filter(|d| d.is_finite()) {
            let chain = q_in
                .growth_constant()
                .and_then(|c| Ok(kappa_exact(q_in, q_out, grid.stop)? / c));
            record_check(&mut rec, "localization_chain", chain, |rec, ratio| {
                rec.set("chain_slack", ratio - ds);
                ds <= ratio + CHAIN_TOL
            });
        }
    }
    rec
}

pub fn run_bound_sweeps(cfg: &TrialConfig) -> Result<AggregateReport> {
    cfg.validate()?;
    let trial: fn(&TrialConfig, usize) -> TrialRecord = match cfg.scenario {
        Scenario::InterpBoundsSweep => interp_sweep_trial,
        Scenario::SvmBoundsSweep => svm_sweep_trial,
        Scenario::ParametricSweep => parametric_sweep_trial,
        other => return Err(Error::invalid(format!("{other} is not a sweep scenario"))),
    };
    let records: Vec<TrialRecord> = (0..cfg.trials).into_par_iter().map(|i| trial(cfg, i)).collect();
    let mut rep = AggregateReport::new(cfg.clone(), records);
    rep.aggregate_all();
    rep.collect_failures();
    let checks: std::collections::BTreeSet<String> =
        rep.records.iter().flat_map(|r| r.passes.keys().cloned()).collect();
    for check in checks {
        let outcomes: Vec<f64> = rep
            .records
            .iter()
            .filter_map(|r| r.passes.get(&check))
            .map(|&p| if p { 1.0 } else { 0.0 })
            .collect();
        let failures = outcomes.iter().filter(|&&v| v == 0.0).count();
        if let Some(a) = Aggregate::from_values(&outcomes) {
            rep.aggregates.insert(format!("pass_rate_{check}"), a);
        }
        rep.verdicts.insert(check, Verdict::at_most(failures as f64, 0.0, false));
    }
    Ok(rep)
}
