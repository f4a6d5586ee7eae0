//! Acceptance criteria. Each criterion prints one PASS or FAIL line; the
//! process exits nonzero if any fails.
//!
//! Reference values come from `oracles`, which recomputes Gram matrices,
//! interpolants, Schur complements, SVM margins and least-squares
//! minimizers directly from the instance data.

mod oracles;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use detgen::experiments::instances::{
    quadratic_pair, rkhs_instance, svm_instance, QuadraticLimits, QuadraticPair, RkhsInstance, RkhsLimits,
    SvmInstance, SvmLimits,
};
use detgen::experiments::{self, AggregateReport, Aggregate, Scenario, TrialConfig};
use detgen::interpolation::{
    dissimilarity_eig, dissimilarity_singleton, interp_tol, sharpness_witness, theorem1_report, DEFAULT_BOUND_TOL,
};
use detgen::maxmargin::{loo_report, solve_hard_margin, SplitSolution, SolverOptions, DEFAULT_KKT_TOL, DEFAULT_MAX_ITER};
use detgen::numerics::{RngStream, Seed};
use detgen::parametric::{
    check_metric_regularity, check_var_cvx, check_var_qg, default_rho, kappa_exact, localization_curve, DeltaGrid,
    Localization, QuadraticEvaluation,
};
use detgen::{Dataset, KernelSpec, Point, Task};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use oracles::LeastSquares;

const CORPUS_SEED: Seed = Seed(0x5eed_acce);

type Check = std::result::Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn lib<T>(r: detgen::Result<T>, what: &str) -> std::result::Result<T, String> {
    r.map_err(|e| format!("{what}: {e}"))
}

fn stream(family: u64, index: usize) -> RngStream {
    RngStream::new(CORPUS_SEED.derive(family).derive(index as u64))
}

fn rkhs_corpus(family: u64, count: usize, limits: RkhsLimits) -> Vec<RkhsInstance> {
    (0..count)
        .into_par_iter()
        .map(|i| rkhs_instance(&mut stream(family, i), &limits).expect("rkhs instance"))
        .collect()
}

fn theorem1_corpus() -> &'static [RkhsInstance] {
    static CORPUS: OnceLock<Vec<RkhsInstance>> = OnceLock::new();
    CORPUS.get_or_init(|| rkhs_corpus(1, 1000, RkhsLimits::default()))
}

fn svm_corpus() -> &'static [SvmInstance] {
    static CORPUS: OnceLock<Vec<SvmInstance>> = OnceLock::new();
    CORPUS.get_or_init(|| {
        (0..500)
            .into_par_iter()
            .map(|i| svm_instance(&mut stream(5, i), &SvmLimits::default()).expect("svm instance"))
            .collect()
    })
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / (1.0 + b.abs())
}

fn least_squares(q: &QuadraticEvaluation) -> LeastSquares {
    LeastSquares {
        x: q.design().clone(),
        y: q.targets().clone(),
    }
}

fn c1_theorem1() -> Check {
    let start = Instant::now();
    let corpus = theorem1_corpus();
    let stats = corpus
        .par_iter()
        .enumerate()
        .map(|(i, inst)| -> std::result::Result<(f64, f64), String> {
            let r = lib(theorem1_report(&inst.pair, &inst.kernel, DEFAULT_BOUND_TOL), "theorem1_report")?;
            let tol = 1e-7 * (1.0 + r.lhs.abs());
            ensure(r.slack_6 >= -tol && r.slack_7 >= -tol, || {
                format!("instance {i}: slack_6 {:e} slack_7 {:e}", r.slack_6, r.slack_7)
            })?;
            let t = oracles::split_truth(&inst.pair.s_in, &inst.pair.s_out, &inst.kernel);
            let gap = t.norm_sq_full - t.norm_sq_in;
            let oracle_slack = t.d_sq * gap - t.lhs;
            ensure(oracle_slack >= -1e-7 * (1.0 + t.lhs), || {
                format!("instance {i}: oracle slack {oracle_slack:e}")
            })?;
            let err = [
                rel_err(r.d_sq, t.d_sq),
                rel_err(r.lhs, t.lhs),
                rel_err(r.norm_sq_in, t.norm_sq_in),
                rel_err(r.norm_sq_full, t.norm_sq_full),
                rel_err(r.diff_norm_sq, gap),
            ]
            .into_iter()
            .fold(0.0, f64::max);
            ensure(err <= 1e-6, || format!("instance {i}: library and oracle differ by {err:e}"))?;
            Ok((r.slack_6.min(r.slack_7) / (1.0 + r.lhs.abs()), err))
        })
        .collect::<std::result::Result<Vec<_>, String>>()?;
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(30), || format!("took {elapsed:?}"))?;
    let worst = stats.iter().map(|s| s.0).fold(f64::INFINITY, f64::min);
    let err = stats.iter().map(|s| s.1).fold(0.0, f64::max);
    Ok(format!(
        "{} instances, min slack/(1+lhs) {worst:.3e}, max oracle rel err {err:.1e}, {elapsed:.1?}",
        corpus.len()
    ))
}

fn c2_singleton_equality() -> Check {
    let limits = RkhsLimits {
        max_out: 1,
        ..RkhsLimits::default()
    };
    let corpus = rkhs_corpus(2, 500, limits);
    let worst = corpus
        .par_iter()
        .enumerate()
        .map(|(i, inst)| -> std::result::Result<f64, String> {
            let r = lib(theorem1_report(&inst.pair, &inst.kernel, DEFAULT_BOUND_TOL), "theorem1_report")?;
            let scaled = r.slack_7.abs() / (1.0 + r.lhs);
            ensure(scaled <= 1e-6, || format!("instance {i}: |slack_7| {:e} lhs {}", r.slack_7, r.lhs))?;
            let t = oracles::split_truth(&inst.pair.s_in, &inst.pair.s_out, &inst.kernel);
            let oracle = (t.d_sq * (t.norm_sq_full - t.norm_sq_in) - t.lhs).abs() / (1.0 + t.lhs);
            ensure(oracle <= 1e-6, || format!("instance {i}: oracle |slack_7| {oracle:e}"))?;
            Ok(scaled)
        })
        .collect::<std::result::Result<Vec<_>, String>>()?
        .into_iter()
        .fold(0.0, f64::max);
    Ok(format!("{} instances, max |slack_7|/(1+lhs) {worst:.2e}", corpus.len()))
}

fn c3_dissimilarity_oracle() -> Check {
    let limits = RkhsLimits {
        max_dim: 3,
        max_in: 20,
        max_out: 3,
    };
    let corpus = rkhs_corpus(3, 200, limits);
    let rows = corpus
        .par_iter()
        .enumerate()
        .map(|(i, inst)| -> std::result::Result<(f64, Option<f64>), String> {
            let (s_in, s_out) = (&inst.pair.s_in, &inst.pair.s_out);
            let eig = lib(dissimilarity_eig(s_in, s_out, &inst.kernel), "dissimilarity_eig")?.d_sq;
            let t = oracles::split_truth(s_in, s_out, &inst.kernel);
            let search = oracles::dissimilarity_search(&t, s_in.len(), 100_000, &mut stream(33, i));
            ensure(search <= eig * (1.0 + 1e-9) + 1e-15, || {
                format!("instance {i}: random search {search:e} exceeds eigen value {eig:e}")
            })?;
            let rel = (eig - search).abs() / eig.max(f64::MIN_POSITIVE);
            ensure(rel <= 1e-3, || format!("instance {i}: eigen {eig:e} search {search:e}"))?;
            let singleton = if s_out.len() == 1 {
                let closed = lib(
                    dissimilarity_singleton(s_in, &s_out.examples()[0].x, &inst.kernel),
                    "dissimilarity_singleton",
                )?
                .d_sq;
                let gap = (eig - closed).abs();
                ensure(gap <= 1e-8 * (1.0 + closed), || format!("instance {i}: eigen {eig:e} closed form {closed:e}"))?;
                Some(gap)
            } else {
                None
            };
            Ok((rel, singleton))
        })
        .collect::<std::result::Result<Vec<_>, String>>()?;
    let worst = rows.iter().map(|r| r.0).fold(0.0, f64::max);
    let singles: Vec<f64> = rows.iter().filter_map(|r| r.1).collect();
    ensure(!singles.is_empty(), || "no singleton instances drawn".into())?;
    Ok(format!(
        "{} instances, max rel gap to search {worst:.2e}; {} singletons, max gap {:.1e}",
        rows.len(),
        singles.len(),
        singles.iter().copied().fold(0.0, f64::max)
    ))
}

fn c4_witness() -> Check {
    let corpus = theorem1_corpus();
    let margins = corpus
        .par_iter()
        .enumerate()
        .map(|(i, inst)| -> std::result::Result<f64, String> {
            let (s_in, s_out) = (&inst.pair.s_in, &inst.pair.s_out);
            let t = oracles::split_truth(s_in, s_out, &inst.kernel);
            let r = 1.5 * t.norm_sq_in.sqrt() + 0.5;
            let tol = interp_tol(s_in);
            let w = lib(sharpness_witness(&inst.pair, &inst.kernel, r, tol), "sharpness_witness")?;
            let pts: Vec<Point> = s_in.points().into_iter().chain(s_out.points()).collect();
            ensure(w.f_tilde.anchors == pts, || format!("instance {i}: witness anchors"))?;
            let c = &w.f_tilde.coeffs;
            let pred = &t.k_full * c;
            let (n, m) = (s_in.len(), s_out.len());
            let in_loss = (pred.rows(0, n) - s_in.labels()).norm_squared() / n as f64;
            let out_loss = (pred.rows(n, m) - s_out.labels()).norm_squared() / m as f64;
            let norm = c.dot(&pred).max(0.0).sqrt();
            let mut base = DVector::zeros(n + m);
            base.rows_mut(0, n).copy_from(&t.c_in);
            let diff = c - base;
            let diff_sq = diff.dot(&(&t.k_full * &diff)).max(0.0);
            let certified = t.d_sq * diff_sq;
            ensure(in_loss <= tol * tol && w.in_loss <= tol * tol, || {
                format!("instance {i}: in-sample loss {in_loss:e} (library {:e}) above {:e}", w.in_loss, tol * tol)
            })?;
            ensure(norm <= r + 1e-8 && w.f_tilde.norm_sq.sqrt() <= r + 1e-8, || {
                format!("instance {i}: norm {norm} above radius {r}")
            })?;
            ensure(out_loss >= certified - 1e-8 && w.achieved >= w.certified_rhs - 1e-8, || {
                format!("instance {i}: out-sample loss {out_loss:e} below {certified:e}")
            })?;
            Ok(out_loss - certified)
        })
        .collect::<std::result::Result<Vec<_>, String>>()?;
    let worst = margins.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(format!("{} witnesses, min out-loss margin {worst:.3e}", margins.len()))
}

fn c5_svm_identity() -> Check {
    let corpus = svm_corpus();
    let rows = corpus
        .par_iter()
        .enumerate()
        .map(|(i, inst)| -> std::result::Result<(f64, f64, f64), String> {
            let model = lib(
                solve_hard_margin(&inst.data, &inst.kernel, DEFAULT_KKT_TOL, DEFAULT_MAX_ITER),
                "solve_hard_margin",
            )?;
            let alpha = &model.alpha;
            ensure(alpha.iter().all(|&a| a >= 0.0), || format!("instance {i}: negative multiplier"))?;
            let q = oracles::signed_gram(&inst.kernel, &inst.data);
            let margins = &q * alpha;
            let norm_sq = alpha.dot(&margins);
            let identity = (alpha.sum() - norm_sq).abs() / (1.0 + norm_sq);
            let min_margin = margins.min();
            let slackness = margins
                .iter()
                .zip(alpha.iter())
                .map(|(m, a)| (a * (m - 1.0)).abs())
                .fold(0.0, f64::max);
            ensure(identity <= 1e-6, || format!("instance {i}: |sum alpha - |f|^2| / (1+|f|^2) = {identity:e}"))?;
            ensure(min_margin >= 1.0 - 1e-6, || format!("instance {i}: min margin {min_margin}"))?;
            ensure(slackness <= 1e-6, || format!("instance {i}: complementary slackness {slackness:e}"))?;
            ensure(rel_err(model.norm_sq, norm_sq) <= 1e-9, || {
                format!("instance {i}: reported |f|^2 {} vs {norm_sq}", model.norm_sq)
            })?;
            Ok((identity, 1.0 - min_margin, slackness))
        })
        .collect::<std::result::Result<Vec<_>, String>>()?;
    let max = |k: fn(&(f64, f64, f64)) -> f64| rows.iter().map(k).fold(f64::NEG_INFINITY, f64::max);
    Ok(format!(
        "{} instances, identity {:.1e}, margin deficit {:.1e}, slackness {:.1e}",
        rows.len(),
        max(|r| r.0),
        max(|r| r.1),
        max(|r| r.2)
    ))
}

fn c6_sandwich() -> Check {
    let corpus = svm_corpus();
    let worst = corpus
        .par_iter()
        .enumerate()
        .map(|(i, inst)| -> std::result::Result<f64, String> {
            let (s_in, s_out) = (&inst.split.s_in, &inst.split.s_out);
            let sol = lib(SplitSolution::new(&inst.split, &inst.kernel, &SolverOptions::default()), "split solve")?;
            let (n, m) = (s_in.len(), s_out.len());
            let combined = inst.split.combined();
            let q_full = oracles::signed_gram(&inst.kernel, &combined);
            let q_in = oracles::signed_gram(&inst.kernel, s_in);
            let q_out = oracles::signed_gram(&inst.kernel, s_out);
            let full_sq = sol.full.alpha.dot(&(&q_full * &sol.full.alpha));
            let inner_sq = sol.inner.alpha.dot(&(&q_in * &sol.inner.alpha));
            let deficit = oracles::svm_margins(&inst.kernel, s_in, &sol.inner.alpha, s_out).map(|v| 1.0 - v);
            let out_pts = s_out.points();
            let lam = oracles::lambda_max(&oracles::gram(&inst.kernel, &out_pts, &out_pts));
            let beta = sol.full.alpha.rows(n, m).into_owned();
            let upper = 0.5 * beta.dot(&(&q_out * &beta));
            let middle = 0.5 * (full_sq - inner_sq);

            let prescribed = deficit.map(|h| 2.0 * h.max(0.0) / lam);
            let lib_prescribed = sol.prescribed_gamma();
            ensure((&prescribed - &lib_prescribed).amax() <= 1e-8 * (1.0 + prescribed.amax()), || {
                format!("instance {i}: prescribed multipliers differ")
            })?;
            let mut rng = stream(66, i);
            let mut gammas = vec![prescribed];
            for _ in 0..100 {
                let scale = 10f64.powf(rng.uniform_range(-3.0, 1.0)) / lam;
                gammas.push(DVector::from_fn(m, |_, _| scale * rng.uniform()));
            }
            let mut worst = f64::INFINITY;
            for (g_idx, gamma) in gammas.iter().enumerate() {
                let rep = lib(sol.sandwich(gamma, 1e-6), "sandwich")?;
                let lower = -0.5 * gamma.dot(&(&q_out * gamma)) + gamma.dot(&deficit);
                let gaps = [rep.upper_gap, rep.lower_gap, upper - middle, middle - lower];
                let g = gaps.into_iter().fold(f64::INFINITY, f64::min);
                ensure(g >= -1e-6, || format!("instance {i} gamma {g_idx}: gaps {gaps:?}"))?;
                worst = worst.min(g);
            }
            Ok(worst)
        })
        .collect::<std::result::Result<Vec<_>, String>>()?
        .into_iter()
        .fold(f64::INFINITY, f64::min);
    Ok(format!("{} instances x 101 multipliers, min gap {worst:.3e}", corpus.len()))
}

fn c7_loo() -> Check {
    let corpus = svm_corpus();
    let rows = corpus
        .par_iter()
        .enumerate()
        .map(|(i, inst)| -> std::result::Result<(f64, f64), String> {
            let s = &inst.data;
            let loo = lib(loo_report(s, &inst.kernel, 1e-6), "loo_report")?;
            let model = lib(
                solve_hard_margin(s, &inst.kernel, DEFAULT_KKT_TOL, DEFAULT_MAX_ITER),
                "solve_hard_margin",
            )?;
            let q = oracles::signed_gram(&inst.kernel, s);
            let norm_sq = model.alpha.dot(&(&q * &model.alpha));
            let r_sq = s.points().iter().map(|p| oracles::kernel(&inst.kernel, p.coords(), p.coords())).fold(0.0, f64::max);
            let bound = r_sq * norm_sq / s.len() as f64;
            ensure(loo.mean_hinge <= bound + 1e-6 && loo.pass, || {
                format!("instance {i}: mean hinge {} above bound {bound}", loo.mean_hinge)
            })?;
            ensure(rel_err(loo.bound, bound) <= 1e-7, || format!("instance {i}: bound {} vs {bound}", loo.bound))?;
            let mut hinge_err = 0.0f64;
            if i < 50 {
                for j in 0..s.len() {
                    let rest = s.without(j).expect("n >= 2");
                    let sub = lib(
                        solve_hard_margin(&rest, &inst.kernel, DEFAULT_KKT_TOL, DEFAULT_MAX_ITER),
                        "loo subproblem",
                    )?;
                    let held = Dataset::new(vec![s.examples()[j].clone()], Task::Classification).expect("one example");
                    let margin = oracles::svm_margins(&inst.kernel, &rest, &sub.alpha, &held)[0];
                    hinge_err = hinge_err.max(((1.0 - margin).max(0.0) - loo.per_index_hinge[j]).abs());
                }
                ensure(hinge_err <= 1e-5, || format!("instance {i}: held-out hinge differs by {hinge_err:e}"))?;
            }
            Ok((bound - loo.mean_hinge, hinge_err))
        })
        .collect::<std::result::Result<Vec<_>, String>>()?;

    let two = Dataset::from_parts(vec![vec![1.0], vec![-1.0]], vec![1.0, -1.0], Task::Classification)
        .map_err(|e| e.to_string())?;
    let hand = lib(loo_report(&two, &KernelSpec::Linear, 1e-6), "two-point loo")?;
    ensure(hand.mean_hinge.abs() <= 1e-12 && (hand.bound - 0.5).abs() <= 1e-12, || {
        format!("two-point example: mean hinge {} bound {}", hand.mean_hinge, hand.bound)
    })?;
    let slack = rows.iter().map(|r| r.0).fold(f64::INFINITY, f64::min);
    let hinge = rows.iter().map(|r| r.1).fold(0.0, f64::max);
    Ok(format!(
        "{} instances, min bound - mean hinge {slack:.3e}, held-out hinge err {hinge:.1e}; two-point hinge {} bound {}",
        rows.len(),
        hand.mean_hinge,
        hand.bound
    ))
}

fn one_d_case() -> (QuadraticEvaluation, QuadraticEvaluation) {
    let q = |y: f64| QuadraticEvaluation::new(DMatrix::from_element(1, 1, 1.0), DVector::from_element(1, y)).unwrap();
    (q(0.0), q(1.0))
}

fn parametric_hand_cases() -> std::result::Result<(), String> {
    let (q_in, q_out) = one_d_case();
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-10;
    let mr = lib(check_metric_regularity(&q_in, &q_out), "metric regularity")?;
    ensure(close(mr.lhs, 1.0) && close(mr.rhs, 1.0), || format!("1-D metric regularity {} vs {}", mr.lhs, mr.rhs))?;
    for rho in [0.5, 1.0, 10.0] {
        let kappa = lib(kappa_exact(&q_in, &q_out, rho), "kappa")?;
        ensure(close(kappa, 2.0), || format!("1-D kappa {kappa} at rho {rho}"))?;
    }
    let loc = lib(Localization::new(&q_in, &q_out), "localization")?;
    for delta in [1e-3, 0.5, 2.0, 7.0] {
        let k = lib(loc.k(delta), "K")?;
        ensure(close(loc.h(delta), delta * delta) && close(k, 2.0 * delta), || {
            format!("1-D h/K at {delta}: {} {k}", loc.h(delta))
        })?;
    }
    let cvx = lib(check_var_cvx(&q_in, &q_out, &DeltaGrid::default()), "var_cvx")?;
    ensure(close(cvx.delta_star, 2.0) && close(cvx.distance, 1.0) && cvx.pass, || {
        format!("1-D delta_star {} distance {}", cvx.delta_star, cvx.distance)
    })?;
    Ok(())
}

struct ParametricRow {
    kappa_ratio: f64,
    chain_slack: Option<f64>,
}

fn parametric_instance(i: usize, pair: &QuadraticPair) -> std::result::Result<ParametricRow, String> {
    let (q_in, q_out) = (&pair.q_in, &pair.q_out);
    let (ls_in, ls_out) = (least_squares(q_in), least_squares(q_out));
    let mut rng = stream(88, i);
    let rho = lib(default_rho(q_in, q_out), "default_rho")?;
    let eps = 10f64.powf(rng.uniform_range(-4.0, 0.0));
    let qg = lib(check_var_qg(q_in, q_out, eps, rho, 20, CORPUS_SEED.derive(88).derive(i as u64)), "var_qg")?;
    ensure(qg.pass, || format!("instance {i}: var_qg max dist {} bound {}", qg.max_dist, qg.bound))?;

    let c = oracles::lambda_min_positive(&ls_in.gram());
    ensure(rel_err(qg.c, c) <= 1e-8, || format!("instance {i}: growth constant {} vs {c}", qg.c))?;
    let (p_in, range_in) = ls_in.min_norm();
    let null_in = DMatrix::identity(p_in.len(), p_in.len()) - &range_in;
    let unique = null_in.norm() < 1e-6;
    let grad_gap = |f: &DVector<f64>| (ls_out.derivative(f) - ls_in.derivative(f)).norm();
    let mut kappa_ratio = 0.0f64;
    for _ in 0..200 {
        let along = &null_in * rng.in_ball(p_in.len(), rho);
        let across = &range_in * rng.in_ball(p_in.len(), rho);
        let f = if unique { &p_in + rng.in_ball(p_in.len(), rho) } else { &p_in + along + across };
        kappa_ratio = kappa_ratio.max(grad_gap(&f) / qg.kappa);
    }
    ensure(kappa_ratio <= 1.0 + 1e-9, || format!("instance {i}: sampled |grad m| exceeds kappa by {kappa_ratio}"))?;

    let mr = lib(check_metric_regularity(q_in, q_out), "metric regularity")?;
    let (f_out, _) = ls_out.min_norm();
    let f_in = &p_in + &null_in * (&f_out - &p_in);
    let lhs = ls_out.increment(&f_out, &(&f_in - &f_out));
    let lipschitz = 2.0 * oracles::lambda_max(&ls_out.gram());
    let alpha = 2.0 * c;
    let rhs = lipschitz / (2.0 * alpha * alpha) * (ls_in.derivative(&f_out) - ls_out.derivative(&f_out)).norm_squared();
    ensure(mr.pass && lhs <= rhs + 1e-8, || format!("instance {i}: metric regularity {lhs:e} > {rhs:e}"))?;
    ensure(rel_err(mr.lhs, lhs) <= 1e-6 && rel_err(mr.rhs, rhs) <= 1e-6, || {
        format!("instance {i}: metric regularity library ({}, {}) oracle ({lhs}, {rhs})", mr.lhs, mr.rhs)
    })?;

    let mut chain_slack = None;
    if pair.full_rank {
        let grid = DeltaGrid::default();
        let cvx = lib(check_var_cvx(q_in, q_out, &grid), "var_cvx")?;
        let distance = (&f_out - &p_in).norm();
        ensure(cvx.pass && (cvx.vacuous || distance <= cvx.delta_star + 1e-9 * (1.0 + distance)), || {
            format!("instance {i}: distance {distance} delta_star {}", cvx.delta_star)
        })?;
        ensure(rel_err(cvx.distance, distance) <= 1e-6, || format!("instance {i}: distance {} vs {distance}", cvx.distance))?;
        if cvx.delta_star.is_finite() {
            let kappa = lib(kappa_exact(q_in, q_out, grid.stop), "kappa")?;
            let slack = kappa / c + 1e-6 - cvx.delta_star;
            ensure(slack >= 0.0, || format!("instance {i}: delta_star {} above kappa/c {}", cvx.delta_star, kappa / c))?;
            chain_slack = Some(slack);
        }
    }
    Ok(ParametricRow { kappa_ratio, chain_slack })
}

fn c8_parametric() -> Check {
    parametric_hand_cases()?;
    let limits = QuadraticLimits::default();
    let rows = (0..1000)
        .into_par_iter()
        .map(|i| {
            let pair = quadratic_pair(&mut stream(8, i), &limits, i % 2 == 0).map_err(|e| format!("instance {i}: {e}"))?;
            parametric_instance(i, &pair)
        })
        .collect::<std::result::Result<Vec<_>, String>>()?;
    let chains: Vec<f64> = rows.iter().filter_map(|r| r.chain_slack).collect();
    Ok(format!(
        "1-D cases exact; {} instances, max sampled |grad m|/kappa {:.4}, {} finite delta_star, min chain slack {:.3e}",
        rows.len(),
        rows.iter().map(|r| r.kappa_ratio).fold(0.0, f64::max),
        chains.len(),
        chains.iter().copied().fold(f64::INFINITY, f64::min)
    ))
}

/// `h` and `K` at `delta` by searching the sphere of radius `delta` around
/// `f_in`, plus the interior stationary point of the gap increment.
fn h_k_oracle(ls_in: &LeastSquares, ls_out: &LeastSquares, f_in: &DVector<f64>, delta: f64) -> (f64, f64) {
    let dim = f_in.len();
    let g_in = ls_in.gram();
    let a = ls_out.gram() - &g_in;
    let b_in = ls_in.derivative(f_in);
    let b = ls_out.derivative(f_in) - &b_in;
    let step = if dim == 3 { 2e-2 } else { 1e-3 };
    let inc_in = |u: &DVector<f64>| delta * delta * u.dot(&(&g_in * u)) + delta * b_in.dot(u);
    let phi = |d: &DVector<f64>| d.dot(&(&a * d)) + b.dot(d);
    let h = -oracles::sphere_max(dim, step, &|u| -inc_in(u));
    let up = oracles::sphere_max(dim, step, &|u| phi(&(u * delta)));
    let down = oracles::sphere_max(dim, step, &|u| -phi(&(u * delta)));
    let mut k = up.max(down).max(0.0);
    if let Some(inv) = a.clone().try_inverse() {
        let d_star = -0.5 * inv * &b;
        if d_star.norm() <= delta {
            k = k.max(phi(&d_star).abs());
        }
    }
    (h, k)
}

fn c9_h_k_oracle() -> Check {
    let limits = QuadraticLimits { max_dim: 3, max_n: 50 };
    let grid = DeltaGrid::default();
    let picks: Vec<usize> = (0..10).map(|j| j * (grid.count - 1) / 9).collect();
    let worst = (0..100)
        .into_par_iter()
        .map(|i| -> std::result::Result<f64, String> {
            let pair = quadratic_pair(&mut stream(9, i), &limits, true).map_err(|e| format!("instance {i}: {e}"))?;
            let curve = lib(localization_curve(&pair.q_in, &pair.q_out, &grid), "localization_curve")?;
            let (ls_in, ls_out) = (least_squares(&pair.q_in), least_squares(&pair.q_out));
            let f_in = ls_in.refined_minimizer();
            let mut worst = 0.0f64;
            for &p in &picks {
                let delta = curve.deltas[p];
                let (h, k) = h_k_oracle(&ls_in, &ls_out, &f_in, delta);
                let eh = (curve.h_vals[p] - h).abs() / h.abs().max(f64::MIN_POSITIVE);
                let ek = (curve.k_vals[p] - k).abs() / k.abs().max(f64::MIN_POSITIVE);
                ensure(eh <= 1e-3 && ek <= 1e-3, || {
                    format!(
                        "instance {i} delta {delta:e}: h {} vs {h}, K {} vs {k}",
                        curve.h_vals[p], curve.k_vals[p]
                    )
                })?;
                worst = worst.max(eh).max(ek);
            }
            Ok(worst)
        })
        .collect::<std::result::Result<Vec<_>, String>>()?
        .into_iter()
        .fold(0.0, f64::max);
    Ok(format!("100 instances x 10 radii, max rel gap {worst:.2e}"))
}

fn monte_carlo_reports() -> &'static std::result::Result<(Vec<AggregateReport>, Duration), String> {
    static REPORTS: OnceLock<std::result::Result<(Vec<AggregateReport>, Duration), String>> = OnceLock::new();
    REPORTS.get_or_init(|| {
        let start = Instant::now();
        let reports = monte_carlo_configs()
            .iter()
            .map(|cfg| lib(experiments::run(cfg), cfg.scenario.name()))
            .collect::<std::result::Result<Vec<_>, String>>()?;
        Ok((reports, start.elapsed()))
    })
}

fn monte_carlo_configs() -> Vec<TrialConfig> {
    let interp = TrialConfig {
        seed: Seed(7),
        teacher_norm: 2.0,
        kernel: KernelSpec::Gaussian { gamma: 1.0 },
        n: 20,
        trials: 2000,
        ..TrialConfig::for_scenario(Scenario::InterpCorollary)
    };
    let svm = TrialConfig {
        seed: Seed(7),
        n: 50,
        trials: 1000,
        ..TrialConfig::for_scenario(Scenario::SvmGeneralization)
    };
    vec![interp, svm]
}

fn c10_monte_carlo() -> Check {
    let (reports, elapsed) = monte_carlo_reports().as_ref().map_err(|e| e.clone())?;
    let (interp, svm) = (&reports[0], &reports[1]);

    let cfg = &interp.config;
    let r_sq = 1.0;
    let bound = cfg.teacher_norm.powi(2) * r_sq / cfg.n as f64;
    let (m_star, best) = (1..=cfg.n)
        .map(|m| (m, Aggregate::from_values(&interp.column(&format!("loss_m{m:03}"))).expect("trials > 0")))
        .min_by(|a, b| a.1.mean.total_cmp(&b.1.mean))
        .expect("n >= 1");
    ensure(best.count == cfg.trials, || format!("loss column has {} entries", best.count))?;
    ensure(best.mean <= bound + 3.0 * best.std_error && interp.verdicts["min_mean_loss"].pass, || {
        format!("interp: min_m mean {} (m = {m_star}) above {bound} + 3 x {}", best.mean, best.std_error)
    })?;

    let cfg = &svm.config;
    let bound_svm = r_sq * cfg.teacher_norm.powi(2) / cfg.n as f64;
    let err = Aggregate::from_values(&svm.column("test_error")).expect("trials > 0");
    ensure(err.count == cfg.trials, || format!("test_error column has {} entries", err.count))?;
    ensure(err.mean <= bound_svm + 3.0 * err.std_error && svm.verdicts["misclassification"].pass, || {
        format!("svm: error {} above {bound_svm} + 3 x {}", err.mean, err.std_error)
    })?;
    ensure(*elapsed < Duration::from_secs(120), || format!("took {elapsed:?}"))?;
    Ok(format!(
        "interp min_m mean {:.4} (m = {m_star}, se {:.4}) vs B^2R^2/n {bound}; svm error {:.4} (se {:.4}) vs {bound_svm:.3}; {elapsed:.1?}",
        best.mean, best.std_error, err.mean, err.std_error
    ))
}

fn records_identical(a: &experiments::TrialRecord, b: &experiments::TrialRecord) -> bool {
    let bits = |r: &experiments::TrialRecord| -> Vec<(String, u64)> {
        r.values.iter().map(|(k, v)| (k.clone(), v.to_bits())).collect()
    };
    a.trial == b.trial
        && a.seed == b.seed
        && a.passes == b.passes
        && a.error == b.error
        && bits(a) == bits(b)
        && serde_json::to_string(a).ok() == serde_json::to_string(b).ok()
}

fn c11_reproducibility() -> Check {
    let mut configs: Vec<TrialConfig> = Scenario::ALL
        .iter()
        .map(|&s| TrialConfig {
            seed: Seed(11),
            trials: 40,
            ..TrialConfig::for_scenario(s)
        })
        .collect();
    if let Ok((reports, _)) = monte_carlo_reports() {
        configs.extend(reports.iter().map(|r| r.config.clone()));
    }
    let mut replayed = 0;
    let mut failing = 0;
    for cfg in &configs {
        let first = lib(experiments::run(cfg), cfg.scenario.name())?;
        let second = lib(experiments::run(cfg), cfg.scenario.name())?;
        let (a, b) = (lib(first.body_json(), "body")?, lib(second.body_json(), "body")?);
        ensure(a == b, || format!("{}: report bodies differ", cfg.scenario))?;
        let mut indices: Vec<usize> = first.failing_seeds.iter().map(|f| f.trial).collect();
        failing += indices.len();
        indices.extend([0, cfg.trials / 2, cfg.trials - 1]);
        indices.sort_unstable();
        indices.dedup();
        for i in indices {
            let rec = lib(experiments::replay_trial(cfg, i), "replay")?;
            ensure(records_identical(&rec, &first.records[i]), || {
                format!("{} trial {i}: replay differs from the batch record", cfg.scenario)
            })?;
            replayed += 1;
        }
    }
    Ok(format!(
        "{} configurations with identical bodies; {replayed} replays bit-identical ({failing} failing seeds among them)",
        configs.len()
    ))
}

fn main() {
    let criteria: [(&str, fn() -> Check); 11] = [
        ("interpolation bounds on 1000 instances", c1_theorem1),
        ("singleton equality", c2_singleton_equality),
        ("dissimilarity against random search", c3_dissimilarity_oracle),
        ("sharpness witness", c4_witness),
        ("hard-margin strong duality and KKT", c5_svm_identity),
        ("sandwich inequalities", c6_sandwich),
        ("leave-one-out bound", c7_loo),
        ("quadratic growth, metric regularity, localization", c8_parametric),
        ("h and K against sphere search", c9_h_k_oracle),
        ("Monte Carlo corollaries", c10_monte_carlo),
        ("reproducibility", c11_reproducibility),
    ];
    let mut failed = 0;
    for (idx, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS [{:>2}] {name} ({secs:.1}s): {detail}", idx + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL [{:>2}] {name} ({secs:.1}s): {detail}", idx + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
