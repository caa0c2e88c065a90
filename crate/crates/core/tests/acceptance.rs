//! Acceptance suite. Prints one PASS/FAIL/SKIP line per criterion and a
//! summary. With `GPNN_ACCEPTANCE_STRICT=1` the process exits non-zero when
//! any criterion fails; otherwise failures are reported but do not abort the
//! workspace test run.
//!
//! Pass criterion numbers as arguments to run a subset:
//! `cargo test -p gpnn --test acceptance -- 4 5`.

use std::time::Instant;

use gpnn::data::{load_csv, split, ColumnRef, Recipe};
use gpnn::gp::{nll_gradient, log_marginal_nll, predictive, PredictiveDistribution};
use gpnn::kernels::{gram, kernel, KernelSpec, Theta};
use gpnn::linalg::{cholesky, Matrix};
use gpnn::metrics::{evaluate, asymptotic_limits, MetricsWithErrors};
use gpnn::nn_index::NeighbourIndex;
use gpnn::predict::{calibration_indices, fit_with_report, FitConfig, GpnnModel};
use gpnn::simulate::{
    gen_oakley_ohagan, run_full_joint, run_local, stream_rng, AssumedModel, NoiseDist, OakleyCoefficients,
    SimConfig, SweepResult,
};
use gpnn::train::TrainConfig;
use gpnn::Dataset;
use rand::Rng;

// Tolerances and targets.
const SE_MULTIPLIER: f64 = 3.0;
const C1_MAX_SECONDS: f64 = 300.0;
const C3_MIN_SHRINK: f64 = 4.0;
const C5_EXACT_TOL: f64 = 1e-10;
const C6_GRAD_REL_TOL: f64 = 1e-4;
const C6_FD_STEP: f64 = 1e-5;
const C6_RESIDUAL_TOL: f64 = 1e-8;
const C6_PREDICTIVE_TOL: f64 = 1e-10;
const C8_MAX_RMSE: f64 = 0.22;
const C8_CAL_RANGE: (f64, f64) = (0.8, 1.2);

const FIG_THETA: Theta = Theta {
    lengthscale: 1.0,
    noise_var: 0.1,
    signal_var: 0.9,
};

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

fn verdict(ok: bool, detail: String) -> Outcome {
    if ok {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

fn fig_config(n: usize, m: usize, n_star: usize, seed: u64, assumed: Vec<AssumedModel>) -> SimConfig {
    SimConfig {
        n,
        n_star,
        m,
        d: 20,
        gen_kernel: KernelSpec::Rbf,
        gen_theta: FIG_THETA,
        noise: NoiseDist::Gaussian,
        assumed,
        seed,
    }
}

fn rbf(theta: Theta) -> AssumedModel {
    AssumedModel {
        kernel: KernelSpec::Rbf,
        theta,
    }
}

fn within_se(value: f64, target: f64, se: f64) -> bool {
    (value - target).abs() <= SE_MULTIPLIER * se
}

// Criteria 1 and 2 share one simulation run.
fn run_d20_limits() -> (SweepResult, f64) {
    let misspecified = Theta::new(1.0, 0.2, 0.9).unwrap();
    let cfg = fig_config(100_000, 100, 2000, 1, vec![rbf(FIG_THETA), rbf(misspecified)]);
    let t = Instant::now();
    let res = run_local(&cfg).expect("simulation");
    (res, t.elapsed().as_secs_f64())
}

fn criterion1(res: &SweepResult, secs: f64) -> Outcome {
    let r: &MetricsWithErrors = &res.entries[0].metrics;
    let target = 0.1 * (1.0 + 1.0 / 100.0);
    let ok = within_se(r.report.mse, target, r.se_mse) && secs <= C1_MAX_SECONDS;
    verdict(
        ok,
        format!(
            "MSE limit: mse = {:.5} +- {:.5} (target {target:.5}, {SE_MULTIPLIER} SE), runtime {secs:.1}s (<= {C1_MAX_SECONDS}s)",
            r.report.mse, r.se_mse
        ),
    )
}

fn criterion2(res: &SweepResult) -> Outcome {
    let r = &res.entries[1].metrics;
    let (_, cal_lim, nll_lim) = asymptotic_limits(0.1, 0.2, 100);
    let nll_target = 0.5 * ((0.2f64 * 1.01).ln() + 0.5 + (2.0 * std::f64::consts::PI).ln());
    assert!((nll_target - nll_lim).abs() < 1e-12);
    let ok_cal = within_se(r.report.cal, cal_lim, r.se_cal);
    let ok_nll = within_se(r.report.nll, nll_target, r.se_nll);
    verdict(
        ok_cal && ok_nll,
        format!(
            "misspecified limits: cal = {:.4} +- {:.4} (target {cal_lim}), nll = {:.4} +- {:.4} (target {nll_target:.4})",
            r.report.cal, r.se_cal, r.report.nll, r.se_nll
        ),
    )
}

fn criterion3() -> Outcome {
    let factors = [0.5, 0.75, 1.0, 1.5, 2.0];
    let assumed: Vec<AssumedModel> = factors
        .iter()
        .map(|&f| rbf(Theta::new(f * FIG_THETA.lengthscale, 0.2, 0.8).unwrap()))
        .collect();
    let spread = |n: usize, seed: u64| -> f64 {
        let res = run_local(&fig_config(n, 100, 2000, seed, assumed.clone())).expect("simulation");
        let mses: Vec<f64> = res.entries.iter().map(|e| e.metrics.report.mse).collect();
        mses.iter().cloned().fold(f64::MIN, f64::max) - mses.iter().cloned().fold(f64::MAX, f64::min)
    };
    let mut wins = 0;
    let mut ratios = Vec::new();
    for seed in [11, 12, 13] {
        let ratio = spread(1_000, seed) / spread(100_000, seed);
        if ratio >= C3_MIN_SHRINK {
            wins += 1;
        }
        ratios.push(format!("{ratio:.2}"));
    }
    verdict(
        wins >= 2,
        format!("robustness flattening: spread shrink ratios [{}] (need >= {C3_MIN_SHRINK} in 2 of 3 seeds)", ratios.join(", ")),
    )
}

fn criterion4() -> Outcome {
    let cfg = fig_config(200, 5, 2000, 21, vec![rbf(FIG_THETA)]);
    let a = run_local(&cfg).expect("local simulation").entries[0].metrics.clone();
    let b = run_full_joint(&cfg).expect("full-joint simulation").entries[0].metrics.clone();
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, va, sa, vb, sb) in [
        ("mse", a.report.mse, a.se_mse, b.report.mse, b.se_mse),
        ("nll", a.report.nll, a.se_nll, b.report.nll, b.se_nll),
        ("cal", a.report.cal, a.se_cal, b.report.cal, b.se_cal),
    ] {
        let se = (sa * sa + sb * sb).sqrt();
        ok &= (va - vb).abs() <= SE_MULTIPLIER * se;
        parts.push(format!("{name} {va:.4} vs {vb:.4} (3 SE = {:.4})", SE_MULTIPLIER * se));
    }
    verdict(ok, format!("local vs full-joint sampling: {}", parts.join("; ")))
}

fn oakley_split(n_train: usize, n_test: usize, seed: u64) -> (Dataset, Dataset) {
    let coeffs = OakleyCoefficients::bundled();
    let train = gen_oakley_ohagan(n_train, 0.1, &mut stream_rng(seed, 0), &coeffs);
    let test = gen_oakley_ohagan(n_test, 0.1, &mut stream_rng(seed, 1), &coeffs);
    (train, test)
}

fn criterion5() -> Outcome {
    let (train, test) = oakley_split(4000, 1000, 31);
    let cfg = FitConfig {
        m: 100,
        seed: 32,
        ..FitConfig::default()
    };
    let (model, report) = fit_with_report(&train, &cfg).expect("fit");
    let cal = report.calibration.expect("calibrated");
    let chosen = calibration_indices(model.n_train(), cfg.calibration_size, cfg.seed);
    let cx = model.index().points().select_rows(&chosen);
    let cy: Vec<f64> = chosen.iter().map(|&i| model.train_y()[i]).collect();
    let on_c = |theta: Theta| -> Vec<PredictiveDistribution> {
        let p = model.with_theta(theta);
        let pred = p.predictor();
        chosen
            .iter()
            .enumerate()
            .map(|(k, &i)| pred.predict_leave_out(cx.row(k), i).unwrap())
            .collect()
    };
    let theta_hat = model.theta_hat();
    let cal_a = evaluate(&on_c(model.theta()), &cy).unwrap().cal;
    let ok_a = (cal_a - 1.0).abs() <= C5_EXACT_TOL;

    let nll_at = |a: f64| evaluate(&on_c(theta_hat.scale_variances(a)), &cy).unwrap().nll;
    let best = nll_at(cal.alpha);
    let ok_b = [0.5, 0.75, 1.5, 2.0].iter().all(|&f| nll_at(f * cal.alpha) > best);

    let before = model.with_theta(theta_hat).predict_batch_normalized(&test.x).unwrap();
    let after = model.predict_batch_normalized(&test.x).unwrap();
    let ty = model.whitening().transform_y(&test.y);
    let mse_before = evaluate(&before, &ty).unwrap().mse;
    let mse_after = evaluate(&after, &ty).unwrap().mse;
    let ok_c = (mse_before - mse_after).abs() <= C5_EXACT_TOL;
    verdict(
        ok_a && ok_b && ok_c,
        format!(
            "calibration exactness: alpha = {:.4}; (a) cal on C = {cal_a:.12}; (b) nll minimized at alpha = {}; (c) |dMSE| = {:.2e}",
            cal.alpha,
            ok_b,
            (mse_before - mse_after).abs()
        ),
    )
}

fn random_theta<R: Rng>(rng: &mut R) -> Theta {
    Theta::new(
        rng.random_range(0.3f64..3.0),
        rng.random_range(0.01f64..1.0),
        rng.random_range(0.2f64..3.0),
    )
    .unwrap()
}

fn random_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> Matrix {
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn gradient_check() -> f64 {
    let mut rng = stream_rng(61, 0);
    let mut worst = 0.0f64;
    for draw in 0..100 {
        let spec = KernelSpec::ALL[draw % 3];
        let s = rng.random_range(3..30);
        let d = rng.random_range(1..5);
        let x = random_matrix(&mut rng, s, d);
        let y: Vec<f64> = (0..s).map(|_| rng.random_range(-2.0..2.0)).collect();
        let theta = random_theta(&mut rng);
        let g = nll_gradient(&theta, spec, &x, &y).unwrap();
        let p = theta.to_log();
        let mut fd = [0.0; 3];
        for k in 0..3 {
            let (mut up, mut dn) = (p, p);
            up[k] += C6_FD_STEP;
            dn[k] -= C6_FD_STEP;
            let lu = log_marginal_nll(&Theta::from_log(up), spec, &x, &y).unwrap();
            let ld = log_marginal_nll(&Theta::from_log(dn), spec, &x, &y).unwrap();
            fd[k] = (lu - ld) / (2.0 * C6_FD_STEP);
        }
        let scale = fd.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1e-8);
        for k in 0..3 {
            worst = worst.max((g[k] - fd[k]).abs() / scale);
        }
    }
    worst
}

fn knn_check() -> usize {
    let mut rng = stream_rng(62, 0);
    let dims = [1, 2, 10, 50];
    let mut mismatches = 0;
    for ds in 0..100 {
        let d = dims[ds % 4];
        let n = rng.random_range(1..2000);
        let pts = random_matrix(&mut rng, n, d);
        let index = NeighbourIndex::build(pts.clone(), rng.random_range(1..64)).unwrap();
        for _ in 0..10 {
            let q: Vec<f64> = (0..d).map(|_| rng.random_range(-1.2..1.2)).collect();
            let m = rng.random_range(1..60);
            let mut brute: Vec<(f64, usize)> = (0..n)
                .map(|i| (pts.row(i).iter().zip(&q).map(|(a, b)| (a - b) * (a - b)).sum(), i))
                .collect();
            brute.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let want: Vec<usize> = brute.iter().take(m).map(|p| p.1).collect();
            if index.query(&q, m).unwrap().indices != want {
                mismatches += 1;
            }
        }
    }
    mismatches
}

fn cholesky_check() -> (f64, f64) {
    let mut rng = stream_rng(63, 0);
    let (mut worst_rec, mut worst_solve) = (0.0f64, 0.0f64);
    for _ in 0..20 {
        let n = rng.random_range(2..80);
        let b = random_matrix(&mut rng, n, n);
        let mut a = b.matmul(&b.transpose()).unwrap();
        for i in 0..n {
            a[(i, i)] += 0.1;
        }
        let chol = cholesky(&a).unwrap();
        let rec = chol.reconstruct();
        let mut diff = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                diff += (rec[(i, j)] - a[(i, j)]).powi(2);
            }
        }
        worst_rec = worst_rec.max(diff.sqrt() / a.frobenius_norm());
        let rhs: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x = chol.solve(&rhs).unwrap();
        let ax = a.matvec(&x).unwrap();
        let res: f64 = ax.iter().zip(&rhs).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
        let norm: f64 = rhs.iter().map(|v| v * v).sum::<f64>().sqrt();
        worst_solve = worst_solve.max(res / norm);
    }
    (worst_rec, worst_solve)
}

// Explicit inverse by cofactors for matrices up to 3x3.
fn cofactor_inverse(a: &Matrix) -> Matrix {
    let n = a.rows();
    let det2 = |p: f64, q: f64, r: f64, s: f64| p * s - q * r;
    match n {
        1 => Matrix::from_rows(&[vec![1.0 / a[(0, 0)]]]),
        2 => {
            let det = det2(a[(0, 0)], a[(0, 1)], a[(1, 0)], a[(1, 1)]);
            Matrix::from_rows(&[
                vec![a[(1, 1)] / det, -a[(0, 1)] / det],
                vec![-a[(1, 0)] / det, a[(0, 0)] / det],
            ])
        }
        3 => {
            let mut cof = Matrix::zeros(3, 3);
            for i in 0..3 {
                for j in 0..3 {
                    let r: Vec<usize> = (0..3).filter(|&k| k != i).collect();
                    let c: Vec<usize> = (0..3).filter(|&k| k != j).collect();
                    let minor = det2(a[(r[0], c[0])], a[(r[0], c[1])], a[(r[1], c[0])], a[(r[1], c[1])]);
                    cof[(i, j)] = if (i + j) % 2 == 0 { minor } else { -minor };
                }
            }
            let det: f64 = (0..3).map(|j| a[(0, j)] * cof[(0, j)]).sum();
            let mut inv = Matrix::zeros(3, 3);
            for i in 0..3 {
                for j in 0..3 {
                    inv[(i, j)] = cof[(j, i)] / det;
                }
            }
            inv
        }
        _ => unreachable!(),
    }
}

fn predictive_oracle_check() -> f64 {
    let mut rng = stream_rng(64, 0);
    let mut worst = 0.0f64;
    for draw in 0..300 {
        let spec = KernelSpec::ALL[draw % 3];
        let m = 1 + draw % 3;
        let d = rng.random_range(1..4);
        let theta = random_theta(&mut rng);
        let xn = random_matrix(&mut rng, m, d);
        let y: Vec<f64> = (0..m).map(|_| rng.random_range(-2.0..2.0)).collect();
        let xs: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let kinv = cofactor_inverse(&gram(&theta, spec, &xn));
        let k: Vec<f64> = (0..m).map(|i| kernel(&theta, spec, xn.row(i), &xs, false).unwrap()).collect();
        let kinv_k = kinv.matvec(&k).unwrap();
        let mean: f64 = kinv_k.iter().zip(&y).map(|(a, b)| a * b).sum();
        let var = theta.signal_var - kinv_k.iter().zip(&k).map(|(a, b)| a * b).sum::<f64>() + theta.noise_var;
        let p = predictive(&theta, spec, &xn, &y, &xs).unwrap();
        worst = worst.max((p.mean - mean).abs()).max((p.variance - var).abs());
    }
    worst
}

fn criterion6() -> Outcome {
    let grad = gradient_check();
    let knn = knn_check();
    let (rec, solve) = cholesky_check();
    let pred = predictive_oracle_check();
    let ok = grad < C6_GRAD_REL_TOL && knn == 0 && rec < C6_RESIDUAL_TOL && solve < C6_RESIDUAL_TOL && pred < C6_PREDICTIVE_TOL;
    verdict(
        ok,
        format!(
            "numerical oracles: gradient rel err {grad:.2e} (< {C6_GRAD_REL_TOL:e}); kNN mismatches {knn}/1000; \
             cholesky residual {rec:.2e}, solve residual {solve:.2e} (< {C6_RESIDUAL_TOL:e}); predictive vs cofactor inverse {pred:.2e} (< {C6_PREDICTIVE_TOL:e})"
        ),
    )
}

fn criterion7() -> Outcome {
    let sizes = [10_000, 100_000, 500_000];
    let n_test = 1000;
    let coeffs = OakleyCoefficients::bundled();
    let full = gen_oakley_ohagan(*sizes.last().unwrap(), 0.1, &mut stream_rng(71, 0), &coeffs);
    let test = gen_oakley_ohagan(n_test, 0.1, &mut stream_rng(71, 1), &coeffs);
    let limit = 0.1 * (1.0 + 1.0 / 400.0);
    let mse = |kernel: KernelSpec, n: usize| -> f64 {
        let idx: Vec<usize> = (0..n).collect();
        let cfg = FitConfig {
            kernel,
            m: 400,
            calibrate: false,
            seed: 72,
            train: TrainConfig {
                seed: 73,
                ..TrainConfig::default()
            },
            ..FitConfig::default()
        };
        let model: GpnnModel = gpnn::predict::fit(&full.subset(&idx), &cfg).expect("fit");
        let preds = model.predict_batch(&test.x).expect("predict");
        evaluate(&preds, &test.y).unwrap().mse
    };
    let rbf_mse: Vec<f64> = sizes.iter().map(|&n| mse(KernelSpec::Rbf, n)).collect();
    let exp_mse: Vec<f64> = sizes.iter().map(|&n| mse(KernelSpec::Exponential, n)).collect();
    let approaches = |v: &[f64]| {
        let gaps: Vec<f64> = v.iter().map(|x| (x - limit).abs()).collect();
        v.windows(2).all(|w| w[1] < w[0]) && gaps.windows(2).all(|w| w[1] < w[0])
    };
    let exp_better = exp_mse[2] <= rbf_mse[2];
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join(", ");
    verdict(
        approaches(&rbf_mse) && approaches(&exp_mse) && exp_better,
        format!(
            "Oakley-O'Hagan, laplace noise, n = {sizes:?}: RBF mse [{}], exponential mse [{}] (strictly decreasing toward {limit}; exponential <= RBF at largest n)",
            fmt(&rbf_mse),
            fmt(&exp_mse)
        ),
    )
}

fn criterion8() -> Outcome {
    let Ok(path) = std::env::var("GPNN_POLETELE_CSV") else {
        return Outcome::Skip("UCI Poletele: set GPNN_POLETELE_CSV to a local copy of parkinsons_updrs.data".into());
    };
    let recipe = Recipe {
        target: ColumnRef::Name("total_UPDRS".into()),
        drop: vec![ColumnRef::Name("subject#".into()), ColumnRef::Name("test_time".into())],
        ..Recipe::last_column_target()
    };
    let (ds, _) = match load_csv(&path, &recipe) {
        Ok(v) => v,
        Err(e) => return Outcome::Fail(format!("UCI Poletele: cannot load {path}: {e}")),
    };
    let mut rmse = 0.0;
    let mut cal = 0.0;
    let seeds = [0u64, 1, 2];
    for &seed in &seeds {
        let (train, test) = split(&ds, 7.0 / 9.0, seed).expect("split");
        let cfg = FitConfig {
            seed,
            train: TrainConfig {
                seed,
                ..TrainConfig::default()
            },
            ..FitConfig::default()
        };
        let model = gpnn::predict::fit(&train, &cfg).expect("fit");
        let preds = model.predict_batch_normalized(&test.x).expect("predict");
        let r = evaluate(&preds, &model.whitening().transform_y(&test.y)).unwrap();
        rmse += r.rmse / seeds.len() as f64;
        cal += r.cal / seeds.len() as f64;
    }
    verdict(
        rmse <= C8_MAX_RMSE && cal >= C8_CAL_RANGE.0 && cal <= C8_CAL_RANGE.1,
        format!("UCI Poletele: mean rmse {rmse:.4} (<= {C8_MAX_RMSE}), mean cal {cal:.3} (in {C8_CAL_RANGE:?})"),
    )
}

fn main() {
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let wanted = |k: usize| selected.is_empty() || selected.contains(&k);
    let mut results: Vec<(usize, Outcome, f64)> = Vec::new();

    if wanted(1) || wanted(2) {
        let t = Instant::now();
        let (res, secs) = run_d20_limits();
        let elapsed = t.elapsed().as_secs_f64();
        if wanted(1) {
            results.push((1, criterion1(&res, secs), elapsed));
        }
        if wanted(2) {
            results.push((2, criterion2(&res), 0.0));
        }
    }
    let rest: [(usize, fn() -> Outcome); 6] = [
        (3, criterion3),
        (4, criterion4),
        (5, criterion5),
        (6, criterion6),
        (7, criterion7),
        (8, criterion8),
    ];
    for (k, f) in rest {
        if wanted(k) {
            let t = Instant::now();
            let outcome = f();
            results.push((k, outcome, t.elapsed().as_secs_f64()));
        }
    }

    let mut failed = 0;
    for (k, outcome, secs) in &results {
        let (tag, detail) = match outcome {
            Outcome::Pass(d) => ("PASS", d),
            Outcome::Fail(d) => {
                failed += 1;
                ("FAIL", d)
            }
            Outcome::Skip(d) => ("SKIP", d),
        };
        println!("criterion {k}: {tag} [{secs:.1}s] {detail}");
    }
    let passed = results.iter().filter(|r| matches!(r.1, Outcome::Pass(_))).count();
    let skipped = results.len() - passed - failed;
    println!("acceptance: {passed} passed, {failed} failed, {skipped} skipped");
    let strict = std::env::var("GPNN_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    if strict && failed > 0 {
        std::process::exit(1);
    }
}
