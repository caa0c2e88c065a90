use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use gpnn::data::{fit_whitening, load_csv, split, Recipe};
use gpnn::linalg::Matrix;
use gpnn::metrics::{evaluate, MetricsReport};
use gpnn::predict::{fit_with_report, sidecar_path, FitConfig, GpnnModel};
use gpnn::simulate::{run_full_joint, run_local, SimConfig, SweepResult, FULL_JOINT_MAX_N};
use gpnn::train::TrainConfig;
use gpnn::{Dataset, PredictiveDistribution};

use crate::config::{load_recipe, ExperimentConfig, SimulationConfig};
use crate::report::{metrics_csv, summary_csv, timing_line};

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn dataset_csv(ds: &Dataset) -> String {
    let mut s = String::new();
    let mut header: Vec<String> = ds.columns.clone();
    if header.len() != ds.dim() {
        header = (0..ds.dim()).map(|j| format!("x{j}")).collect();
    }
    header.push("y".into());
    s.push_str(&header.join(","));
    s.push('\n');
    for i in 0..ds.len() {
        for v in ds.x.row(i) {
            let _ = write!(s, "{v},");
        }
        let _ = writeln!(s, "{}", ds.y[i]);
    }
    s
}

/// Metrics in normalized output units, the scale the model works in.
fn normalized_metrics(model: &GpnnModel, test: &Dataset) -> Result<MetricsReport> {
    let preds = model
        .predict_batch_normalized(&test.x)
        .with_context(|| format!("predicting {} test rows", test.len()))?;
    Ok(evaluate(&preds, &model.whitening().transform_y(&test.y))?)
}

pub fn fit(cfg: &ExperimentConfig) -> Result<()> {
    cfg.validate()?;
    let recipe = cfg.recipe()?;
    let (data, load) =
        load_csv(&cfg.dataset, &recipe).with_context(|| format!("loading {}", cfg.dataset.display()))?;
    let out = &cfg.output_dir;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    write(&out.join("config.toml"), &toml::to_string(cfg)?)?;

    let mut timing = format!(
        "dataset {}: {} rows read, {} dropped (null {}, unparseable {})\n",
        cfg.dataset.display(),
        load.rows_read,
        load.dropped(),
        load.null_rows_dropped,
        load.unparseable_rows_dropped
    );
    let mut rows = Vec::new();
    for &seed in &cfg.seeds {
        let (train, test) = split(&data, cfg.train_fraction, seed)?;
        let fit_cfg = FitConfig {
            train: TrainConfig {
                seed: cfg.train.seed.wrapping_add(seed),
                ..cfg.train.clone()
            },
            kernel: cfg.kernel,
            m: cfg.m,
            calibration_size: cfg.calibration_size,
            calibrate: cfg.calibrate,
            seed,
            leaf_size: cfg.leaf_size,
        };
        let (model, report) = fit_with_report(&train, &fit_cfg).with_context(|| format!("fitting seed {seed}"))?;
        model.save(out.join(format!("model_seed{seed}.gpnn")))?;
        write(&out.join(format!("test_seed{seed}.csv")), &dataset_csv(&test))?;
        let metrics = normalized_metrics(&model, &test)?;
        write(&out.join(format!("metrics_seed{seed}.txt")), &metrics.to_key_value())?;
        timing.push_str(&timing_line(&format!("seed {seed}"), &report.timings));
        timing.push('\n');
        rows.push((format!("seed{seed}"), metrics));
    }
    write(&out.join("timing.txt"), &timing)?;
    write(&out.join("metrics.csv"), &metrics_csv(&rows))?;
    write(&out.join("summary.csv"), &summary_csv(&rows))?;
    print!("{timing}");
    print!("{}", summary_csv(&rows));
    Ok(())
}

pub fn evaluate_models(models: &[PathBuf], tests: &[PathBuf], recipe: Option<&Path>, out: &Path) -> Result<()> {
    if models.is_empty() {
        bail!("no model files given");
    }
    if tests.len() != 1 && tests.len() != models.len() {
        bail!("give one test file, or one per model ({} models, {} test files)", models.len(), tests.len());
    }
    let recipe = load_recipe(recipe)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut rows = Vec::new();
    for (k, model_path) in models.iter().enumerate() {
        let test_path = &tests[if tests.len() == 1 { 0 } else { k }];
        let model = GpnnModel::load(model_path).with_context(|| format!("loading model {}", model_path.display()))?;
        let (test, _) = load_csv(test_path, &recipe).with_context(|| format!("loading {}", test_path.display()))?;
        if test.dim() != model.dim() {
            bail!(
                "model {} expects {} input columns but {} has {}",
                model_path.display(),
                model.dim(),
                test_path.display(),
                test.dim()
            );
        }
        let label = model_path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let metrics = normalized_metrics(&model, &test)?;
        write(&out.join(format!("metrics_{label}.txt")), &metrics.to_key_value())?;
        rows.push((label, metrics));
    }
    write(&out.join("metrics.csv"), &metrics_csv(&rows))?;
    write(&out.join("summary.csv"), &summary_csv(&rows))?;
    print!("{}", summary_csv(&rows));
    Ok(())
}

fn read_features(path: &Path, has_header: bool, delimiter: u8) -> Result<Matrix> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .delimiter(delimiter)
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("opening {}", path.display()))?;
    let mut data = Vec::new();
    let mut cols = None;
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row: Vec<f64> = rec
            .iter()
            .map(|f| f.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .with_context(|| format!("row {} of {} is not numeric", i + 1, path.display()))?;
        if *cols.get_or_insert(row.len()) != row.len() {
            bail!("row {} of {} has {} fields, expected {}", i + 1, path.display(), row.len(), cols.unwrap());
        }
        data.extend(row);
    }
    let cols = cols.unwrap_or(0);
    let rows = if cols == 0 { 0 } else { data.len() / cols };
    Ok(Matrix::from_vec(rows, cols, data)?)
}

pub struct PredictArgs<'a> {
    pub model: &'a Path,
    pub input: &'a Path,
    pub recipe: Option<&'a Path>,
    pub output: Option<&'a Path>,
    pub normalized: bool,
    pub no_header: bool,
}

pub fn predict(args: PredictArgs<'_>) -> Result<()> {
    let model = GpnnModel::load(args.model).with_context(|| format!("loading model {}", args.model.display()))?;
    let x = match args.recipe {
        Some(r) => load_csv(args.input, &load_recipe(Some(r))?)?.0.x,
        None => read_features(args.input, !args.no_header, b',')?,
    };
    if x.cols() != model.dim() {
        bail!("model expects {} input columns, {} has {}", model.dim(), args.input.display(), x.cols());
    }
    let preds: Vec<PredictiveDistribution> =
        if args.normalized { model.predict_batch_normalized(&x)? } else { model.predict_batch(&x)? };
    let mut s = String::from("id,mean,variance\n");
    for (i, p) in preds.iter().enumerate() {
        let _ = writeln!(s, "{i},{},{}", p.mean, p.variance);
    }
    match args.output {
        Some(p) => write(p, &s),
        None => std::io::stdout().write_all(s.as_bytes()).context("writing predictions"),
    }
}

fn plot_data(res: &SweepResult) -> Vec<(String, String)> {
    ["mse", "nll", "cal"]
        .iter()
        .enumerate()
        .map(|(k, name)| {
            let mut s = format!("# {name} by assumed model; one block per n\n");
            let mut last_n = None;
            for e in &res.entries {
                if last_n != Some(e.n) {
                    if last_n.is_some() {
                        s.push_str("\n\n");
                    }
                    let _ = writeln!(s, "# n = {}\n# lengthscale_hat noise_var_hat signal_var_hat value stderr", e.n);
                    last_n = Some(e.n);
                }
                let r = &e.metrics;
                let (v, se) = match k {
                    0 => (r.report.mse, r.se_mse),
                    1 => (r.report.nll, r.se_nll),
                    _ => (r.report.cal, r.se_cal),
                };
                let t = &e.assumed.theta;
                let _ = writeln!(s, "{} {} {} {v} {se}", t.lengthscale, t.noise_var, t.signal_var);
            }
            (format!("{name}.dat"), s)
        })
        .collect()
}

pub fn simulate(cfg: &SimulationConfig) -> Result<()> {
    let assumed = cfg.assumed_models()?;
    let out = &cfg.output_dir;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    write(&out.join("config.toml"), &toml::to_string(cfg)?)?;
    let true_noise = cfg.generative.theta.noise_var;
    let mut sweep = SweepResult::default();
    let mut oracle = SweepResult::default();
    for &n in &cfg.ns {
        let sim = SimConfig {
            n,
            n_star: cfg.n_star,
            m: cfg.m,
            d: cfg.d,
            gen_kernel: cfg.generative.kernel,
            gen_theta: cfg.generative.theta,
            noise: cfg.noise,
            assumed: assumed.clone(),
            seed: cfg.seed,
        };
        sweep.entries.extend(run_local(&sim).with_context(|| format!("simulating n = {n}"))?.entries);
        if cfg.oracle {
            if n <= FULL_JOINT_MAX_N {
                oracle.entries.extend(run_full_joint(&sim)?.entries);
            } else {
                eprintln!("oracle skipped for n = {n} (limit {FULL_JOINT_MAX_N})");
            }
        }
    }
    write(&out.join("sweep.csv"), &sweep.to_long_csv(true_noise, cfg.m))?;
    if cfg.oracle {
        write(&out.join("sweep_oracle.csv"), &oracle.to_long_csv(true_noise, cfg.m))?;
    }
    if cfg.plot_data {
        for (name, body) in plot_data(&sweep) {
            write(&out.join(name), &body)?;
        }
    }
    println!("wrote {} sweep rows to {}", sweep.entries.len() * 3, out.join("sweep.csv").display());
    Ok(())
}

pub fn whiten(input: &Path, recipe: Option<&Path>, output: &Path) -> Result<()> {
    let recipe: Recipe = load_recipe(recipe)?;
    let (ds, _) = load_csv(input, &recipe).with_context(|| format!("loading {}", input.display()))?;
    let t = fit_whitening(&ds)?;
    let (x, y) = t.apply(&ds.x, Some(&ds.y))?;
    let white = Dataset {
        x,
        y: y.expect("targets supplied"),
        columns: ds.columns.clone(),
        provenance: format!("whitened {}", input.display()),
    };
    write(output, &dataset_csv(&white))?;
    let mut s = format!("d = {}\nmu_y = {}\nsigma_y = {}\n", t.d, t.mu_y, t.sigma_y);
    let join = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
    let _ = writeln!(s, "mu_x = {}", join(&t.mu_x));
    for i in 0..t.d {
        let _ = writeln!(s, "m_inv[{i}] = {}", join(t.m_inv.row(i)));
    }
    write(&sidecar_path(output), &s)
}
