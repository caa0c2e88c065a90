//! Large-`n` behaviour of the simulator, reported like the acceptance suite:
//! one PASS/FAIL line per property, non-zero exit only with
//! `GPNN_ACCEPTANCE_STRICT=1`.

use gpnn::kernels::{KernelSpec, Theta};
use gpnn::metrics::asymptotic_limits;
use gpnn::simulate::{run_local, AssumedModel, NoiseDist, SimConfig, SweepResult};

const TRUE_THETA: Theta = Theta {
    lengthscale: 1.0,
    noise_var: 0.1,
    signal_var: 0.9,
};
const M: usize = 100;
const LENGTHSCALE_FACTORS: [f64; 5] = [0.5, 0.75, 1.0, 1.5, 2.0];
const NOISE_GRID: [f64; 4] = [0.05, 0.1, 0.2, 0.4];
const MAX_SPREAD_FRACTION: f64 = 0.25;
const SE_MULTIPLIER: f64 = 3.0;

fn assumed() -> Vec<AssumedModel> {
    let rbf = |theta| AssumedModel {
        kernel: KernelSpec::Rbf,
        theta,
    };
    let mut v = vec![rbf(TRUE_THETA)];
    v.extend(LENGTHSCALE_FACTORS.iter().map(|&f| rbf(Theta::new(f, 0.2, 0.8).unwrap())));
    v.extend(NOISE_GRID.iter().map(|&s| rbf(Theta::new(1.0, s, 0.9).unwrap())));
    v
}

fn run(n: usize, seed: u64) -> SweepResult {
    run_local(&SimConfig {
        n,
        n_star: 2000,
        m: M,
        d: 20,
        gen_kernel: KernelSpec::Rbf,
        gen_theta: TRUE_THETA,
        noise: NoiseDist::Gaussian,
        assumed: assumed(),
        seed,
    })
    .expect("simulation")
}

fn spread(r: &SweepResult) -> f64 {
    let mses: Vec<f64> = r.entries[1..6].iter().map(|e| e.metrics.report.mse).collect();
    mses.iter().cloned().fold(f64::MIN, f64::max) - mses.iter().cloned().fold(f64::MAX, f64::min)
}

fn main() {
    let sizes = [1_000, 10_000, 100_000];
    let seeds = [41u64, 42, 43];
    let runs: Vec<Vec<SweepResult>> = seeds.iter().map(|&s| sizes.iter().map(|&n| run(n, s)).collect()).collect();
    let (mse_lim, _, _) = asymptotic_limits(0.1, 0.1, M);
    let mut lines = Vec::new();

    let mut wins = 0;
    let mut gaps_all = Vec::new();
    for per_seed in &runs {
        let gaps: Vec<f64> = per_seed.iter().map(|r| (r.entries[0].metrics.report.mse - mse_lim).abs()).collect();
        if gaps.windows(2).all(|w| w[1] <= w[0]) {
            wins += 1;
        }
        gaps_all.push(format!("{:.4?}", gaps));
    }
    lines.push((
        wins >= 2,
        format!("matched-model MSE gap to limit nonincreasing in n (2 of 3 seeds): {}", gaps_all.join(" ")),
    ));

    let mut wins = 0;
    let mut fracs = Vec::new();
    for per_seed in &runs {
        let frac = spread(&per_seed[2]) / spread(&per_seed[0]);
        if frac < MAX_SPREAD_FRACTION {
            wins += 1;
        }
        fracs.push(format!("{frac:.3}"));
    }
    lines.push((
        wins >= 2,
        format!(
            "lengthscale spread at n = 1e5 below {MAX_SPREAD_FRACTION} of spread at n = 1e3 (2 of 3 seeds): [{}]",
            fracs.join(", ")
        ),
    ));

    let big = &runs[0][2];
    let mut ok = true;
    let mut parts = Vec::new();
    for (k, &s) in NOISE_GRID.iter().enumerate() {
        let e = &big.entries[6 + k].metrics;
        let (_, _, nll_lim) = asymptotic_limits(0.1, s, M);
        ok &= (e.report.nll - nll_lim).abs() <= SE_MULTIPLIER * e.se_nll;
        parts.push(format!("{s}: {:.3} vs {nll_lim:.3} (+-{:.3})", e.report.nll, SE_MULTIPLIER * e.se_nll));
    }
    lines.push((ok, format!("NLL at n = 1e5 tracks its limit across assumed noise: {}", parts.join("; "))));

    let mut failed = 0;
    for (ok, detail) in &lines {
        if !ok {
            failed += 1;
        }
        println!("{}: {detail}", if *ok { "PASS" } else { "FAIL" });
    }
    println!("limits: {} passed, {failed} failed", lines.len() - failed);
    if failed > 0 && std::env::var("GPNN_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}
