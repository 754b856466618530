//! Subcommand implementations. Each returns named artifacts; the caller writes them.

use bfgrad::cube::{correlated_kernel_prob, substream, Stream};
use bfgrad::estimators::{benchmark_variance, expected_value_by_enumeration};
use bfgrad::fourier::{self, transform};
use bfgrad::operators::{self, exact_gradient, hypercontractivity_check, noise_exact, numeric_gradient};
use bfgrad::sbn::{checkpoint, Dataset, Trainer};
use bfgrad::{BooleanFunction, BooleanPoint, EstimatorConfig, EstimatorKind, GradientProblem, ProductDistribution, VarianceReport};
use rand::Rng;

use crate::config::Resolved;
use crate::error::CliError;

/// Files produced by a command, and a failure to report after writing them.
#[derive(Debug, Default)]
pub struct Output {
    pub files: Vec<(String, String)>,
    pub failure: Option<CliError>,
}

impl Output {
    fn single(name: &str, contents: String) -> Self {
        Self { files: vec![(name.into(), contents)], failure: None }
    }
}

fn functions(r: &Resolved) -> Result<Vec<BooleanFunction>, CliError> {
    r.functions.iter().map(|s| s.build(r.dim()).map_err(CliError::from)).collect()
}

pub fn transform_cmd(r: &Resolved) -> Result<Output, CliError> {
    let mut s = r.header();
    for (i, (spec, f)) in r.functions.iter().zip(functions(r)?).enumerate() {
        s.push_str(&format!("# function {i}: {spec}\n"));
        s.push_str(&transform(&f, &r.dist)?.to_text());
    }
    Ok(Output::single("transform.txt", s))
}

pub fn gradcheck_cmd(r: &Resolved) -> Result<Output, CliError> {
    let mut s = r.header();
    s.push_str("function,coord,exact,numeric,abs_diff\n");
    let mut worst: f64 = 0.0;
    for (i, f) in functions(r)?.iter().enumerate() {
        let exact = exact_gradient(f, &r.dist)?;
        for (c, e) in exact.iter().enumerate() {
            let num = numeric_gradient(f, &r.dist, c, r.config.fd_step)?;
            let diff = (e - num).abs();
            worst = worst.max(diff);
            s.push_str(&format!("{i},{c},{e},{num},{diff}\n"));
        }
    }
    let failure = (worst.is_nan() || worst >= r.config.gradcheck_tol).then(|| {
        CliError::Numeric(format!("max |exact - numeric| = {worst} exceeds {}", r.config.gradcheck_tol))
    });
    Ok(Output { files: vec![("gradcheck.csv".into(), s)], failure })
}

pub fn bench_cmd(r: &Resolved) -> Result<Output, CliError> {
    let mut s = r.header();
    s.push_str(&format!("function,{}\n", VarianceReport::CSV_HEADER));
    let g_fixed = match &r.g {
        Some(spec) => Some(spec.build(r.dim())?),
        None => None,
    };
    for (i, f) in functions(r)?.into_iter().enumerate() {
        let g = g_fixed.clone().unwrap_or_else(|| f.clone());
        let problem = GradientProblem::new(f, g, r.dist.clone())?;
        for est in &r.config.estimators {
            let report = benchmark_variance(&problem, est, r.config.trials, r.config.seed)?;
            for line in report.csv_rows().lines() {
                s.push_str(&format!("{i},{line}\n"));
            }
        }
    }
    Ok(Output::single("bench.csv", s))
}

pub fn hyper_cmd(r: &Resolved) -> Result<Output, CliError> {
    let mut s = r.header();
    s.push_str("function,q,lambda,rho_max,lhs,rhs,holds,lhs_interior,holds_interior\n");
    let mut violated = Vec::new();
    for (i, f) in functions(r)?.iter().enumerate() {
        let h = hypercontractivity_check(f, &r.dist, r.config.q)?;
        s.push_str(&format!(
            "{i},{},{},{},{},{},{},{},{}\n",
            h.bound.q, h.bound.lambda, h.bound.rho_max, h.lhs, h.rhs, h.holds, h.lhs_interior, h.holds_interior
        ));
        if !(h.holds && h.holds_interior) {
            violated.push(i);
        }
    }
    let failure = (!violated.is_empty()).then(|| CliError::Numeric(format!("bound violated for functions {violated:?}")));
    Ok(Output { files: vec![("hyper.csv".into(), s)], failure })
}

pub fn train_cmd(r: &Resolved) -> Result<Output, CliError> {
    let t = &r.config.train;
    let data = match &t.data {
        Some(path) => Dataset::load(path)?,
        None => Dataset::synthetic(t.synthetic_count, t.flip, t.data_seed),
    };
    let mut trainer = Trainer::new(t.config.clone(), data)?;
    let history = trainer.run()?;
    let mut s = r.header();
    s.push_str(&trainer.metrics_csv(&history));
    let mut ckpt = r.header();
    ckpt.push_str(&checkpoint::save(&trainer.model, &trainer.qnet));
    Ok(Output { files: vec![("train.csv".into(), s), ("checkpoint.txt".into(), ckpt)], failure: None })
}

/// A named property check: instances tried, worst error, tolerance.
struct Check {
    name: &'static str,
    instances: usize,
    max_error: f64,
    tolerance: f64,
}

fn random_instance(rng: &mut Stream, max_n: usize) -> Result<(BooleanFunction, ProductDistribution), CliError> {
    let n = rng.random_range(1..=max_n);
    let table = (0..1usize << n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let probs = (0..n).map(|_| rng.random_range(0.05..0.95)).collect();
    Ok((BooleanFunction::from_table(n, table)?, ProductDistribution::new(probs)?))
}

fn check_gradient_identity(rng: &mut Stream) -> Result<Check, CliError> {
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let (f, d) = random_instance(rng, 6)?;
        let exact = exact_gradient(&f, &d)?;
        for (i, e) in exact.iter().enumerate() {
            worst = worst.max((e - numeric_gradient(&f, &d, i, operators::DEFAULT_FD_STEP)?).abs());
        }
    }
    Ok(Check { name: "gradient_identity", instances: 100, max_error: worst, tolerance: 1e-6 })
}

fn check_unbiased(rng: &mut Stream) -> Result<Check, CliError> {
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let (f, d) = random_instance(rng, 6)?;
        let g = BooleanFunction::from_table(f.dim(), (0..1usize << f.dim()).map(|_| rng.random_range(-1.0..1.0)).collect())?;
        let exact = exact_gradient(&f, &d)?;
        let problem = GradientProblem::new(f, g, d)?;
        let rho = rng.random_range(0.1..0.9);
        for kind in EstimatorKind::ALL.into_iter().filter(|k| k.is_unbiased()) {
            let cfg = EstimatorConfig { rho, baseline: 0.3, ..EstimatorConfig::new(kind) };
            let expected = expected_value_by_enumeration(&problem, &cfg)?;
            for (a, b) in expected.iter().zip(&exact) {
                worst = worst.max((a - b).abs());
            }
        }
    }
    Ok(Check { name: "unbiased_by_enumeration", instances: 50, max_error: worst, tolerance: 1e-10 })
}

fn check_noise(rng: &mut Stream) -> Result<Vec<Check>, CliError> {
    let (mut mult, mut mean, mut semi, mut mono): (f64, f64, f64, f64) = (0.0, 0.0, 0.0, 0.0);
    for _ in 0..100 {
        let (f, d) = random_instance(rng, 5)?;
        let e = transform(&f, &d)?;
        let table = f.require_table()?;
        for k in 0..=10 {
            let rho = k as f64 / 10.0;
            let noised = noise_exact(&e, rho)?;
            mono = mono.max(noised.variance() - e.variance());
            mean = mean.max((noised.mean() - e.mean()).abs());
        }
        let rho = rng.random_range(0.0..1.0);
        let noised = noise_exact(&e, rho)?;
        for x in BooleanPoint::all(f.dim()) {
            let kernel: f64 = BooleanPoint::all(f.dim())
                .map(|y| correlated_kernel_prob(&x, &y, rho, &d) * table[y.index() as usize])
                .sum();
            mult = mult.max((kernel - noised.evaluate(&x, &d)?).abs());
        }
        let (a, b) = (rng.random_range(0.0..1.0), rng.random_range(0.0..1.0));
        let twice = noise_exact(&noise_exact(&e, a)?, b)?;
        let once = noise_exact(&e, a * b)?;
        for (s, c) in once.iter() {
            semi = semi.max((twice.coefficient(s) - c).abs());
        }
    }
    Ok(vec![
        Check { name: "noise_multiplier", instances: 100, max_error: mult, tolerance: 1e-10 },
        Check { name: "noise_mean", instances: 100, max_error: mean, tolerance: 1e-12 },
        Check { name: "noise_semigroup", instances: 100, max_error: semi, tolerance: 1e-12 },
        Check { name: "noise_variance_monotone", instances: 100, max_error: mono.max(0.0), tolerance: 1e-12 },
    ])
}

fn check_hyper(rng: &mut Stream) -> Result<Check, CliError> {
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..200 {
        let (f, d) = random_instance(rng, 6)?;
        let h = hypercontractivity_check(&f, &d, 4.0)?;
        worst = worst.max(h.lhs - h.rhs);
    }
    Ok(Check { name: "hypercontractivity_q4", instances: 200, max_error: worst.max(0.0), tolerance: 1e-10 })
}

fn check_cv_spectra(rng: &mut Stream) -> Result<Check, CliError> {
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let (g, d) = random_instance(rng, 6)?;
        let n = g.dim();
        let table = g.require_table()?;
        for rho in [0.25, 0.5, 0.75] {
            let t_rho = operators::noise_table(&g, &d, rho)?;
            let t_alt = operators::noise_table(&g, &d, 1.0 - rho)?;
            let v1: Vec<f64> = (0..table.len()).map(|k| table[k] - t_rho[k] / rho).collect();
            let v2: Vec<f64> = (0..table.len()).map(|k| table[k] - t_rho[k] - t_alt[k]).collect();
            for v in [v1, v2] {
                let e = fourier::transform(&BooleanFunction::from_table(n, v)?, &d)?;
                for i in 0..n {
                    worst = worst.max(e.coefficient(bfgrad::SubsetIndex::singleton(i)).abs());
                }
            }
        }
    }
    Ok(Check { name: "control_variate_degree1", instances: 100, max_error: worst, tolerance: 1e-12 })
}

/// Oracle and property checks on seeded random instances, one CSV row each.
pub fn selftest_cmd(r: &Resolved) -> Result<Output, CliError> {
    let seed = r.config.seed;
    let mut checks = vec![
        check_gradient_identity(&mut substream(seed, 1))?,
        check_unbiased(&mut substream(seed, 2))?,
    ];
    checks.extend(check_noise(&mut substream(seed, 3))?);
    checks.push(check_hyper(&mut substream(seed, 4))?);
    checks.push(check_cv_spectra(&mut substream(seed, 5))?);

    let mut s = r.header();
    s.push_str("check,instances,max_error,tolerance,status\n");
    let mut failed = Vec::new();
    for c in &checks {
        let ok = c.max_error <= c.tolerance;
        if !ok {
            failed.push(c.name);
        }
        s.push_str(&format!("{},{},{:e},{:e},{}\n", c.name, c.instances, c.max_error, c.tolerance, if ok { "pass" } else { "fail" }));
    }
    let failure = (!failed.is_empty()).then(|| CliError::Numeric(format!("failed checks: {}", failed.join(", "))));
    Ok(Output { files: vec![("selftest.csv".into(), s)], failure })
}
