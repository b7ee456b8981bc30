//! Monte-Carlo checks of the closed forms, shared by `cch validate` and the
//! acceptance suite.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::asymptotic::{
    asymptotic_risk, asymptotic_risk_over, asymptotic_risk_under, cch_mi_gap, small_lambda_condition, small_lambda_slope,
    solve_tau, AsymptoticContext,
};
use crate::error::Result;
use crate::gaussian_model::{derive_population_model, sample_dataset, validate_feasibility, CorrelationSpec, PopulationModel};
use crate::regression::{excess_risk_population, fit_student, fit_teacher_population, TeacherWeights};
use crate::rng::derive_seed;

/// Mean and standard error of a sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanSe {
    pub mean: f64,
    pub se: f64,
}

impl MeanSe {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = if values.len() > 1 {
            values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        MeanSe { mean, se: (var / n).sqrt() }
    }

    /// `|mean − target| ≤ max(rel·|target|, 3·se)`.
    pub fn agrees_with(&self, target: f64, rel: f64) -> bool {
        (self.mean - target).abs() <= (rel * target.abs()).max(3.0 * self.se)
    }
}

/// Monte-Carlo excess risk `(ŵ − w*)ᵀΣ22(ŵ − w*)` of the distilled student over `seeds` draws.
pub fn monte_carlo_excess_risk(
    model: &PopulationModel,
    spec: Option<&CorrelationSpec>,
    teacher: &TeacherWeights,
    lambda: f64,
    n: usize,
    seeds: &[u64],
) -> Result<MeanSe> {
    let risks = seeds
        .par_iter()
        .map(|&seed| {
            let data = match spec {
                Some(s) => sample_dataset(s, n, seed)?,
                None => model.sample(n, seed)?,
            };
            excess_risk_population(&fit_student(&data, teacher, lambda)?, model)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(MeanSe::of(&risks))
}

fn seeds(master: u64, tag: u64, count: usize) -> Vec<u64> {
    (0..count as u64).map(|i| derive_seed(master, &[tag, i])).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgreementPoint {
    pub sigma12: f64,
    pub lambda: f64,
    pub empirical: MeanSe,
    pub asymptotic: f64,
    pub passed: bool,
}

/// Empirical versus asymptotic excess risk of the population-teacher student
/// over a (σ12, λ) grid at fixed `n`, `p`.
pub fn asymptotic_agreement(
    base: &CorrelationSpec,
    sigma12s: &[f64],
    lambdas: &[f64],
    n: usize,
    n_seeds: usize,
    master: u64,
) -> Result<Vec<AgreementPoint>> {
    let mut out = Vec::new();
    for (gi, &s12) in sigma12s.iter().enumerate() {
        let spec = base.with_sigma12(s12);
        let model = derive_population_model(&spec)?;
        let (teacher, _) = fit_teacher_population(&model)?;
        let kappa = n as f64 / spec.p as f64;
        for &lambda in lambdas {
            let asymptotic = asymptotic_risk(&AsymptoticContext::new(&model, kappa, &teacher, lambda)?)?.total;
            let empirical = monte_carlo_excess_risk(&model, Some(&spec), &teacher, lambda, n, &seeds(master, gi as u64, n_seeds))?;
            out.push(AgreementPoint { sigma12: s12, lambda, empirical, asymptotic, passed: empirical.agrees_with(asymptotic, 0.10) });
        }
    }
    Ok(out)
}

/// OLS student (λ = 0) against `σ²/(κ − 1)`.
pub fn baseline_risk_law(spec: &CorrelationSpec, n: usize, n_seeds: usize, master: u64) -> Result<(MeanSe, f64)> {
    let model = derive_population_model(spec)?;
    let kappa = n as f64 / spec.p as f64;
    let target = model.noise_var / (kappa - 1.0);
    let zero = TeacherWeights::zeros(spec.p);
    let mc = monte_carlo_excess_risk(&model, Some(spec), &zero, 0.0, n, &seeds(master, 1000, n_seeds))?;
    Ok((mc, target))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridPoint {
    pub spec: CorrelationSpec,
    pub kappa: f64,
    pub teacher_scale: f64,
    pub mi_gap: f64,
    pub beneficial: bool,
    pub slope: f64,
    pub fd_slope: f64,
}

impl GridPoint {
    /// Positive gap without a beneficial small-λ condition, or slope signs that disagree.
    pub fn violation(&self) -> bool {
        (self.mi_gap > 0.0 && !self.beneficial) || self.slope.signum() != self.fd_slope.signum()
    }
}

/// Random feasible specs with admissible (scaled population) teachers. For each,
/// the MI gap, the small-λ condition and the analytic versus finite-difference slope
/// of the `κ > 1` risk at `λ = 10⁻⁵`.
pub fn small_lambda_grid(points: usize, seed: u64) -> Result<Vec<GridPoint>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(points);
    while out.len() < points {
        let spec = CorrelationSpec {
            sigma12: rng.random_range(-0.95..0.95),
            sigma13: rng.random_range(-0.95..0.95),
            sigma23: rng.random_range(-0.95..0.95),
            p: rng.random_range(2..=12),
        };
        let kappa = rng.random_range(2.0..50.0);
        let teacher_scale = rng.random_range(0.3..=1.0);
        if !validate_feasibility(&spec).feasible || spec.sigma23.abs() < 0.05 {
            continue;
        }
        let model = derive_population_model(&spec)?;
        let (pop, _) = fit_teacher_population(&model)?;
        let teacher = TeacherWeights::explicit(pop.w1 * teacher_scale)?;
        if !teacher.admissibility(&model).admissible || teacher.w1.norm() < 1e-6 {
            continue;
        }
        let h = 1e-5;
        let r0 = asymptotic_risk_under(&AsymptoticContext::new(&model, kappa, &teacher, 0.0)?)?.total;
        let rh = asymptotic_risk_under(&AsymptoticContext::new(&model, kappa, &teacher, h)?)?.total;
        out.push(GridPoint {
            spec,
            kappa,
            teacher_scale,
            mi_gap: cch_mi_gap(&model, &teacher)?.gap,
            beneficial: small_lambda_condition(&model, &teacher)?.beneficial,
            slope: small_lambda_slope(&model, &teacher, kappa)?,
            fd_slope: (rh - r0) / h,
        });
    }
    Ok(out)
}

/// `Σ22 = Σ11 = I`, `Σ12 = 0`, `Σ13 = 0`, `Σ23` along the all-ones direction with
/// `‖Σ23‖² = signal`.
pub fn isotropic_model(p: usize, signal: f64) -> Result<PopulationModel> {
    let id = DMatrix::identity(p, p);
    let s23 = DVector::from_element(p, (signal / p as f64).sqrt());
    PopulationModel::from_blocks(id.clone(), DMatrix::zeros(p, p), DVector::zeros(p), id, s23, 1.0)
}

/// Minimum-norm student at `n < p` on the isotropic model with `w1 = 0`, `λ = 0`.
pub fn overparameterized_check(n: usize, p: usize, n_seeds: usize, master: u64) -> Result<(MeanSe, f64)> {
    let model = isotropic_model(p, 0.5)?;
    let zero = TeacherWeights::zeros(p);
    let kappa = n as f64 / p as f64;
    let asymptotic = asymptotic_risk_over(&AsymptoticContext::new(&model, kappa, &zero, 0.0)?)?.total;
    let mc = monte_carlo_excess_risk(&model, None, &zero, 0.0, n, &seeds(master, 2000, n_seeds))?;
    Ok((mc, asymptotic))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub checks: Vec<CheckOutcome>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    fn push(&mut self, name: impl Into<String>, passed: bool, detail: impl Into<String>) {
        self.checks.push(CheckOutcome { name: name.into(), passed, detail: detail.into() });
    }

    pub fn table(&self) -> String {
        let width = self.checks.iter().map(|c| c.name.len()).max().unwrap_or(5).max(5);
        let mut s = format!("{:<width$}  {:<6}  detail\n", "check", "result");
        for c in &self.checks {
            let _ = writeln!(s, "{:<width$}  {:<6}  {}", c.name, if c.passed { "PASS" } else { "FAIL" }, c.detail);
        }
        s
    }
}

/// The agreement suite. `quick` shrinks sample sizes and seed counts.
pub fn run_validation(quick: bool) -> ValidationReport {
    let mut report = ValidationReport::default();
    let master = 20_240_601;
    let (p, n, reps) = if quick { (20, 2000, 10) } else { (100, 10_000, 20) };
    let base = CorrelationSpec { sigma12: 0.0, sigma13: 0.9, sigma23: 0.4, p };

    match baseline_risk_law(&base.with_sigma12(0.5), n, reps, master) {
        Ok((mc, target)) => report.push(
            "baseline risk law",
            mc.agrees_with(target, 0.10),
            format!("mc {:.4e} ± {:.1e}, sigma^2/(kappa-1) {:.4e}", mc.mean, mc.se, target),
        ),
        Err(e) => report.push("baseline risk law", false, e.to_string()),
    }

    match asymptotic_agreement(&base, &[0.2, 0.5, 0.7], &[0.2, 0.5], n, reps, master) {
        Ok(points) => {
            for pt in points {
                report.push(
                    format!("asymptotics s12={} lambda={}", pt.sigma12, pt.lambda),
                    pt.passed,
                    format!("mc {:.4e} ± {:.1e}, asymptotic {:.4e}", pt.empirical.mean, pt.empirical.se, pt.asymptotic),
                );
            }
        }
        Err(e) => report.push("asymptotics", false, e.to_string()),
    }

    match small_lambda_grid(20, master) {
        Ok(grid) => {
            let violations = grid.iter().filter(|g| g.violation()).count();
            let positive = grid.iter().filter(|g| g.mi_gap > 0.0).count();
            report.push(
                "small-lambda grid",
                violations == 0,
                format!("{} points, {positive} with positive gap, {violations} violations", grid.len()),
            );
        }
        Err(e) => report.push("small-lambda grid", false, e.to_string()),
    }

    let (n_over, p_over) = if quick { (100, 200) } else { (200, 400) };
    match overparameterized_check(n_over, p_over, 20, master) {
        Ok((mc, asym)) => report.push(
            "min-norm risk (kappa=0.5)",
            mc.agrees_with(asym, 0.10),
            format!("mc {:.4} ± {:.1e}, asymptotic {:.4}", mc.mean, mc.se, asym),
        ),
        Err(e) => report.push("min-norm risk (kappa=0.5)", false, e.to_string()),
    }

    match solve_tau(&DMatrix::identity(50, 50), 0.5) {
        Ok(tau) => report.push("isotropic tau", (tau - 1.0).abs() < 1e-10, format!("tau {tau:.12}")),
        Err(e) => report.push("isotropic tau", false, e.to_string()),
    }
    report
}
