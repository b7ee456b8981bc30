//! Closed-form teacher and distilled-student fits.
//!
//! The student minimizes `Σ (yᵢ − wᵀx2ᵢ)² + λ Σ (wᵀx2ᵢ − w1ᵀx1ᵢ)²`. Completing
//! the square turns this into least squares on the effective label
//! `ȳᵢ = (yᵢ + λ w1ᵀx1ᵢ)/(1 + λ)`, which is what both fitting paths solve.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian_model::{Dataset, PopulationModel};
use crate::linalg::{quad_form, spd_solve};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TeacherSource {
    PopulationOptimal,
    EmpiricalLs,
    Explicit,
}

/// Admissibility of a teacher: not too large, not misleading.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Admissibility {
    /// `w1ᵀ Σ11 w1`
    pub output_variance: f64,
    /// `w1ᵀ Σ13`
    pub label_alignment: f64,
    pub admissible: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TeacherWeights {
    pub w1: DVector<f64>,
    pub source: TeacherSource,
}

impl TeacherWeights {
    pub fn explicit(w1: DVector<f64>) -> Result<Self> {
        if w1.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("w1", "teacher weights must be finite"));
        }
        Ok(Self {
            w1,
            source: TeacherSource::Explicit,
        })
    }

    pub fn zeros(p: usize) -> Self {
        Self {
            w1: DVector::zeros(p),
            source: TeacherSource::Explicit,
        }
    }

    /// Teacher outputs `w1ᵀx1ᵢ` for every row.
    pub fn predict(&self, x1: &DMatrix<f64>) -> Result<DVector<f64>> {
        if x1.ncols() != self.w1.len() {
            return Err(Error::DimensionMismatch(format!(
                "teacher has {} weights, inputs have {} columns",
                self.w1.len(),
                x1.ncols()
            )));
        }
        Ok(x1 * &self.w1)
    }

    /// `w1ᵀΣ11w1 ≤ Σ33` and `w1ᵀΣ13 ≥ 0`.
    pub fn admissibility(&self, model: &PopulationModel) -> Admissibility {
        let output_variance = quad_form(&self.w1, &model.sigma11);
        let label_alignment = self.w1.dot(&model.sigma13);
        Admissibility {
            output_variance,
            label_alignment,
            admissible: output_variance <= model.sigma33 * (1.0 + 1e-12) && label_alignment >= 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitRegime {
    LeastSquares,
    MinNorm,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudentEstimate {
    pub w_hat: DVector<f64>,
    pub lambda: f64,
    pub regime: FitRegime,
}

impl StudentEstimate {
    pub fn predict(&self, x2: &DMatrix<f64>) -> DVector<f64> {
        x2 * &self.w_hat
    }
}

/// `w1 = Σ11⁻¹ Σ13`, returned together with its admissibility report.
pub fn fit_teacher_population(model: &PopulationModel) -> Result<(TeacherWeights, Admissibility)> {
    let w1 = spd_solve(&model.sigma11, &model.sigma13)
        .map_err(|e| Error::Singular(format!("Σ11: {e}")))?;
    let teacher = TeacherWeights {
        w1,
        source: TeacherSource::PopulationOptimal,
    };
    let adm = teacher.admissibility(model);
    Ok((teacher, adm))
}

/// Ordinary least squares of `y` on `x1`.
pub fn fit_teacher_empirical(dataset: &Dataset) -> Result<TeacherWeights> {
    let (n, p) = dataset.x1.shape();
    if n <= p {
        return Err(Error::Regime(format!(
            "empirical teacher needs n > p, got n={n}, p={p}"
        )));
    }
    let gram = dataset.x1.tr_mul(&dataset.x1);
    let rhs = dataset.x1.tr_mul(&dataset.y);
    let w1 = spd_solve(&gram, &rhs).map_err(|e| Error::Singular(format!("teacher design: {e}")))?;
    Ok(TeacherWeights {
        w1,
        source: TeacherSource::EmpiricalLs,
    })
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::invalid("lambda", format!("{lambda} must be finite and non-negative")));
    }
    Ok(())
}

/// `ȳ = (y + λ w1ᵀx1)/(1 + λ)`; `λ = 0` returns `y` unchanged.
pub fn effective_labels(dataset: &Dataset, teacher: &TeacherWeights, lambda: f64) -> Result<DVector<f64>> {
    check_lambda(lambda)?;
    if lambda == 0.0 {
        return Ok(dataset.y.clone());
    }
    let t = teacher.predict(&dataset.x1)?;
    Ok((&dataset.y + t * lambda) / (1.0 + lambda))
}

/// Least-squares distilled student, `(X2ᵀX2)⁻¹ X2ᵀ ȳ`; requires `n > p`.
pub fn fit_student_ls(dataset: &Dataset, teacher: &TeacherWeights, lambda: f64) -> Result<StudentEstimate> {
    let (n, p) = dataset.x2.shape();
    if n <= p {
        return Err(Error::Regime(format!(
            "least-squares student needs n > p, got n={n}, p={p}"
        )));
    }
    let labels = effective_labels(dataset, teacher, lambda)?;
    let gram = dataset.x2.tr_mul(&dataset.x2);
    let rhs = dataset.x2.tr_mul(&labels);
    let w_hat = spd_solve(&gram, &rhs).map_err(|e| Error::Singular(format!("student design: {e}")))?;
    Ok(StudentEstimate {
        w_hat,
        lambda,
        regime: FitRegime::LeastSquares,
    })
}

/// Minimum-norm interpolator of the effective labels, `X2ᵀ(X2X2ᵀ)⁻¹ȳ`; requires `n < p`.
pub fn fit_student_minnorm(dataset: &Dataset, teacher: &TeacherWeights, lambda: f64) -> Result<StudentEstimate> {
    let (n, p) = dataset.x2.shape();
    if n >= p {
        return Err(Error::Regime(format!(
            "minimum-norm student needs n < p, got n={n}, p={p}"
        )));
    }
    let labels = effective_labels(dataset, teacher, lambda)?;
    let kernel = &dataset.x2 * dataset.x2.transpose();
    let alpha = spd_solve(&kernel, &labels).map_err(|e| Error::Singular(format!("student kernel: {e}")))?;
    Ok(StudentEstimate {
        w_hat: dataset.x2.tr_mul(&alpha),
        lambda,
        regime: FitRegime::MinNorm,
    })
}

/// Dispatch on the aspect ratio; `n = p` is rejected.
pub fn fit_student(dataset: &Dataset, teacher: &TeacherWeights, lambda: f64) -> Result<StudentEstimate> {
    let (n, p) = dataset.x2.shape();
    match n.cmp(&p) {
        std::cmp::Ordering::Greater => fit_student_ls(dataset, teacher, lambda),
        std::cmp::Ordering::Less => fit_student_minnorm(dataset, teacher, lambda),
        std::cmp::Ordering::Equal => Err(Error::Regime(format!("n = p = {n} is not covered"))),
    }
}

/// Value of the two-term distillation objective at `w`.
pub fn distillation_objective(dataset: &Dataset, teacher: &TeacherWeights, lambda: f64, w: &DVector<f64>) -> Result<f64> {
    let student = &dataset.x2 * w;
    let t = teacher.predict(&dataset.x1)?;
    let fit = (&dataset.y - &student).norm_squared();
    let align = (&student - t).norm_squared();
    Ok(fit + lambda * align)
}

/// `(ŵ − w*)ᵀ Σ22 (ŵ − w*)`.
pub fn excess_risk_population(estimate: &StudentEstimate, model: &PopulationModel) -> Result<f64> {
    if estimate.w_hat.len() != model.p() {
        return Err(Error::DimensionMismatch(format!(
            "estimate has {} weights, model has p={}",
            estimate.w_hat.len(),
            model.p()
        )));
    }
    let d = &estimate.w_hat - &model.w_star;
    Ok(quad_form(&d, &model.sigma22).max(0.0))
}

/// Mean squared prediction error of the student on `data`.
pub fn test_mse(estimate: &StudentEstimate, data: &Dataset) -> Result<f64> {
    if estimate.w_hat.len() != data.p() {
        return Err(Error::DimensionMismatch(format!(
            "estimate has {} weights, test inputs have {} columns",
            estimate.w_hat.len(),
            data.p()
        )));
    }
    let resid = &data.y - estimate.predict(&data.x2);
    Ok(resid.norm_squared() / data.n() as f64)
}

/// Test-set MSE minus the irreducible noise `σ²`.
pub fn excess_risk_empirical(estimate: &StudentEstimate, test: &Dataset, model: &PopulationModel) -> Result<f64> {
    if test.p() != model.p() {
        return Err(Error::DimensionMismatch(format!(
            "test data has p={}, model has p={}",
            test.p(),
            model.p()
        )));
    }
    Ok(test_mse(estimate, test)? - model.noise_var)
}
