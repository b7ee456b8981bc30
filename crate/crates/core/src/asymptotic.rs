//! Closed-form asymptotics of the distilled student as `n, p → ∞`, `n/p → κ`.
//!
//! Under-parameterized (`κ > 1`): the least-squares student concentrates around
//! `w̄ = Σ22⁻¹(Σ23 + λΣ12ᵀw1)/(1+λ)` with isotropic-in-`Σ22⁻¹` fluctuations of
//! size `σ̄²/(κ−1)`, giving the bias/variance split in [`asymptotic_risk_under`].
//!
//! Over-parameterized (`κ < 1`): the minimum-norm student is described by the
//! fixed point `κ = tr((Σ22+τI)⁻¹Σ22)/p` and `Ω = tr((Σ22+τI)⁻²Σ22²)/n`; see
//! [`asymptotic_risk_over`].

use nalgebra::DVector;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::gaussian_model::PopulationModel;
use crate::linalg::{bilinear, quad_form, spd_solve, SpectralForm};
use crate::mi::gaussian_mi;
use crate::regression::{TeacherSource, TeacherWeights};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RiskRegime {
    /// κ > 1
    Under,
    /// κ < 1
    Over,
}

/// Parameters of one asymptotic evaluation.
#[derive(Debug, Clone, Copy)]
pub struct AsymptoticContext<'a> {
    pub model: &'a PopulationModel,
    /// Aspect ratio `n/p`.
    pub kappa: f64,
    pub teacher: &'a TeacherWeights,
    pub lambda: f64,
}

impl<'a> AsymptoticContext<'a> {
    pub fn new(model: &'a PopulationModel, kappa: f64, teacher: &'a TeacherWeights, lambda: f64) -> Result<Self> {
        if !(kappa > 0.0 && kappa.is_finite()) || kappa == 1.0 {
            return Err(Error::invalid("kappa", format!("{kappa} must be positive, finite and different from 1")));
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::invalid("lambda", format!("{lambda} must be finite and non-negative")));
        }
        check_teacher(model, teacher)?;
        Ok(Self { model, kappa, teacher, lambda })
    }

    pub fn regime(&self) -> RiskRegime {
        if self.kappa > 1.0 {
            RiskRegime::Under
        } else {
            RiskRegime::Over
        }
    }
}

fn check_teacher(model: &PopulationModel, teacher: &TeacherWeights) -> Result<()> {
    if teacher.w1.len() != model.p() {
        return Err(Error::DimensionMismatch(format!(
            "teacher has {} weights, model has p={}",
            teacher.w1.len(),
            model.p()
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct RiskBreakdown {
    pub w_bar: DVector<f64>,
    pub sigma_bar_sq: f64,
    pub bias_term: f64,
    pub variance_term: f64,
    pub total: f64,
    pub regime: RiskRegime,
    pub tau: Option<f64>,
    pub omega: Option<f64>,
    /// `γ²(w_s)` of the over-parameterized expansion.
    pub gamma_sq: Option<f64>,
}

/// Quantities of the teacher that enter every formula.
struct TeacherCoupling {
    /// `Σ22⁻¹ Σ12ᵀ w1`
    transferred: DVector<f64>,
    /// `w1ᵀ(Σ13 − Σ12 w*)`
    label_excess: f64,
    /// `w1ᵀ(Σ11 − Σ12 Σ22⁻¹ Σ12ᵀ) w1`
    residual_var: f64,
}

impl TeacherCoupling {
    fn new(model: &PopulationModel, teacher: &TeacherWeights) -> Result<Self> {
        check_teacher(model, teacher)?;
        let w1 = &teacher.w1;
        let cross = model.sigma12.tr_mul(w1);
        let transferred = spd_solve(&model.sigma22, &cross).map_err(|e| Error::Singular(format!("Σ22: {e}")))?;
        let label_excess = w1.dot(&model.sigma13) - bilinear(w1, &model.sigma12, &model.w_star);
        let residual_var = quad_form(w1, &model.sigma11) - cross.dot(&transferred);
        Ok(Self { transferred, label_excess, residual_var })
    }
}

/// `w̄ = Σ22⁻¹(Σ23 + λΣ12ᵀw1)/(1+λ)`.
pub fn w_bar(model: &PopulationModel, teacher: &TeacherWeights, lambda: f64) -> Result<DVector<f64>> {
    check_teacher(model, teacher)?;
    let rhs = (&model.sigma23 + model.sigma12.tr_mul(&teacher.w1) * lambda) / (1.0 + lambda);
    spd_solve(&model.sigma22, &rhs).map_err(|e| Error::Singular(format!("Σ22: {e}")))
}

/// `σ̄² = E[ȳ²] − w̄ᵀΣ22w̄`, the residual variance of the effective label.
pub fn sigma_bar_sq(model: &PopulationModel, teacher: &TeacherWeights, lambda: f64) -> Result<f64> {
    let wb = w_bar(model, teacher, lambda)?;
    let w1 = &teacher.w1;
    let second_moment = (model.sigma33
        + 2.0 * lambda * w1.dot(&model.sigma13)
        + lambda * lambda * quad_form(w1, &model.sigma11))
        / ((1.0 + lambda) * (1.0 + lambda));
    let value = second_moment - quad_form(&wb, &model.sigma22);
    if value < -1e-10 {
        return Err(Error::Inconsistent(format!("effective-label residual variance {value:e} is negative")));
    }
    Ok(value.max(0.0))
}

/// Excess risk for `κ > 1`.
pub fn asymptotic_risk_under(ctx: &AsymptoticContext<'_>) -> Result<RiskBreakdown> {
    if !(ctx.kappa > 1.0) {
        return Err(Error::Regime(format!("under-parameterized risk needs kappa > 1, got {}", ctx.kappa)));
    }
    let model = ctx.model;
    let lambda = ctx.lambda;
    let coupling = TeacherCoupling::new(model, ctx.teacher)?;
    let shrink = lambda / (1.0 + lambda);
    let gap = &coupling.transferred - &model.w_star;
    let bias_term = shrink * shrink * quad_form(&gap, &model.sigma22);
    let numerator = model.noise_var + 2.0 * lambda * coupling.label_excess + lambda * lambda * coupling.residual_var;
    let variance_term = numerator / ((ctx.kappa - 1.0) * (1.0 + lambda) * (1.0 + lambda));
    Ok(RiskBreakdown {
        w_bar: w_bar(model, ctx.teacher, lambda)?,
        sigma_bar_sq: sigma_bar_sq(model, ctx.teacher, lambda)?,
        bias_term: bias_term.max(0.0),
        variance_term,
        total: bias_term.max(0.0) + variance_term,
        regime: RiskRegime::Under,
        tau: None,
        omega: None,
        gamma_sq: None,
    })
}

/// Dispatch on `κ`.
pub fn asymptotic_risk(ctx: &AsymptoticContext<'_>) -> Result<RiskBreakdown> {
    match ctx.regime() {
        RiskRegime::Under => asymptotic_risk_under(ctx),
        RiskRegime::Over => asymptotic_risk_over(ctx),
    }
}

/// Teacher weight minimizing the `κ > 1` asymptotic risk at fixed `λ > 0`.
///
/// Solves `λ[Σ12Σ22⁻¹Σ12ᵀ + M/(κ−1)] w1 = λΣ12w* − (Σ13 − Σ12w*)/(κ−1)` with
/// `M = Σ11 − Σ12Σ22⁻¹Σ12ᵀ`.
pub fn optimal_teacher_weight(model: &PopulationModel, kappa: f64, lambda: f64) -> Result<TeacherWeights> {
    if !(kappa > 1.0) {
        return Err(Error::Regime(format!("optimal teacher weight needs kappa > 1, got {kappa}")));
    }
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::invalid("lambda", format!("{lambda} must be positive")));
    }
    let inv22_s12t = crate::linalg::Cholesky::factor(&model.sigma22)
        .map_err(|e| Error::Singular(format!("Σ22: {e}")))?
        .solve_matrix(&model.sigma12.transpose());
    let transfer = &model.sigma12 * inv22_s12t;
    let residual = &model.sigma11 - &transfer;
    let system = (&transfer + residual / (kappa - 1.0)) * lambda;
    let label_excess = &model.sigma13 - &model.sigma12 * &model.w_star;
    let rhs = &model.sigma12 * &model.w_star * lambda - label_excess / (kappa - 1.0);
    let w1 = system
        .lu()
        .solve(&rhs)
        .filter(|w| w.iter().all(|v| v.is_finite()))
        .ok_or_else(|| Error::Singular("optimal-teacher system".into()))?;
    Ok(TeacherWeights { w1, source: TeacherSource::Explicit })
}

/// Closed form of [`optimal_teacher_weight`] when `x1 ⟂ y | x2`:
/// `(κ−1)(Σ11 + (κ−2)Σ12Σ22⁻¹Σ12ᵀ)⁻¹Σ12w*`, independent of `λ`.
pub fn optimal_teacher_weight_conditionally_independent(model: &PopulationModel, kappa: f64) -> Result<TeacherWeights> {
    if !(kappa > 1.0) {
        return Err(Error::Regime(format!("needs kappa > 1, got {kappa}")));
    }
    let inv22_s12t = crate::linalg::Cholesky::factor(&model.sigma22)
        .map_err(|e| Error::Singular(format!("Σ22: {e}")))?
        .solve_matrix(&model.sigma12.transpose());
    let system = &model.sigma11 + &model.sigma12 * inv22_s12t * (kappa - 2.0);
    let rhs = &model.sigma12 * &model.w_star * (kappa - 1.0);
    let w1 = system
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Singular("conditional-independence system".into()))?;
    Ok(TeacherWeights { w1, source: TeacherSource::Explicit })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SmallLambdaCondition {
    /// `w1ᵀ(Σ13 − Σ12Σ22⁻¹Σ23) − (Σ33 − w*ᵀΣ22w*)`
    pub lhs: f64,
    pub beneficial: bool,
}

/// Sign test deciding whether a little distillation lowers the `κ > 1` risk.
pub fn small_lambda_condition(model: &PopulationModel, teacher: &TeacherWeights) -> Result<SmallLambdaCondition> {
    check_teacher(model, teacher)?;
    let label_excess = teacher.w1.dot(&model.sigma13) - bilinear(&teacher.w1, &model.sigma12, &model.w_star);
    let lhs = label_excess - model.noise_var;
    Ok(SmallLambdaCondition { lhs, beneficial: lhs < 0.0 })
}

/// `dR̄/dλ` at `λ = 0`: `2/(κ−1) · lhs`.
pub fn small_lambda_slope(model: &PopulationModel, teacher: &TeacherWeights, kappa: f64) -> Result<f64> {
    if !(kappa > 1.0) {
        return Err(Error::Regime(format!("slope needs kappa > 1, got {kappa}")));
    }
    Ok(2.0 / (kappa - 1.0) * small_lambda_condition(model, teacher)?.lhs)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CchCorrelations {
    /// ρ(w1ᵀx1, w*ᵀx2)
    pub rho_t_s: f64,
    /// ρ(w1ᵀx1, y)
    pub rho_t_y: f64,
    /// ρ(w*ᵀx2, y)
    pub rho_s_y: f64,
}

/// Correlations between the teacher projection, the optimal student projection and the label.
pub fn cch_correlations(model: &PopulationModel, teacher: &TeacherWeights) -> Result<CchCorrelations> {
    check_teacher(model, teacher)?;
    let w1 = &teacher.w1;
    let teacher_var = quad_form(w1, &model.sigma11);
    let student_var = model.student_signal();
    if !(teacher_var > 0.0) {
        return Err(Error::ZeroVariance("teacher projection w1ᵀx1".into()));
    }
    if !(student_var > 0.0) {
        return Err(Error::ZeroVariance("student projection w*ᵀx2".into()));
    }
    let (st, ss, sy) = (teacher_var.sqrt(), student_var.sqrt(), model.sigma33.sqrt());
    Ok(CchCorrelations {
        rho_t_s: bilinear(w1, &model.sigma12, &model.w_star) / (st * ss),
        rho_t_y: w1.dot(&model.sigma13) / (st * sy),
        rho_s_y: model.w_star.dot(&model.sigma23) / (ss * sy),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MiGap {
    /// I(w1ᵀx1; w*ᵀx2), nats
    pub i_ts: f64,
    /// I(w*ᵀx2; y), nats
    pub i_sy: f64,
    pub gap: f64,
}

/// Closed-form teacher–student and student–label information and their difference.
pub fn cch_mi_gap(model: &PopulationModel, teacher: &TeacherWeights) -> Result<MiGap> {
    let rho = cch_correlations(model, teacher)?;
    let i_ts = gaussian_mi(rho.rho_t_s)?;
    let i_sy = gaussian_mi(rho.rho_s_y)?;
    Ok(MiGap { i_ts, i_sy, gap: i_ts - i_sy })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CchVerdict {
    /// I(teacher; student) > I(student; label)
    Holds,
    Fails,
    /// a projection has zero variance (e.g. σ23 = 0), so the informations are undefined
    Indeterminate,
}

pub fn cch_verdict(model: &PopulationModel, teacher: &TeacherWeights) -> Result<CchVerdict> {
    match cch_mi_gap(model, teacher) {
        Ok(g) if g.gap > 0.0 => Ok(CchVerdict::Holds),
        Ok(_) => Ok(CchVerdict::Fails),
        Err(Error::ZeroVariance(_)) => Ok(CchVerdict::Indeterminate),
        Err(e) => Err(e),
    }
}

fn trace_ratio(eigs: &DVector<f64>, tau: f64) -> f64 {
    eigs.iter().map(|&e| if e > 0.0 { e / (e + tau) } else { 0.0 }).sum::<f64>() / eigs.len() as f64
}

/// Root of `κ = tr((Σ22+τI)⁻¹Σ22)/p` for `0 < κ < 1`.
pub fn solve_tau(sigma22: &nalgebra::DMatrix<f64>, kappa: f64) -> Result<f64> {
    let eigs = SpectralForm::new(sigma22).eigenvalues;
    solve_tau_from_spectrum(&eigs, kappa)
}

pub fn solve_tau_from_spectrum(eigs: &DVector<f64>, kappa: f64) -> Result<f64> {
    if !(kappa > 0.0 && kappa < 1.0) {
        return Err(Error::invalid("kappa", format!("{kappa} is outside (0, 1)")));
    }
    let mut hi = eigs.max().max(1.0);
    let mut guard = 0;
    while trace_ratio(eigs, hi) >= kappa {
        hi *= 2.0;
        guard += 1;
        if guard > 2000 {
            return Err(Error::Inconsistent("tau bracket did not close".into()));
        }
    }
    solve_tau_bracketed(eigs, kappa, 0.0, hi)
}

/// Bisection for the τ fixed point on a caller-supplied bracket.
pub fn solve_tau_bracketed(eigs: &DVector<f64>, kappa: f64, lo: f64, hi: f64) -> Result<f64> {
    if !(kappa > 0.0 && kappa < 1.0) {
        return Err(Error::invalid("kappa", format!("{kappa} is outside (0, 1)")));
    }
    let f = |tau: f64| trace_ratio(eigs, tau) - kappa;
    let (mut lo, mut hi) = (lo.max(0.0), hi);
    if !(f(lo) > 0.0 && f(hi) < 0.0) {
        return Err(Error::invalid(
            "tau bracket",
            format!("[{lo}, {hi}] does not bracket the root (rank of Σ22 may be below κp)"),
        ));
    }
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let tau = if f(lo).abs() <= f(hi).abs() { lo } else { hi };
    let residual = f(tau).abs();
    if residual >= 1e-12 {
        return Err(Error::Inconsistent(format!("tau residual {residual:e} after bisection")));
    }
    Ok(tau)
}

/// Excess risk of the minimum-norm distilled student for `κ < 1`.
///
/// With `c = σ̄/σ`, `w_s = w̄/c` and `S = Σ22`:
///
/// ```text
/// R̄ = c²(w_s−w*)ᵀS³(S+τ)⁻²(w_s−w*)
///    + c²Ω(σ² + τ²‖S^½(S+τ)⁻¹w_s‖²)/(1−Ω)
///    − 2c w*ᵀS²(S+τ)⁻²(S+τ−cS)(w_s−w*)
///    + w*ᵀ(S+τ−cS)²(S+τ)⁻²S w*
/// ```
///
/// The second line is reported as `variance_term`, the rest as `bias_term`.
pub fn asymptotic_risk_over(ctx: &AsymptoticContext<'_>) -> Result<RiskBreakdown> {
    if !(ctx.kappa < 1.0) {
        return Err(Error::Regime(format!("over-parameterized risk needs kappa < 1, got {}", ctx.kappa)));
    }
    let model = ctx.model;
    let p = model.p();
    let spectral = SpectralForm::new(&model.sigma22);
    let eigs = &spectral.eigenvalues;
    let tau = solve_tau_from_spectrum(eigs, ctx.kappa)?;
    let n = ctx.kappa * p as f64;
    let omega = eigs.iter().map(|&e| (e / (e + tau)).powi(2)).sum::<f64>() / n;
    if !(omega < 1.0) {
        return Err(Error::Inconsistent(format!("Ω = {omega} is not below 1")));
    }

    let sigma_sq = model.noise_var;
    let sbar_sq = sigma_bar_sq(model, ctx.teacher, ctx.lambda)?;
    if !(sigma_sq > 0.0 && sbar_sq > 0.0) {
        return Err(Error::Inconsistent(format!(
            "over-parameterized risk needs positive residual variances (σ²={sigma_sq:e}, σ̄²={sbar_sq:e})"
        )));
    }
    let c = (sbar_sq / sigma_sq).sqrt();
    let wb = w_bar(model, ctx.teacher, ctx.lambda)?;
    let ws = spectral.rotate(&(&wb / c));
    let wstar = spectral.rotate(&model.w_star);

    let (mut t1, mut shrunk_norm, mut t3, mut t4) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..p {
        let (e, d) = (eigs[i], ws[i] - wstar[i]);
        let r = e + tau;
        let keep = r - c * e;
        t1 += d * d * e.powi(3) / (r * r);
        shrunk_norm += e * ws[i] * ws[i] / (r * r);
        t3 += wstar[i] * e * e / (r * r) * keep * d;
        t4 += wstar[i] * wstar[i] * keep * keep * e / (r * r);
    }
    let first = c * c * t1;
    let spread = sigma_sq + tau * tau * shrunk_norm;
    let variance_term = c * c * omega * spread / (1.0 - omega);
    let bias_term = first - 2.0 * c * t3 + t4;
    let gamma_sq = spread / (ctx.kappa * (1.0 - omega));
    Ok(RiskBreakdown {
        w_bar: wb,
        sigma_bar_sq: sbar_sq,
        bias_term,
        variance_term,
        total: bias_term + variance_term,
        regime: RiskRegime::Over,
        tau: Some(tau),
        omega: Some(omega),
        gamma_sq: Some(gamma_sq),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian_model::{derive_population_model, CorrelationSpec};
    use crate::regression::fit_teacher_population;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn model(s12: f64, p: usize) -> PopulationModel {
        derive_population_model(&CorrelationSpec::new(s12, 0.9, 0.4, p).unwrap()).unwrap()
    }

    fn pop_teacher(m: &PopulationModel) -> TeacherWeights {
        fit_teacher_population(m).unwrap().0
    }

    /// A random joint covariance with non-symmetric Σ12, for checks that must not
    /// lean on the equicorrelated structure.
    pub(crate) fn random_model(p: usize, seed: u64) -> PopulationModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = 2 * p + 1;
        let a = DMatrix::from_fn(d, d + 3, |_, _| rng.sample::<f64, _>(StandardNormal));
        let joint = &a * a.transpose() / (d + 3) as f64;
        PopulationModel::from_blocks(
            joint.view((0, 0), (p, p)).into_owned(),
            joint.view((0, p), (p, p)).into_owned(),
            joint.view((0, 2 * p), (p, 1)).column(0).into_owned(),
            joint.view((p, p), (p, p)).into_owned(),
            joint.view((p, 2 * p), (p, 1)).column(0).into_owned(),
            joint[(2 * p, 2 * p)],
        )
        .unwrap()
    }

    fn risk_under(m: &PopulationModel, t: &TeacherWeights, kappa: f64, lambda: f64) -> f64 {
        asymptotic_risk_under(&AsymptoticContext::new(m, kappa, t, lambda).unwrap()).unwrap().total
    }

    #[test]
    fn w_bar_limits() {
        let m = model(0.5, 5);
        let t = pop_teacher(&m);
        assert!((w_bar(&m, &t, 0.0).unwrap() - &m.w_star).amax() < 1e-15);
        let limit = spd_solve(&m.sigma22, &m.sigma12.tr_mul(&t.w1)).unwrap();
        let big = w_bar(&m, &t, 1e6).unwrap();
        assert!((&big - &limit).amax() <= 1e-4 * limit.amax());
    }

    #[test]
    fn sigma_bar_examples() {
        let m = model(0.5, 5);
        let t = pop_teacher(&m);
        assert!((sigma_bar_sq(&m, &t, 0.0).unwrap() - m.noise_var).abs() < 1e-14);
        let zero = TeacherWeights::zeros(5);
        assert!((sigma_bar_sq(&m, &zero, 1.0).unwrap() - m.noise_var / 4.0).abs() < 1e-14);
        assert!((w_bar(&m, &zero, 1.0).unwrap() - &m.w_star / 2.0).amax() < 1e-15);
    }

    #[test]
    fn under_risk_reduces_to_baseline_at_lambda_zero() {
        let m = model(0.3, 10);
        let t = pop_teacher(&m);
        let r = asymptotic_risk_under(&AsymptoticContext::new(&m, 4.0, &t, 0.0).unwrap()).unwrap();
        assert_eq!(r.bias_term, 0.0);
        assert!((r.total - m.noise_var / 3.0).abs() < 1e-15);
    }

    #[test]
    fn under_risk_variance_uses_sigma_bar() {
        // two routes to σ̄²: E[ȳ²] − w̄ᵀΣ22w̄ versus the expanded numerator
        let m = random_model(6, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let t = TeacherWeights::explicit(DVector::from_fn(6, |_, _| rng.sample::<f64, _>(StandardNormal) * 0.3)).unwrap();
        for &lambda in &[0.0, 0.4, 3.0] {
            let r = asymptotic_risk_under(&AsymptoticContext::new(&m, 5.0, &t, lambda).unwrap()).unwrap();
            assert!((r.variance_term * 4.0 - r.sigma_bar_sq).abs() < 1e-12, "lambda={lambda}");
            let d = &r.w_bar - &m.w_star;
            assert!((quad_form(&d, &m.sigma22) - r.bias_term).abs() < 1e-12);
            assert_eq!(r.total, r.bias_term + r.variance_term);
        }
    }

    #[test]
    fn under_risk_rejects_small_kappa() {
        let m = model(0.3, 4);
        let t = pop_teacher(&m);
        let ctx = AsymptoticContext::new(&m, 0.5, &t, 0.2).unwrap();
        assert!(matches!(asymptotic_risk_under(&ctx), Err(Error::Regime(_))));
        assert!(AsymptoticContext::new(&m, 1.0, &t, 0.2).is_err());
    }

    #[test]
    fn optimal_teacher_is_stationary_for_general_covariance() {
        for seed in 0..5 {
            let m = random_model(5, 100 + seed);
            for &(kappa, lambda) in &[(3.0, 0.5), (20.0, 0.1), (1.5, 2.0)] {
                let t = optimal_teacher_weight(&m, kappa, lambda).unwrap();
                let h = 1e-5;
                let mut grad: f64 = 0.0;
                for i in 0..5 {
                    let mut up = t.clone();
                    up.w1[i] += h;
                    let mut dn = t.clone();
                    dn.w1[i] -= h;
                    let g = (risk_under(&m, &up, kappa, lambda) - risk_under(&m, &dn, kappa, lambda)) / (2.0 * h);
                    grad = grad.max(g.abs());
                }
                assert!(grad < 1e-6, "seed {seed}, kappa {kappa}, lambda {lambda}: {grad:e}");
            }
        }
    }

    #[test]
    fn optimal_teacher_dominates_simple_alternatives() {
        let m = model(0.5, 20);
        let (kappa, lambda) = (10.0, 0.5);
        let best = optimal_teacher_weight(&m, kappa, lambda).unwrap();
        let r_best = risk_under(&m, &best, kappa, lambda);
        assert!(r_best <= risk_under(&m, &TeacherWeights::zeros(20), kappa, lambda));
        for scale in [0.5, 1.0, 2.0] {
            let alt = TeacherWeights::explicit(&m.w_star * scale).unwrap();
            assert!(r_best <= risk_under(&m, &alt, kappa, lambda));
        }
    }

    #[test]
    fn no_teacher_signal_gives_zero_optimal_weight() {
        let m = derive_population_model(&CorrelationSpec::new(0.0, 0.0, 0.4, 4).unwrap()).unwrap();
        let t = optimal_teacher_weight(&m, 5.0, 0.7).unwrap();
        assert!(t.w1.amax() < 1e-15);
    }

    #[test]
    fn conditional_independence_weight_is_lambda_free() {
        // b = 0 ⇔ σ13 = σ12σ23 makes x1 ⟂ y | x2
        let m = derive_population_model(&CorrelationSpec::new(0.6, 0.24, 0.4, 6).unwrap()).unwrap();
        let kappa = 8.0;
        let closed = optimal_teacher_weight_conditionally_independent(&m, kappa).unwrap();
        for &lambda in &[0.1, 0.5, 2.0] {
            let t = optimal_teacher_weight(&m, kappa, lambda).unwrap();
            assert!((t.w1 - &closed.w1).amax() < 1e-8);
        }
    }

    #[test]
    fn small_lambda_condition_examples() {
        let m = model(0.5, 10);
        let c = small_lambda_condition(&m, &TeacherWeights::zeros(10)).unwrap();
        assert!((c.lhs + m.noise_var).abs() < 1e-15 && c.beneficial);
        let edge = model(0.7, 100);
        assert!(small_lambda_condition(&edge, &pop_teacher(&edge)).unwrap().beneficial);
    }

    #[test]
    fn slope_sign_matches_finite_differences() {
        for k in 0..5 {
            let m = model(0.15 * k as f64, 30);
            let t = pop_teacher(&m);
            let kappa = 50.0;
            let h = 1e-5;
            // R̄ is smooth in λ around 0; extend with λ = -h via the same closed form
            let fd = (risk_under(&m, &t, kappa, h) - risk_at_negative(&m, &t, kappa, h)) / (2.0 * h);
            let slope = small_lambda_slope(&m, &t, kappa).unwrap();
            assert_eq!(fd.signum(), slope.signum(), "k={k}: fd {fd:e}, slope {slope:e}");
            assert!((fd - slope).abs() < 1e-6 * slope.abs().max(1e-3));
        }
    }

    fn risk_at_negative(m: &PopulationModel, t: &TeacherWeights, kappa: f64, h: f64) -> f64 {
        let lambda = -h;
        let coupling = TeacherCoupling::new(m, t).unwrap();
        let shrink = lambda / (1.0 + lambda);
        let gap = &coupling.transferred - &m.w_star;
        let num = m.noise_var + 2.0 * lambda * coupling.label_excess + lambda * lambda * coupling.residual_var;
        shrink * shrink * quad_form(&gap, &m.sigma22) + num / ((kappa - 1.0) * (1.0 + lambda).powi(2))
    }

    #[test]
    fn correlations_are_bounded_and_match_display() {
        for seed in 0..10 {
            let m = random_model(4, 200 + seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let t = TeacherWeights::explicit(DVector::from_fn(4, |_, _| rng.sample(StandardNormal))).unwrap();
            let c = cch_correlations(&m, &t).unwrap();
            for r in [c.rho_t_s, c.rho_t_y, c.rho_s_y] {
                assert!((-1.0..=1.0).contains(&r), "{c:?}");
            }
            assert!((c.rho_s_y - (m.student_signal() / m.sigma33).sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn mi_gap_is_scale_invariant_in_teacher() {
        let m = model(0.5, 10);
        let t = pop_teacher(&m);
        let g = cch_mi_gap(&m, &t).unwrap();
        let scaled = TeacherWeights::explicit(&t.w1 * 3.7).unwrap();
        let h = cch_mi_gap(&m, &scaled).unwrap();
        assert!((g.i_ts - h.i_ts).abs() < 1e-12);
        assert_eq!(g.gap, g.i_ts - g.i_sy);
    }

    #[test]
    fn mi_gap_zero_when_correlations_coincide() {
        // Σ11 = Σ22 = I, Σ12 = ρ_sy·I, w1 = w*: then ρ_ts = ρ_sy
        let p = 3;
        let s22 = DMatrix::<f64>::identity(p, p);
        let s23 = DVector::from_element(p, 0.3);
        let rho_sy = s23.norm();
        let s12 = DMatrix::identity(p, p) * rho_sy;
        let m = PopulationModel::from_blocks(s22.clone(), s12, s23.clone() * 0.5, s22, s23, 1.0).unwrap();
        let t = TeacherWeights::explicit(m.w_star.clone()).unwrap();
        let c = cch_correlations(&m, &t).unwrap();
        assert!((c.rho_t_s - c.rho_s_y).abs() < 1e-14);
        assert!(cch_mi_gap(&m, &t).unwrap().gap.abs() < 1e-14);
    }

    #[test]
    fn verdict_is_indeterminate_without_student_signal() {
        let m = derive_population_model(&CorrelationSpec::new(0.3, 0.5, 0.0, 3).unwrap()).unwrap();
        let t = pop_teacher(&m);
        assert_eq!(cch_verdict(&m, &t).unwrap(), CchVerdict::Indeterminate);
        assert!(matches!(cch_correlations(&m, &t), Err(Error::ZeroVariance(_))));
    }

    #[test]
    fn tau_isotropic_closed_form() {
        let id = DMatrix::<f64>::identity(50, 50);
        for &kappa in &[0.1, 0.5, 0.9] {
            let tau = solve_tau(&id, kappa).unwrap();
            assert!((tau - (1.0 - kappa) / kappa).abs() < 1e-10, "kappa {kappa}: {tau}");
        }
        assert!(solve_tau(&id, 0.9999).unwrap() < 1e-3);
        assert!(solve_tau(&id, 1.0).is_err());
        assert!(solve_tau(&id, 0.0).is_err());
    }

    #[test]
    fn tau_root_is_bracket_independent() {
        let m = model(0.5, 40);
        let eigs = SpectralForm::new(&m.sigma22).eigenvalues;
        let kappa = 0.4;
        let roots: Vec<f64> = [(0.0, 100.0), (0.1, 10.0), (0.5, 1e4)]
            .iter()
            .map(|&(lo, hi)| solve_tau_bracketed(&eigs, kappa, lo, hi).unwrap())
            .collect();
        for r in &roots {
            assert!((r - roots[0]).abs() < 1e-12 * roots[0].max(1.0));
            assert!((trace_ratio(&eigs, *r) - kappa).abs() < 1e-12);
        }
        assert!(solve_tau_bracketed(&eigs, kappa, 50.0, 100.0).is_err());
    }

    /// `‖S^½(θw̄ − w*)‖² + Ω/(1−Ω)(σ̄² + τ²‖S^½(S+τ)⁻¹w̄‖²)` with `θ = (S+τ)⁻¹S`,
    /// evaluated with dense inverses.
    fn compact_over_risk(m: &PopulationModel, t: &TeacherWeights, kappa: f64, lambda: f64) -> f64 {
        let p = m.p();
        let tau = solve_tau(&m.sigma22, kappa).unwrap();
        let shifted_inv = (&m.sigma22 + DMatrix::identity(p, p) * tau).try_inverse().unwrap();
        let theta = &shifted_inv * &m.sigma22;
        let omega = (&theta * &theta).trace() / (kappa * p as f64);
        let wb = w_bar(m, t, lambda).unwrap();
        let sb = sigma_bar_sq(m, t, lambda).unwrap();
        let bias = quad_form(&(&theta * &wb - &m.w_star), &m.sigma22);
        let shrunk = &shifted_inv * &wb;
        bias + omega / (1.0 - omega) * (sb + tau * tau * quad_form(&shrunk, &m.sigma22))
    }

    #[test]
    fn over_risk_agrees_with_compact_form() {
        for seed in 0..4 {
            let m = random_model(8, 300 + seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let t = TeacherWeights::explicit(DVector::from_fn(8, |_, _| rng.sample::<f64, _>(StandardNormal) * 0.2)).unwrap();
            for &(kappa, lambda) in &[(0.5, 0.0), (0.3, 0.7), (0.8, 2.0)] {
                let r = asymptotic_risk_over(&AsymptoticContext::new(&m, kappa, &t, lambda).unwrap()).unwrap();
                let compact = compact_over_risk(&m, &t, kappa, lambda);
                assert!((r.total - compact).abs() < 1e-10 * compact.max(1.0), "{} vs {compact}", r.total);
                let omega = r.omega.unwrap();
                assert!(omega > 0.0 && omega < 1.0);
                assert!(r.tau.unwrap() > 0.0);
            }
        }
    }

    #[test]
    fn over_risk_isotropic_ridgeless_law() {
        // Σ22 = I, λ = 0: R = (1−κ)‖w*‖² + σ²κ/(1−κ)
        let p = 10;
        let s23 = DVector::from_fn(p, |i, _| 0.1 * (i as f64 + 1.0) / p as f64);
        let id = DMatrix::identity(p, p);
        let m = PopulationModel::from_blocks(id.clone(), DMatrix::zeros(p, p), DVector::zeros(p), id, s23, 1.0).unwrap();
        let t = TeacherWeights::zeros(p);
        let kappa = 0.5;
        let r = asymptotic_risk_over(&AsymptoticContext::new(&m, kappa, &t, 0.0).unwrap()).unwrap();
        let expected = (1.0 - kappa) * m.w_star.norm_squared() + m.noise_var * kappa / (1.0 - kappa);
        assert!((r.total - expected).abs() < 1e-12);
        assert!((r.omega.unwrap() - kappa).abs() < 1e-12);
    }

    #[test]
    fn over_variance_term_is_gamma_times_trace() {
        let m = model(0.5, 30);
        let t = pop_teacher(&m);
        let kappa = 0.6;
        let r = asymptotic_risk_over(&AsymptoticContext::new(&m, kappa, &t, 0.3).unwrap()).unwrap();
        let tau = r.tau.unwrap();
        let c_sq = r.sigma_bar_sq / m.noise_var;
        // E[θ2ᵀΣ22θ2] = c² tr(S²(S+τ)⁻²)/p
        let eigs = SpectralForm::new(&m.sigma22).eigenvalues;
        let tr = eigs.iter().map(|&e| (e / (e + tau)).powi(2)).sum::<f64>() / 30.0;
        assert!((r.gamma_sq.unwrap() * c_sq * tr - r.variance_term).abs() < 1e-12 * r.variance_term);
    }

    #[test]
    fn some_teacher_beats_no_teacher_when_overparameterized() {
        let m = model(0.6, 100);
        let (kappa, lambda) = (0.5, 0.3);
        let zero = TeacherWeights::zeros(100);
        let base = asymptotic_risk_over(&AsymptoticContext::new(&m, kappa, &zero, lambda).unwrap()).unwrap().total;
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let scale = pop_teacher(&m).w1.norm();
        let found = (0..1000).any(|_| {
            let w1 = DVector::from_fn(100, |_, _| rng.sample::<f64, _>(StandardNormal)).normalize()
                * scale
                * rng.random_range(0.0..3.0);
            let mut w1 = w1;
            // bias the search toward the label-aligned direction
            w1 += pop_teacher(&m).w1 * rng.random_range(0.0..2.0);
            let t = TeacherWeights::explicit(w1).unwrap();
            asymptotic_risk_over(&AsymptoticContext::new(&m, kappa, &t, lambda).unwrap())
                .map(|r| r.total < base)
                .unwrap_or(false)
        });
        assert!(found);
    }

    #[test]
    fn over_risk_rejects_large_kappa() {
        let m = model(0.5, 10);
        let t = pop_teacher(&m);
        let ctx = AsymptoticContext::new(&m, 2.0, &t, 0.3).unwrap();
        assert!(matches!(asymptotic_risk_over(&ctx), Err(Error::Regime(_))));
    }
}
