//! Temperature-softened distillation loss for classifiers, with its gradient
//! in the student logits. Natural logarithms throughout; probabilities are
//! floored at `1e-30` inside logs.

use crate::error::{Error, Result};

const LOG_FLOOR: f64 = -69.077_552_789_821_37; // ln(1e-30)

/// Pre-softmax scores over `K ≥ 2` classes.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitVector {
    values: Vec<f64>,
}

impl LogitVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::invalid("logits", format!("need at least 2 classes, got {}", values.len())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("logits", "non-finite entry"));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

impl TryFrom<&[f64]> for LogitVector {
    type Error = Error;

    fn try_from(v: &[f64]) -> Result<Self> {
        LogitVector::new(v.to_vec())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistillationConfig {
    pub temperature: f64,
    /// weight λ on the teacher term
    pub weight: f64,
}

impl DistillationConfig {
    pub fn new(temperature: f64, weight: f64) -> Result<Self> {
        let cfg = Self { temperature, weight };
        cfg.check()?;
        Ok(cfg)
    }

    fn check(&self) -> Result<()> {
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::invalid("temperature", format!("{} must be positive", self.temperature)));
        }
        if !(0.0..=1.0).contains(&self.weight) {
            return Err(Error::invalid("weight", format!("{} is outside [0, 1]", self.weight)));
        }
        Ok(())
    }
}

fn log_softmax(z: &[f64], t: f64) -> Vec<f64> {
    let m = z.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let shifted: Vec<f64> = z.iter().map(|v| (v - m) / t).collect();
    let lse = shifted.iter().map(|v| v.exp()).sum::<f64>().ln();
    shifted.iter().map(|v| (v - lse).max(LOG_FLOOR)).collect()
}

/// `softmax(z / T)`.
pub fn softened_softmax(logits: &LogitVector, temperature: f64) -> Result<Vec<f64>> {
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(Error::invalid("temperature", format!("{temperature} must be positive")));
    }
    let m = logits.values.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let e: Vec<f64> = logits.values.iter().map(|v| ((v - m) / temperature).exp()).collect();
    let s: f64 = e.iter().sum();
    Ok(e.into_iter().map(|v| v / s).collect())
}

/// `−ln p_label` for `p = softmax(z)`.
pub fn cross_entropy(logits: &LogitVector, label: usize) -> Result<f64> {
    check_label(logits.len(), label)?;
    Ok(-log_softmax(&logits.values, 1.0)[label])
}

/// `KL(softmax(t/T) ‖ softmax(s/T))`, clamped at zero.
pub fn kl_divergence(teacher: &LogitVector, student: &LogitVector, temperature: f64) -> Result<f64> {
    check_pair(student, teacher)?;
    let q = softened_softmax(teacher, temperature)?;
    let (lq, lp) = (log_softmax(&teacher.values, temperature), log_softmax(&student.values, temperature));
    Ok(q.iter().zip(lq.iter().zip(&lp)).map(|(qi, (a, b))| qi * (a - b)).sum::<f64>().max(0.0))
}

fn check_label(k: usize, label: usize) -> Result<()> {
    if label >= k {
        return Err(Error::invalid("label", format!("{label} is not a class index below {k}")));
    }
    Ok(())
}

fn check_pair(student: &LogitVector, teacher: &LogitVector) -> Result<()> {
    if student.len() != teacher.len() {
        return Err(Error::DimensionMismatch(format!(
            "student has {} logits, teacher has {}",
            student.len(),
            teacher.len()
        )));
    }
    Ok(())
}

/// `(1−λ)·CE(label, softmax(s)) + λT²·KL(softmax(t/T) ‖ softmax(s/T))`.
pub fn kd_loss(student: &LogitVector, teacher: &LogitVector, label: usize, cfg: &DistillationConfig) -> Result<f64> {
    cfg.check()?;
    check_pair(student, teacher)?;
    let ce = cross_entropy(student, label)?;
    let kl = kl_divergence(teacher, student, cfg.temperature)?;
    let t = cfg.temperature;
    Ok((1.0 - cfg.weight) * ce + cfg.weight * t * t * kl)
}

/// Gradient of [`kd_loss`] in the student logits:
/// `(1−λ)(p − e_label) + λT(p_T − q_T)`.
pub fn kd_loss_gradient(
    student: &LogitVector,
    teacher: &LogitVector,
    label: usize,
    cfg: &DistillationConfig,
) -> Result<Vec<f64>> {
    cfg.check()?;
    check_pair(student, teacher)?;
    check_label(student.len(), label)?;
    let p = softened_softmax(student, 1.0)?;
    let pt = softened_softmax(student, cfg.temperature)?;
    let qt = softened_softmax(teacher, cfg.temperature)?;
    Ok((0..p.len())
        .map(|i| {
            let hard = p[i] - if i == label { 1.0 } else { 0.0 };
            (1.0 - cfg.weight) * hard + cfg.weight * cfg.temperature * (pt[i] - qt[i])
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn lv(v: &[f64]) -> LogitVector {
        LogitVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn softmax_examples() {
        let u = softened_softmax(&lv(&[0.0; 4]), 2.5).unwrap();
        assert!(u.iter().all(|&v| (v - 0.25).abs() < 1e-15));
        let z = lv(&[1.0, 2.0, 0.0]);
        let p = softened_softmax(&z, 1.0).unwrap();
        let e = [1f64.exp(), 2f64.exp(), 1.0];
        let s: f64 = e.iter().sum();
        for i in 0..3 {
            assert!((p[i] - e[i] / s).abs() < 1e-15);
        }
        let hot = softened_softmax(&lv(&[3.0, -1.0, 2.0]), 1e6).unwrap();
        assert!(hot.iter().all(|&v| (v - 1.0 / 3.0).abs() < 1e-4));
        let big = softened_softmax(&lv(&[1000.0, 0.0]), 1.0).unwrap();
        assert!(big.iter().all(|v| v.is_finite()) && (big.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(LogitVector::new(vec![1.0]).is_err());
        assert!(LogitVector::new(vec![1.0, f64::NAN]).is_err());
        assert!(softened_softmax(&lv(&[1.0, 2.0]), 0.0).is_err());
        let cfg = DistillationConfig::new(2.0, 0.5).unwrap();
        assert!(matches!(kd_loss(&lv(&[1.0, 2.0]), &lv(&[1.0, 2.0, 3.0]), 0, &cfg), Err(Error::DimensionMismatch(_))));
        assert!(kd_loss(&lv(&[1.0, 2.0]), &lv(&[1.0, 2.0]), 2, &cfg).is_err());
        assert!(DistillationConfig::new(1.0, 1.5).is_err());
        assert!(DistillationConfig::new(-1.0, 0.5).is_err());
    }

    #[test]
    fn lambda_zero_is_cross_entropy() {
        let s = lv(&[0.3, -1.0, 2.0]);
        let cfg = DistillationConfig::new(4.0, 0.0).unwrap();
        let got = kd_loss(&s, &lv(&[5.0, 0.0, 0.0]), 2, &cfg).unwrap();
        assert_eq!(got, cross_entropy(&s, 2).unwrap());
    }

    #[test]
    fn identical_logits_with_full_weight_give_zero() {
        let s = lv(&[0.3, -1.0, 2.0]);
        let cfg = DistillationConfig::new(3.0, 1.0).unwrap();
        assert!(kd_loss(&s, &s, 0, &cfg).unwrap().abs() < 1e-15);
        assert!(kd_loss_gradient(&s, &s, 0, &cfg).unwrap().iter().all(|g| g.abs() < 1e-10));
    }

    #[test]
    fn image_setting_reference_value() {
        // 30-digit evaluation of the defining formula
        let (ce, kl, total) = (0.407_605_964_444_380_3, 0.042_372_981_315_423_98, 0.394_481_398_141_598_1);
        let (s, t) = (lv(&[1.0, 2.0, 0.0]), lv(&[2.0, 1.0, 0.0]));
        let cfg = DistillationConfig::new(3.0, 0.5).unwrap();
        assert!((cross_entropy(&s, 1).unwrap() - ce).abs() < 1e-14);
        let unscaled = kl_divergence(&t, &s, 3.0).unwrap();
        assert!((unscaled - kl).abs() < 1e-14);
        let got = kd_loss(&s, &t, 1, &cfg).unwrap();
        assert!((got - total).abs() < 1e-14);
        assert!((got - 0.5 * ce - 0.5 * 9.0 * unscaled).abs() < 1e-15);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let k = rng.random_range(2..8);
            let s: Vec<f64> = (0..k).map(|_| rng.random_range(-4.0..4.0)).collect();
            let t: Vec<f64> = (0..k).map(|_| rng.random_range(-4.0..4.0)).collect();
            let label = rng.random_range(0..k);
            let cfg = DistillationConfig::new(rng.random_range(0.5..5.0), rng.random_range(0.0..1.0)).unwrap();
            let g = kd_loss_gradient(&lv(&s), &lv(&t), label, &cfg).unwrap();
            let h = 1e-6;
            for i in 0..k {
                let (mut up, mut dn) = (s.clone(), s.clone());
                up[i] += h;
                dn[i] -= h;
                let fd = (kd_loss(&lv(&up), &lv(&t), label, &cfg).unwrap() - kd_loss(&lv(&dn), &lv(&t), label, &cfg).unwrap())
                    / (2.0 * h);
                let scale = g.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-3);
                assert!((fd - g[i]).abs() / scale < 1e-5, "component {i}: fd {fd}, analytic {}", g[i]);
            }
        }
    }

    #[test]
    fn kl_is_nonnegative() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..1000 {
            let k = rng.random_range(2..10);
            let a: Vec<f64> = (0..k).map(|_| rng.random_range(-10.0..10.0)).collect();
            let b: Vec<f64> = (0..k).map(|_| rng.random_range(-10.0..10.0)).collect();
            assert!(kl_divergence(&lv(&a), &lv(&b), rng.random_range(0.1..10.0)).unwrap() >= 0.0);
        }
    }

    #[test]
    fn confident_correct_student_approaches_zero_loss() {
        let cfg = DistillationConfig::new(1.0, 0.0).unwrap();
        let losses: Vec<f64> = [5.0, 20.0, 60.0]
            .iter()
            .map(|&m| kd_loss(&lv(&[m, 0.0, 0.0]), &lv(&[0.0; 3]), 0, &cfg).unwrap())
            .collect();
        assert!(losses[0] > losses[1] && losses[1] > losses[2] && losses[2] < 1e-20);
    }

    #[test]
    fn extreme_temperature_stays_finite() {
        let cfg = DistillationConfig::new(1e-3, 0.7).unwrap();
        let v = kd_loss(&lv(&[50.0, -50.0, 0.0]), &lv(&[-50.0, 50.0, 0.0]), 0, &cfg).unwrap();
        assert!(v.is_finite() && v > 0.0);
    }

    proptest! {
        #[test]
        fn loss_is_nonnegative_and_shift_invariant(
            s in prop::collection::vec(-20.0f64..20.0, 3),
            t in prop::collection::vec(-20.0f64..20.0, 3),
            label in 0usize..3,
            temp in 0.2f64..8.0,
            weight in 0.0f64..=1.0,
            shift in -50.0f64..50.0,
        ) {
            let cfg = DistillationConfig::new(temp, weight).unwrap();
            let base = kd_loss(&lv(&s), &lv(&t), label, &cfg).unwrap();
            prop_assert!(base >= 0.0);
            let moved: Vec<f64> = s.iter().map(|v| v + shift).collect();
            let other = kd_loss(&lv(&moved), &lv(&t), label, &cfg).unwrap();
            prop_assert!((base - other).abs() < 1e-10 * base.max(1.0));
            let g = kd_loss_gradient(&lv(&s), &lv(&t), label, &cfg).unwrap();
            prop_assert!(g.iter().sum::<f64>().abs() < 1e-10);
        }
    }
}
