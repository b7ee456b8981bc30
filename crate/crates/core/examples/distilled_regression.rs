// Fit the teacher and the distilled student by least squares and compare
// test error with and without distillation.

use cch::regression::{excess_risk_population, test_mse};
use cch::{derive_population_model, fit_student, fit_teacher_population, sample_dataset, CorrelationSpec, TeacherWeights};

pub fn run_example() -> cch::Result<()> {
    let spec = CorrelationSpec::new(0.7, 0.9, 0.4, 50)?;
    let model = derive_population_model(&spec)?;
    let (teacher, adm) = fit_teacher_population(&model)?;
    println!("teacher admissible: {} (output variance {:.3})", adm.admissible, adm.output_variance);

    let train = sample_dataset(&spec, 2_000, 1)?;
    let test = sample_dataset(&spec, 2_000, 2)?;
    let base = fit_student(&train, &TeacherWeights::zeros(spec.p), 0.0)?;
    println!("lambda   test mse     excess risk");
    println!("0.0      {:.6}   {:.3e}", test_mse(&base, &test)?, excess_risk_population(&base, &model)?);
    for lambda in [0.2, 0.5, 1.0, 2.0] {
        let kd = fit_student(&train, &teacher, lambda)?;
        println!("{lambda:<8} {:.6}   {:.3e}", test_mse(&kd, &test)?, excess_risk_population(&kd, &model)?);
    }

    // n < p switches to the minimum-norm interpolator
    let small = sample_dataset(&spec, 30, 3)?;
    let interp = fit_student(&small, &teacher, 0.5)?;
    println!("n=30, p=50: {:?} student, excess risk {:.3}", interp.regime, excess_risk_population(&interp, &model)?);
    Ok(())
}

fn main() {
    run_example().expect("distilled regression example");
}
