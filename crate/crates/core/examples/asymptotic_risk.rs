// Closed-form excess risk in both aspect-ratio regimes, the small-λ test,
// the information criterion and the optimal teacher weight.

use cch::asymptotic::{cch_correlations, optimal_teacher_weight};
use cch::{
    asymptotic_risk, cch_mi_gap, cch_verdict, derive_population_model, fit_teacher_population, small_lambda_condition,
    AsymptoticContext, CorrelationSpec,
};

pub fn run_example() -> cch::Result<()> {
    println!("s12   gap(nats)  verdict   small-lambda lhs  risk(l=0.5)  risk(l=0)");
    for s12 in [0.0, 0.3, 0.5, 0.7] {
        let model = derive_population_model(&CorrelationSpec::new(s12, 0.9, 0.4, 100)?)?;
        let (teacher, _) = fit_teacher_population(&model)?;
        let gap = cch_mi_gap(&model, &teacher)?;
        let cond = small_lambda_condition(&model, &teacher)?;
        let kd = asymptotic_risk(&AsymptoticContext::new(&model, 100.0, &teacher, 0.5)?)?;
        let base = asymptotic_risk(&AsymptoticContext::new(&model, 100.0, &teacher, 0.0)?)?;
        println!(
            "{s12:<5} {:>9.4}  {:<8?}  {:>16.3e}  {:>11.4e}  {:>9.4e}",
            gap.gap,
            cch_verdict(&model, &teacher)?,
            cond.lhs,
            kd.total,
            base.total
        );
    }

    let model = derive_population_model(&CorrelationSpec::new(0.6, 0.9, 0.4, 100)?)?;
    let (teacher, _) = fit_teacher_population(&model)?;
    let rho = cch_correlations(&model, &teacher)?;
    println!("correlations: {rho:?}");
    let over = asymptotic_risk(&AsymptoticContext::new(&model, 0.5, &teacher, 0.3)?)?;
    println!(
        "kappa=0.5: tau={:.4}, omega={:.4}, risk={:.4}",
        over.tau.unwrap_or(f64::NAN),
        over.omega.unwrap_or(f64::NAN),
        over.total
    );

    let best = optimal_teacher_weight(&model, 20.0, 0.5)?;
    let r_best = asymptotic_risk(&AsymptoticContext::new(&model, 20.0, &best, 0.5)?)?.total;
    let r_pop = asymptotic_risk(&AsymptoticContext::new(&model, 20.0, &teacher, 0.5)?)?.total;
    println!("kappa=20, lambda=0.5: optimal teacher risk {r_best:.4e} vs population teacher {r_pop:.4e}");
    Ok(())
}

fn main() {
    run_example().expect("asymptotic risk example");
}
