// Build the jointly Gaussian model from three correlations, check feasibility
// and compare the exact blocks with a sampled covariance.

use cch::{derive_population_model, sample_dataset, validate_feasibility, CorrelationSpec};

pub fn run_example() -> cch::Result<()> {
    for (s12, s13, s23) in [(0.5, 0.9, 0.4), (0.1, 0.99, 0.9)] {
        let report = validate_feasibility(&CorrelationSpec { sigma12: s12, sigma13: s13, sigma23: s23, p: 3 });
        println!("({s12}, {s13}, {s23}): v = {:.4}, {}", report.v, report.message);
    }

    let spec = CorrelationSpec::new(0.5, 0.9, 0.4, 3)?;
    let model = derive_population_model(&spec)?;
    println!("w* = {:.4}", model.w_star.transpose());
    println!("noise variance = {:.4}", model.noise_var);

    let data = sample_dataset(&spec, 50_000, 7)?;
    let n = data.n() as f64;
    let emp12 = data.x1.column(0).dot(&data.x2.column(1)) / n;
    let emp13 = data.x1.column(0).dot(&data.y) / n;
    println!("Sigma12[0,1]: exact {:.4}, sampled {:.4}", model.sigma12[(0, 1)], emp12);
    println!("Sigma13[0]:   exact {:.4}, sampled {:.4}", model.sigma13[0], emp13);
    Ok(())
}

fn main() {
    run_example().expect("population model example");
}
