// KSG and Ross estimates against the Gaussian closed form.

use cch::{gaussian_mi, ksg_mi, ross_mi};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn run_example() -> cch::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let n = 3000;
    for rho in [0.2, 0.6, 0.9] {
        let x = DMatrix::from_fn(n, 1, |_, _| rng.sample::<f64, _>(StandardNormal));
        let y = DMatrix::from_fn(n, 1, |i, _| rho * x[(i, 0)] + (1.0f64 - rho * rho).sqrt() * rng.sample::<f64, _>(StandardNormal));
        let est = ksg_mi(&x, &y, 3, 0)?;
        println!("rho={rho}: ksg {:.4} nats, exact {:.4}", est.value, gaussian_mi(rho)?);
    }

    let labels: Vec<i64> = (0..n).map(|i| (i % 2) as i64).collect();
    let x = DMatrix::from_fn(n, 1, |i, _| 4.0 * labels[i] as f64 + rng.sample::<f64, _>(StandardNormal));
    println!("two classes 4 sd apart: ross {:.4} nats (ln 2 = {:.4})", ross_mi(&x, &labels, 3, 0)?.value, 2f64.ln());
    Ok(())
}

fn main() {
    run_example().expect("mutual information example");
}
