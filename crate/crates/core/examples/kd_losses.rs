// Temperature-softened distillation loss and its gradient.

use cch::losses::cross_entropy;
use cch::{kd_loss, kd_loss_gradient, softened_softmax, DistillationConfig, LogitVector};

pub fn run_example() -> cch::Result<()> {
    let student = LogitVector::new(vec![1.0, 2.0, 0.0])?;
    let teacher = LogitVector::new(vec![2.0, 1.0, 0.0])?;
    for t in [1.0, 3.0, 10.0] {
        println!("T={t:<4} teacher soft targets {:.4?}", softened_softmax(&teacher, t)?);
    }
    let cfg = DistillationConfig::new(3.0, 0.5)?;
    println!("cross entropy      {:.6}", cross_entropy(&student, 1)?);
    println!("kd loss (T=3, 0.5) {:.6}", kd_loss(&student, &teacher, 1, &cfg)?);
    println!("gradient           {:.6?}", kd_loss_gradient(&student, &teacher, 1, &cfg)?);
    Ok(())
}

fn main() {
    run_example().expect("kd loss example");
}
