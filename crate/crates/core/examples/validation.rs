// The Monte-Carlo agreement suite behind `cch validate`.

use cch::validation::run_validation;

pub fn run_example() -> cch::Result<()> {
    let report = run_validation(true);
    print!("{}", report.table());
    println!("all passed: {}", report.passed());
    Ok(())
}

fn main() {
    run_example().expect("validation example");
}
