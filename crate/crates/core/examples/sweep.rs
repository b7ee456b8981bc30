// A reduced σ12 sweep written as CSV plus the two SVG panels.
//
// `cargo run --release --example sweep -- full` runs the default
// configuration (p=100, n=10000, ten seeds).

use cch::harness::{emit_csv, emit_figure_pair, grid_means, run_sigma12_sweep, SweepConfig};

pub fn run_example() -> cch::Result<()> {
    let full = std::env::args().any(|a| a == "full");
    let mut cfg = SweepConfig::sigma12_default();
    if !full {
        cfg.spec_base.p = 20;
        cfg.n_train = 1_000;
        cfg.n_test = 1_000;
        cfg.mi_subsample = 1_000;
        cfg.seeds = (0..4).collect();
    }
    let records = run_sigma12_sweep(&cfg)?;
    let dir = std::env::temp_dir().join("cch-sweep-example");
    std::fs::create_dir_all(&dir).map_err(|e| cch::Error::Io { path: dir.clone(), source: e })?;
    let csv = dir.join("sigma12.csv");
    emit_csv(&records, &csv)?;
    let [mse, mi] = emit_figure_pair(&records, &format!("{}/sigma12_", dir.display()), "sigma12")?;
    println!("{} records -> {}, {}, {}", records.len(), csv.display(), mse.display(), mi.display());
    let kd = grid_means(&records, "mse_kd");
    let base = grid_means(&records, "mse_no_kd");
    let gap = grid_means(&records, "mi_gap");
    for i in 0..kd.len() {
        println!("s12={:.1}  benefit {:+.3e}  mi gap {:+.4}", kd[i].0, base[i].1 - kd[i].1, gap[i].1);
    }
    Ok(())
}

fn main() {
    run_example().expect("sweep example");
}
