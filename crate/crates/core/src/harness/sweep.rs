use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::asymptotic::{asymptotic_risk, cch_mi_gap, AsymptoticContext};
use crate::error::{Error, Result};
use crate::gaussian_model::{apply_teacher_noise, derive_population_model, sample_dataset};
use crate::mi::ksg_mi;
use crate::regression::{fit_student, fit_teacher_empirical, fit_teacher_population, test_mse, TeacherSource, TeacherWeights};
use crate::rng::derive_seed;

use super::config::{SweepConfig, SweepVariable};

/// Environment variable overriding the worker count.
pub const THREADS_ENV: &str = "CCH_THREADS";

/// One (grid point, seed) outcome. Field order is the CSV column order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRecord {
    pub grid_value: f64,
    pub seed: u64,
    pub mse_kd: f64,
    pub mse_no_kd: f64,
    pub risk_asymptotic_kd: f64,
    pub risk_asymptotic_no_kd: f64,
    pub i_ts_closed: f64,
    pub i_sy_closed: f64,
    pub i_ts_ksg: f64,
    pub i_sy_ksg: f64,
    pub mi_gap: f64,
    pub cch_beneficial: bool,
}

impl SweepRecord {
    pub const COLUMNS: [&'static str; 12] = [
        "grid_value",
        "seed",
        "mse_kd",
        "mse_no_kd",
        "risk_asymptotic_kd",
        "risk_asymptotic_no_kd",
        "i_ts_closed",
        "i_sy_closed",
        "i_ts_ksg",
        "i_sy_ksg",
        "mi_gap",
        "cch_beneficial",
    ];

    /// Numeric column by name (`cch_beneficial` as 0/1).
    pub fn column(&self, name: &str) -> Option<f64> {
        Some(match name {
            "grid_value" => self.grid_value,
            "seed" => self.seed as f64,
            "mse_kd" => self.mse_kd,
            "mse_no_kd" => self.mse_no_kd,
            "risk_asymptotic_kd" => self.risk_asymptotic_kd,
            "risk_asymptotic_no_kd" => self.risk_asymptotic_no_kd,
            "i_ts_closed" => self.i_ts_closed,
            "i_sy_closed" => self.i_sy_closed,
            "i_ts_ksg" => self.i_ts_ksg,
            "i_sy_ksg" => self.i_sy_ksg,
            "mi_gap" => self.mi_gap,
            "cch_beneficial" => f64::from(u8::from(self.cch_beneficial)),
            _ => return None,
        })
    }

    /// `mse_no_kd − mse_kd`; positive when distillation helps.
    pub fn kd_benefit(&self) -> f64 {
        self.mse_no_kd - self.mse_kd
    }
}

// sub-stream tags under a work item's key
const TRAIN: u64 = 0;
const TEST: u64 = 1;
const NOISE_TRAIN: u64 = 2;
const NOISE_TEST: u64 = 3;
const JITTER: u64 = 4;

#[derive(Clone, Copy)]
struct WorkItem {
    grid_index: usize,
    value: f64,
    seed: u64,
}

/// Stream seeds of one work item. Clean data for the σ12 sweep depends on the
/// grid point; the λ and noise sweeps reuse the same clean draws across the grid.
fn item_seed(cfg: &SweepConfig, item: &WorkItem, tag: u64) -> u64 {
    let per_point = match cfg.sweep_variable {
        SweepVariable::Sigma12 => true,
        _ => matches!(tag, NOISE_TRAIN | NOISE_TEST),
    };
    if per_point {
        derive_seed(cfg.master_seed, &[item.grid_index as u64, item.seed, tag])
    } else {
        derive_seed(cfg.master_seed, &[u64::MAX, item.seed, tag])
    }
}

fn column(v: nalgebra::DVector<f64>) -> DMatrix<f64> {
    let n = v.len();
    DMatrix::from_vec(n, 1, v.data.into())
}

fn run_item(cfg: &SweepConfig, item: &WorkItem) -> Result<SweepRecord> {
    let spec = cfg.spec_at(item.value);
    let (lambda, noise) = match cfg.sweep_variable {
        SweepVariable::Sigma12 => (cfg.lambda, 0.0),
        SweepVariable::Lambda => (item.value, 0.0),
        SweepVariable::NoiseLevel => (cfg.lambda, item.value),
    };
    let clean_model = derive_population_model(&spec)?;
    let model = clean_model.with_teacher_noise(noise)?;
    let train = sample_dataset(&spec, cfg.n_train, item_seed(cfg, item, TRAIN))?;
    let test = sample_dataset(&spec, cfg.n_test, item_seed(cfg, item, TEST))?;
    let train_t = apply_teacher_noise(&train, noise, item_seed(cfg, item, NOISE_TRAIN))?;
    let test_t = apply_teacher_noise(&test, noise, item_seed(cfg, item, NOISE_TEST))?;

    let teacher = match cfg.teacher_source {
        TeacherSource::EmpiricalLs => fit_teacher_empirical(&train_t)?,
        _ => fit_teacher_population(&model)?.0,
    };
    let kd = fit_student(&train_t, &teacher, lambda)?;
    let base = fit_student(&train, &TeacherWeights::zeros(spec.p), 0.0)?;

    let kappa = cfg.n_train as f64 / spec.p as f64;
    let risk_kd = asymptotic_risk(&AsymptoticContext::new(&model, kappa, &teacher, lambda)?)?.total;
    let risk_base = asymptotic_risk(&AsymptoticContext::new(&model, kappa, &teacher, 0.0)?)?.total;
    let gap = cch_mi_gap(&model, &teacher)?;

    let sub = test_t.head(cfg.mi_subsample);
    let h_teacher = column(teacher.predict(&sub.x1)?);
    let h_student = column(base.predict(&sub.x2));
    let label = column(sub.y.clone());
    let jitter = derive_seed(cfg.master_seed, &[item.seed, JITTER]);
    let i_ts_ksg = ksg_mi(&h_teacher, &h_student, cfg.ksg_k, jitter)?.value;
    let i_sy_ksg = ksg_mi(&h_student, &label, cfg.ksg_k, jitter)?.value;

    Ok(SweepRecord {
        grid_value: item.value,
        seed: item.seed,
        mse_kd: test_mse(&kd, &test)?,
        mse_no_kd: test_mse(&base, &test)?,
        risk_asymptotic_kd: risk_kd,
        risk_asymptotic_no_kd: risk_base,
        i_ts_closed: gap.i_ts,
        i_sy_closed: gap.i_sy,
        i_ts_ksg,
        i_sy_ksg,
        mi_gap: gap.gap,
        cch_beneficial: gap.gap > 0.0,
    })
}

/// Run whichever sweep the config names, on the global pool (or `CCH_THREADS` workers).
pub fn run_sweep(cfg: &SweepConfig) -> Result<Vec<SweepRecord>> {
    match std::env::var(THREADS_ENV).ok().and_then(|v| v.parse::<usize>().ok()) {
        Some(threads) if threads > 0 => run_sweep_with_threads(cfg, threads),
        _ => run_items(cfg),
    }
}

/// Run on a dedicated pool of `threads` workers.
pub fn run_sweep_with_threads(cfg: &SweepConfig, threads: usize) -> Result<Vec<SweepRecord>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| run_items(cfg))
}

fn run_items(cfg: &SweepConfig) -> Result<Vec<SweepRecord>> {
    cfg.validate()?;
    let items: Vec<WorkItem> = cfg
        .grid
        .iter()
        .enumerate()
        .flat_map(|(grid_index, &value)| cfg.seeds.iter().map(move |&seed| WorkItem { grid_index, value, seed }))
        .collect();
    let mut records = items.par_iter().map(|item| run_item(cfg, item)).collect::<Result<Vec<_>>>()?;
    records.sort_by(|a, b| a.grid_value.total_cmp(&b.grid_value).then(a.seed.cmp(&b.seed)));
    Ok(records)
}

fn expect(cfg: &SweepConfig, variable: SweepVariable) -> Result<()> {
    if cfg.sweep_variable != variable {
        return Err(Error::Config(format!(
            "config sweeps {:?}, expected {:?}",
            cfg.sweep_variable, variable
        )));
    }
    Ok(())
}

/// Student MSE with and without distillation across σ12.
pub fn run_sigma12_sweep(cfg: &SweepConfig) -> Result<Vec<SweepRecord>> {
    expect(cfg, SweepVariable::Sigma12)?;
    run_sweep(cfg)
}

/// Same clean draws at every λ; MI columns are constant across the grid.
pub fn run_lambda_sweep(cfg: &SweepConfig) -> Result<Vec<SweepRecord>> {
    expect(cfg, SweepVariable::Lambda)?;
    run_sweep(cfg)
}

/// Teacher inputs degraded by `apply_teacher_noise` before teacher fitting and distillation.
pub fn run_noise_sweep(cfg: &SweepConfig) -> Result<Vec<SweepRecord>> {
    expect(cfg, SweepVariable::NoiseLevel)?;
    run_sweep(cfg)
}

/// Seed-averaged value of `name` at each distinct grid value, in grid order.
pub fn grid_means(records: &[SweepRecord], name: &str) -> Vec<(f64, f64)> {
    let mut out: Vec<(f64, f64, usize)> = Vec::new();
    for r in records {
        let v = r.column(name).unwrap_or(f64::NAN);
        match out.iter_mut().find(|(g, _, _)| *g == r.grid_value) {
            Some(slot) => {
                slot.1 += v;
                slot.2 += 1;
            }
            None => out.push((r.grid_value, v, 1)),
        }
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out.into_iter().map(|(g, s, c)| (g, s / c as f64)).collect()
}
