//! The jointly Gaussian teacher/student/label model.
//!
//! Samples are drawn with a three-stage conditional scheme:
//!
//! ```text
//! Y        ~ N(0, 1)
//! X2 | Y   ~ N(σ23·Y·1, φ·I)                 φ = 1 − σ23²
//! X1 | X2,Y ~ N(a·X2 + b·Y·1, v·I)
//! ```
//!
//! with `a = (σ12 − σ13σ23)/φ`, `b = (σ13 − σ12σ23)/φ` and
//! `v = 1 − (σ12² + σ13² − 2σ12σ13σ23)/φ`. Because the scalar label is
//! broadcast to every coordinate, coordinates are coupled through `Y` and the
//! implied blocks carry rank-one corrections:
//!
//! ```text
//! Σ11 = (1 − σ13²) I + σ13² J      Σ12 = (σ12 − σ13σ23) I + σ13σ23 J
//! Σ22 = (1 − σ23²) I + σ23² J      Σ13 = σ13·1,  Σ23 = σ23·1,  Σ33 = 1
//! ```

use std::io::Write;
use std::path::Path;

use nalgebra::{Cholesky as NaCholesky, DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, quad_form, spd_solve};
use crate::rng::{self, stage};

/// The three scalar cross-correlations and the per-modality dimension.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrelationSpec {
    pub sigma12: f64,
    pub sigma13: f64,
    pub sigma23: f64,
    pub p: usize,
}

/// Coefficients of the conditional sampler.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchemeCoefficients {
    pub phi: f64,
    pub a: f64,
    pub b: f64,
    pub v: f64,
}

impl CorrelationSpec {
    /// Build a spec, rejecting out-of-range correlations and infeasible triples.
    pub fn new(sigma12: f64, sigma13: f64, sigma23: f64, p: usize) -> Result<Self> {
        let spec = Self {
            sigma12,
            sigma13,
            sigma23,
            p,
        };
        spec.check()?;
        Ok(spec)
    }

    pub fn with_sigma12(self, sigma12: f64) -> Self {
        Self { sigma12, ..self }
    }

    pub fn coefficients(&self) -> SchemeCoefficients {
        let (s12, s13, s23) = (self.sigma12, self.sigma13, self.sigma23);
        let phi = 1.0 - s23 * s23;
        SchemeCoefficients {
            phi,
            a: (s12 - s13 * s23) / phi,
            b: (s13 - s12 * s23) / phi,
            v: 1.0 - (s12 * s12 + s13 * s13 - 2.0 * s12 * s13 * s23) / phi,
        }
    }

    fn check_ranges(&self) -> Result<()> {
        for (name, value) in [
            ("sigma12", self.sigma12),
            ("sigma13", self.sigma13),
            ("sigma23", self.sigma23),
        ] {
            if !(value > -1.0 && value < 1.0) {
                return Err(Error::invalid(name, format!("{value} is not inside (-1, 1)")));
            }
        }
        if self.p == 0 {
            return Err(Error::invalid("p", "dimension must be positive"));
        }
        Ok(())
    }

    /// Range and feasibility check (`v > 0`).
    pub fn check(&self) -> Result<()> {
        self.check_ranges()?;
        let c = self.coefficients();
        if !(c.v > 0.0) {
            return Err(Error::Infeasible {
                sigma12: self.sigma12,
                sigma13: self.sigma13,
                sigma23: self.sigma23,
                v: c.v,
            });
        }
        Ok(())
    }
}

/// Feasibility diagnostics for a correlation triple.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeasibilityReport {
    pub spec: CorrelationSpec,
    pub phi: f64,
    pub v: f64,
    /// Whether a Cholesky factorization of the assembled joint covariance succeeds.
    pub joint_psd: bool,
    pub feasible: bool,
    pub message: String,
}

/// Report `v`, `φ` and positive semidefiniteness of the joint covariance.
pub fn validate_feasibility(spec: &CorrelationSpec) -> FeasibilityReport {
    let c = spec.coefficients();
    let ranges = spec.check_ranges();
    let feasible = ranges.is_ok() && c.phi > 0.0 && c.v > 0.0;
    let joint_psd = ranges.is_ok()
        && c.phi > 0.0
        && NaCholesky::new(blocks_from_spec(spec).joint_covariance()).is_some();
    let message = match (&ranges, feasible) {
        (Err(e), _) => e.to_string(),
        (Ok(()), true) => "feasible".to_string(),
        (Ok(()), false) => Error::Infeasible {
            sigma12: spec.sigma12,
            sigma13: spec.sigma13,
            sigma23: spec.sigma23,
            v: c.v,
        }
        .to_string(),
    };
    FeasibilityReport {
        spec: *spec,
        phi: c.phi,
        v: c.v,
        joint_psd,
        feasible,
        message,
    }
}

/// Population covariance blocks with the derived optimal student weight.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationModel {
    pub sigma11: DMatrix<f64>,
    pub sigma12: DMatrix<f64>,
    pub sigma13: DVector<f64>,
    pub sigma22: DMatrix<f64>,
    pub sigma23: DVector<f64>,
    pub sigma33: f64,
    /// `Σ22⁻¹ Σ23`.
    pub w_star: DVector<f64>,
    /// `Σ33 − Σ23ᵀ Σ22⁻¹ Σ23`.
    pub noise_var: f64,
}

struct RawBlocks {
    s11: DMatrix<f64>,
    s12: DMatrix<f64>,
    s13: DVector<f64>,
    s22: DMatrix<f64>,
    s23: DVector<f64>,
    s33: f64,
}

impl RawBlocks {
    fn joint_covariance(&self) -> DMatrix<f64> {
        assemble_joint(&self.s11, &self.s12, &self.s13, &self.s22, &self.s23, self.s33)
    }
}

fn assemble_joint(
    s11: &DMatrix<f64>,
    s12: &DMatrix<f64>,
    s13: &DVector<f64>,
    s22: &DMatrix<f64>,
    s23: &DVector<f64>,
    s33: f64,
) -> DMatrix<f64> {
    let p = s11.nrows();
    let mut joint = DMatrix::zeros(2 * p + 1, 2 * p + 1);
    joint.view_mut((0, 0), (p, p)).copy_from(s11);
    joint.view_mut((0, p), (p, p)).copy_from(s12);
    joint.view_mut((p, 0), (p, p)).copy_from(&s12.transpose());
    joint.view_mut((p, p), (p, p)).copy_from(s22);
    for i in 0..p {
        joint[(i, 2 * p)] = s13[i];
        joint[(2 * p, i)] = s13[i];
        joint[(p + i, 2 * p)] = s23[i];
        joint[(2 * p, p + i)] = s23[i];
    }
    joint[(2 * p, 2 * p)] = s33;
    joint
}

fn blocks_from_spec(spec: &CorrelationSpec) -> RawBlocks {
    let p = spec.p;
    let (s12, s13, s23) = (spec.sigma12, spec.sigma13, spec.sigma23);
    let equi = |diag: f64, off: f64| DMatrix::from_fn(p, p, |i, j| if i == j { diag } else { off });
    RawBlocks {
        s11: equi(1.0, s13 * s13),
        s12: equi(s12, s13 * s23),
        s13: DVector::from_element(p, s13),
        s22: equi(1.0, s23 * s23),
        s23: DVector::from_element(p, s23),
        s33: 1.0,
    }
}

const PSD_RTOL: f64 = 1e-10;

impl PopulationModel {
    /// Build a model from arbitrary blocks.
    ///
    /// The assembled joint covariance must be symmetric positive semidefinite
    /// (smallest eigenvalue above `-1e-10` times the largest) and `Σ22` must be
    /// invertible.
    pub fn from_blocks(
        sigma11: DMatrix<f64>,
        sigma12: DMatrix<f64>,
        sigma13: DVector<f64>,
        sigma22: DMatrix<f64>,
        sigma23: DVector<f64>,
        sigma33: f64,
    ) -> Result<Self> {
        let p = sigma22.nrows();
        let shapes_ok = sigma11.shape() == (p, p)
            && sigma12.shape() == (p, p)
            && sigma22.shape() == (p, p)
            && sigma13.len() == p
            && sigma23.len() == p;
        if p == 0 || !shapes_ok {
            return Err(Error::DimensionMismatch(format!(
                "blocks do not describe two p-dimensional modalities (Σ11 {:?}, Σ12 {:?}, Σ22 {:?}, Σ13 {}, Σ23 {})",
                sigma11.shape(),
                sigma12.shape(),
                sigma22.shape(),
                sigma13.len(),
                sigma23.len()
            )));
        }
        for (name, m) in [("Σ11", &sigma11), ("Σ22", &sigma22)] {
            let asym = (m - m.transpose()).amax();
            if asym > 1e-12 * m.amax().max(1.0) {
                return Err(Error::Inconsistent(format!("{name} is not symmetric ({asym:e})")));
            }
        }
        let joint = assemble_joint(&sigma11, &sigma12, &sigma13, &sigma22, &sigma23, sigma33);
        let eig = SymmetricEigenMin::of(&joint);
        if eig.min < -PSD_RTOL * eig.max.max(1.0) {
            return Err(Error::Inconsistent(format!(
                "joint covariance is not positive semidefinite (smallest eigenvalue {:e})",
                eig.min
            )));
        }
        Self::finish(RawBlocks {
            s11: sigma11,
            s12: sigma12,
            s13: sigma13,
            s22: sigma22,
            s23: sigma23,
            s33: sigma33,
        })
    }

    fn finish(b: RawBlocks) -> Result<Self> {
        let w_star = spd_solve(&b.s22, &b.s23)?;
        let explained = b.s23.dot(&w_star);
        let mut noise_var = b.s33 - explained;
        if noise_var < 0.0 {
            if noise_var < -1e-10 * b.s33.abs().max(1.0) {
                return Err(Error::Inconsistent(format!(
                    "negative residual variance {noise_var:e}"
                )));
            }
            noise_var = 0.0;
        }
        Ok(Self {
            sigma11: b.s11,
            sigma12: b.s12,
            sigma13: b.s13,
            sigma22: b.s22,
            sigma23: b.s23,
            sigma33: b.s33,
            w_star,
            noise_var,
        })
    }

    pub fn p(&self) -> usize {
        self.sigma22.nrows()
    }

    /// The `(2p+1)×(2p+1)` covariance of `(x1, x2, y)`.
    pub fn joint_covariance(&self) -> DMatrix<f64> {
        assemble_joint(
            &self.sigma11,
            &self.sigma12,
            &self.sigma13,
            &self.sigma22,
            &self.sigma23,
            self.sigma33,
        )
    }

    /// Explained variance `w*ᵀ Σ22 w*`.
    pub fn student_signal(&self) -> f64 {
        quad_form(&self.w_star, &self.sigma22)
    }

    /// The model seen after adding `level · std · N(0, 1)` to each teacher coordinate.
    pub fn with_teacher_noise(&self, level: f64) -> Result<Self> {
        check_noise_level(level)?;
        let mut out = self.clone();
        for i in 0..self.p() {
            out.sigma11[(i, i)] += level * level * self.sigma11[(i, i)];
        }
        Ok(out)
    }

    /// Draw `n` samples by a Cholesky factor of the joint covariance.
    ///
    /// Works for any model; [`sample_dataset`] is the sampler for models built
    /// from a [`CorrelationSpec`].
    pub fn sample(&self, n: usize, seed: u64) -> Result<Dataset> {
        if n == 0 {
            return Err(Error::invalid("n", "need at least one sample"));
        }
        let p = self.p();
        let joint = self.joint_covariance();
        let factor = match NaCholesky::new(joint.clone()) {
            Some(c) => c.l(),
            None => {
                let d = 2 * p + 1;
                let shift = linalg::JITTER_RTOL * joint.trace() / d as f64;
                NaCholesky::new(joint + DMatrix::identity(d, d) * shift)
                    .ok_or_else(|| Error::Singular("joint covariance".into()))?
                    .l()
            }
        };
        let d = 2 * p + 1;
        let mut rng = rng::stream(seed, stage::JOINT);
        let z: Vec<f64> = (0..n * d).map(|_| StandardNormal.sample(&mut rng)).collect();
        let z = DMatrix::from_row_slice(n, d, &z);
        let samples = z * factor.transpose();
        Dataset::new(
            samples.columns(0, p).into_owned(),
            samples.columns(p, p).into_owned(),
            samples.column(2 * p).into_owned(),
            seed,
            None,
        )
    }
}

struct SymmetricEigenMin {
    min: f64,
    max: f64,
}

impl SymmetricEigenMin {
    fn of(a: &DMatrix<f64>) -> Self {
        let mut sym = a.clone();
        linalg::symmetrize(&mut sym);
        let values = sym.symmetric_eigenvalues();
        Self {
            min: values.min(),
            max: values.max(),
        }
    }
}

/// Exact population blocks implied by the conditional sampling scheme.
pub fn derive_population_model(spec: &CorrelationSpec) -> Result<PopulationModel> {
    spec.check()?;
    PopulationModel::finish(blocks_from_spec(spec))
}

/// One draw of `n` i.i.d. samples from the model.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// Teacher modality, `n × p`.
    pub x1: DMatrix<f64>,
    /// Student modality, `n × p`.
    pub x2: DMatrix<f64>,
    pub y: DVector<f64>,
    pub seed: u64,
    pub spec: Option<CorrelationSpec>,
}

impl Dataset {
    pub fn new(
        x1: DMatrix<f64>,
        x2: DMatrix<f64>,
        y: DVector<f64>,
        seed: u64,
        spec: Option<CorrelationSpec>,
    ) -> Result<Self> {
        if x1.nrows() != y.len() || x2.nrows() != y.len() {
            return Err(Error::DimensionMismatch(format!(
                "x1 has {} rows, x2 has {} rows, y has {} entries",
                x1.nrows(),
                x2.nrows(),
                y.len()
            )));
        }
        if x1.ncols() != x2.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "x1 has {} columns but x2 has {}",
                x1.ncols(),
                x2.ncols()
            )));
        }
        Ok(Self {
            x1,
            x2,
            y,
            seed,
            spec,
        })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x2.ncols()
    }

    /// First `m` rows (all rows when `m >= n`).
    pub fn head(&self, m: usize) -> Dataset {
        let m = m.min(self.n());
        Dataset {
            x1: self.x1.rows(0, m).into_owned(),
            x2: self.x2.rows(0, m).into_owned(),
            y: self.y.rows(0, m).into_owned(),
            seed: self.seed,
            spec: self.spec,
        }
    }

    /// CSV with columns `x1_0..x1_{p-1}, x2_0..x2_{p-1}, y`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = std::io::BufWriter::new(file);
        self.write_csv_to(&mut out).map_err(|e| Error::io(path, e))
    }

    pub fn write_csv_to<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        let p = self.p();
        let header: Vec<String> = (0..p)
            .map(|j| format!("x1_{j}"))
            .chain((0..p).map(|j| format!("x2_{j}")))
            .chain(std::iter::once("y".to_string()))
            .collect();
        writeln!(out, "{}", header.join(","))?;
        for i in 0..self.n() {
            let row: Vec<String> = (0..p)
                .map(|j| format!("{:e}", self.x1[(i, j)]))
                .chain((0..p).map(|j| format!("{:e}", self.x2[(i, j)])))
                .chain(std::iter::once(format!("{:e}", self.y[i])))
                .collect();
            writeln!(out, "{}", row.join(","))?;
        }
        out.flush()
    }
}

fn normal_block(n: usize, p: usize, seed: u64, stage_id: u64) -> DMatrix<f64> {
    let mut rng = rng::stream(seed, stage_id);
    let values: Vec<f64> = (0..n * p).map(|_| StandardNormal.sample(&mut rng)).collect();
    DMatrix::from_row_slice(n, p, &values)
}

/// Sample with the three-stage conditional scheme; deterministic in `seed`.
pub fn sample_dataset(spec: &CorrelationSpec, n: usize, seed: u64) -> Result<Dataset> {
    spec.check()?;
    if n == 0 {
        return Err(Error::invalid("n", "need at least one sample"));
    }
    let p = spec.p;
    let c = spec.coefficients();
    let y = {
        let mut rng = rng::stream(seed, stage::LABEL);
        DVector::from_iterator(n, (0..n).map(|_| StandardNormal.sample(&mut rng)))
    };
    let mut x2 = normal_block(n, p, seed, stage::STUDENT_NOISE);
    let mut x1 = normal_block(n, p, seed, stage::TEACHER_NOISE);
    let (sd2, sd1) = (c.phi.sqrt(), c.v.sqrt());
    for j in 0..p {
        for i in 0..n {
            let yi = y[i];
            let x2ij = spec.sigma23 * yi + sd2 * x2[(i, j)];
            x2[(i, j)] = x2ij;
            x1[(i, j)] = c.a * x2ij + c.b * yi + sd1 * x1[(i, j)];
        }
    }
    Dataset::new(x1, x2, y, seed, Some(*spec))
}

fn check_noise_level(level: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&level) {
        return Err(Error::invalid("noise_level", format!("{level} is outside [0, 1]")));
    }
    Ok(())
}

/// Replace `x1` by `x1 + level · s · G`, `s` the per-coordinate sample std.
pub fn apply_teacher_noise(dataset: &Dataset, noise_level: f64, seed: u64) -> Result<Dataset> {
    check_noise_level(noise_level)?;
    if noise_level == 0.0 {
        return Ok(dataset.clone());
    }
    let (n, p) = dataset.x1.shape();
    let g = normal_block(n, p, seed, stage::INPUT_NOISE);
    let mut out = dataset.clone();
    for j in 0..p {
        let col = dataset.x1.column(j);
        let sd = sample_std(col.iter().copied());
        for i in 0..n {
            out.x1[(i, j)] += noise_level * sd * g[(i, j)];
        }
    }
    Ok(out)
}

pub(crate) fn sample_std(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let (count, sum) = values.clone().fold((0usize, 0.0), |(c, s), v| (c + 1, s + v));
    if count < 2 {
        return 0.0;
    }
    let mean = sum / count as f64;
    let ss: f64 = values.map(|v| (v - mean) * (v - mean)).sum();
    (ss / (count - 1) as f64).sqrt()
}
