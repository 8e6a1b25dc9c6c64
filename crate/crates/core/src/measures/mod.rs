//! Empirical probability measures, labeled datasets and synthetic generators.
//!
//! An [`EmpiricalMeasure`] is a uniform average of `m` Dirac masses in `R^k`.
//! Coordinates are stored flat (row-major, one point per `k` consecutive values).

mod io;

pub use io::{
    export_csv, load_point_cloud_dataset, load_point_cloud_dataset_with, save_binary, save_json,
};

use rand::Rng as _;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::rng::{self, Rng};

#[derive(Debug, Error)]
pub enum MeasureError {
    #[error("empty input")]
    EmptyInput,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("non-finite coordinate at point {point}, coordinate {coord}")]
    NonFiniteCoordinate { point: usize, coord: usize },
    #[error("invalid specification: {0}")]
    InvalidSpec(String),
    #[error("invalid label at index {index}: {reason}")]
    InvalidLabel { index: usize, reason: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("cloud {cloud} has {found} points, expected {expected}")]
    InconsistentPointCount {
        cloud: usize,
        expected: usize,
        found: usize,
    },
}

pub type Result<T> = std::result::Result<T, MeasureError>;

/// Uniform empirical measure `(1/m) sum_j delta_{x_j}` on `R^k`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMeasure {
    coords: Vec<f64>,
    dim: usize,
}

impl EmpiricalMeasure {
    /// Builds a measure from a list of points of equal dimension.
    pub fn from_points<P: AsRef<[f64]>>(points: &[P]) -> Result<Self> {
        let first = points.first().ok_or(MeasureError::EmptyInput)?;
        let dim = first.as_ref().len();
        if dim == 0 {
            return Err(MeasureError::EmptyInput);
        }
        let mut coords = Vec::with_capacity(points.len() * dim);
        for p in points {
            let p = p.as_ref();
            if p.len() != dim {
                return Err(MeasureError::DimensionMismatch {
                    expected: dim,
                    found: p.len(),
                });
            }
            coords.extend_from_slice(p);
        }
        Self::from_flat(coords, dim)
    }

    /// Builds a measure from row-major coordinates.
    pub fn from_flat(coords: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 || coords.is_empty() {
            return Err(MeasureError::EmptyInput);
        }
        if !coords.len().is_multiple_of(dim) {
            return Err(MeasureError::DimensionMismatch {
                expected: dim,
                found: coords.len() % dim,
            });
        }
        if let Some(pos) = coords.iter().position(|c| !c.is_finite()) {
            return Err(MeasureError::NonFiniteCoordinate {
                point: pos / dim,
                coord: pos % dim,
            });
        }
        Ok(Self { coords, dim })
    }

    /// Number of atoms `m`.
    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    /// Ambient dimension `k`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Mass carried by each atom.
    pub fn atom_mass(&self) -> f64 {
        1.0 / self.len() as f64
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.coords.chunks_exact(self.dim)
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    /// Shifts every atom by `shift`, zero-padding `shift` to the ambient dimension.
    pub fn translated(&self, shift: &[f64]) -> Result<Self> {
        if shift.len() > self.dim {
            return Err(MeasureError::DimensionMismatch {
                expected: self.dim,
                found: shift.len(),
            });
        }
        let mut coords = self.coords.clone();
        for p in coords.chunks_exact_mut(self.dim) {
            for (x, s) in p.iter_mut().zip(shift) {
                *x += s;
            }
        }
        Self::from_flat(coords, self.dim)
    }
}

/// Dense optional class labels over `n` nodes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Labels {
    values: Vec<Option<usize>>,
    n_classes: usize,
}

impl Labels {
    pub fn new(values: Vec<Option<usize>>, n_classes: usize) -> Result<Self> {
        for (index, l) in values.iter().enumerate() {
            if let Some(l) = l {
                if *l >= n_classes {
                    return Err(MeasureError::InvalidLabel {
                        index,
                        reason: format!("label {l} >= n_classes {n_classes}"),
                    });
                }
            }
        }
        Ok(Self { values, n_classes })
    }

    /// Fully labeled set; `n_classes` is one past the largest label.
    pub fn from_classes(classes: &[usize]) -> Self {
        let n_classes = classes.iter().max().map_or(0, |m| m + 1);
        Self {
            values: classes.iter().map(|&c| Some(c)).collect(),
            n_classes,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn get(&self, i: usize) -> Option<usize> {
        self.values[i]
    }

    pub fn values(&self) -> &[Option<usize>] {
        &self.values
    }

    pub fn n_labeled(&self) -> usize {
        self.values.iter().filter(|l| l.is_some()).count()
    }

    pub fn labeled_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.values[i].is_some()).collect()
    }

    pub fn unlabeled_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.values[i].is_none()).collect()
    }

    /// True when the known labels occupy exactly the indices `0..N`.
    pub fn is_prefix_labeled(&self) -> bool {
        let n = self.n_labeled();
        self.values[..n].iter().all(Option::is_some)
    }

    /// Keeps only the labels at `keep`; everything else becomes unlabeled.
    pub fn masked(&self, keep: &[usize]) -> Self {
        let mut values = vec![None; self.len()];
        for &i in keep {
            values[i] = self.values[i];
        }
        Self {
            values,
            n_classes: self.n_classes,
        }
    }
}

/// `n` empirical measures sharing an ambient dimension, with optional labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    measures: Vec<EmpiricalMeasure>,
    labels: Labels,
}

impl LabeledDataset {
    pub fn new(measures: Vec<EmpiricalMeasure>, labels: Labels) -> Result<Self> {
        let first = measures.first().ok_or(MeasureError::EmptyInput)?;
        let dim = first.dim();
        if let Some(bad) = measures.iter().find(|m| m.dim() != dim) {
            return Err(MeasureError::DimensionMismatch {
                expected: dim,
                found: bad.dim(),
            });
        }
        if labels.len() != measures.len() {
            return Err(MeasureError::InvalidSpec(format!(
                "{} labels for {} measures",
                labels.len(),
                measures.len()
            )));
        }
        Ok(Self { measures, labels })
    }

    /// Dataset with every node unlabeled.
    pub fn unlabeled(measures: Vec<EmpiricalMeasure>) -> Result<Self> {
        let n = measures.len();
        Self::new(measures, Labels::new(vec![None; n], 0)?)
    }

    pub fn len(&self) -> usize {
        self.measures.len()
    }

    pub fn is_empty(&self) -> bool {
        self.measures.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.measures[0].dim()
    }

    pub fn measures(&self) -> &[EmpiricalMeasure] {
        &self.measures
    }

    pub fn measure(&self, i: usize) -> &EmpiricalMeasure {
        &self.measures[i]
    }

    pub fn labels(&self) -> &Labels {
        &self.labels
    }

    pub fn n_labeled(&self) -> usize {
        self.labels.n_labeled()
    }

    pub fn n_classes(&self) -> usize {
        self.labels.n_classes()
    }

    /// Common atom count, if every measure has the same number of atoms.
    pub fn uniform_size(&self) -> Option<usize> {
        let m = self.measures[0].len();
        self.measures.iter().all(|x| x.len() == m).then_some(m)
    }

    pub fn with_labels(&self, labels: Labels) -> Result<Self> {
        Self::new(self.measures.clone(), labels)
    }
}

/// Parameters of the two-cluster Gaussian family.
///
/// Means `c_i = (c_i1, c_i2)`: `c_i1` follows a piecewise-constant density given by
/// `breakpoints`/`densities`, `c_i2` is uniform on `second_range`. Each measure is
/// `m` draws from `N(c_i, variance * I_2)`, labeled `0` iff `c_i1 < 0`.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GaussianFamilySpec {
    pub n: usize,
    pub m: usize,
    pub variance: f64,
    pub breakpoints: Vec<f64>,
    pub densities: Vec<f64>,
    pub second_range: (f64, f64),
}

impl GaussianFamilySpec {
    /// High-density bands `[-10,-8]` and `[8,10]` (density 1/6) around a sparse
    /// middle `[-8,8]` (density 1/48); second coordinate uniform on `[-10,10]`.
    pub fn new(n: usize, m: usize) -> Self {
        Self {
            n,
            m,
            variance: 1.0,
            breakpoints: vec![-10.0, -8.0, 8.0, 10.0],
            densities: vec![1.0 / 6.0, 1.0 / 48.0, 1.0 / 6.0],
            second_range: (-10.0, 10.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |s: &str| Err(MeasureError::InvalidSpec(s.to_string()));
        if self.n == 0 || self.m == 0 {
            return bad("n and m must be positive");
        }
        if !(self.variance > 0.0 && self.variance.is_finite()) {
            return bad("variance must be positive");
        }
        if self.breakpoints.len() != self.densities.len() + 1 || self.densities.is_empty() {
            return bad("need one more breakpoint than densities");
        }
        if self.breakpoints.windows(2).any(|w| !(w[0] < w[1])) {
            return bad("breakpoints must be strictly increasing");
        }
        if self.densities.iter().any(|d| !(*d >= 0.0 && d.is_finite())) {
            return bad("densities must be finite and nonnegative");
        }
        let total: f64 = self
            .densities
            .iter()
            .zip(self.breakpoints.windows(2))
            .map(|(d, w)| d * (w[1] - w[0]))
            .sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(MeasureError::InvalidSpec(format!(
                "density integrates to {total}, not 1"
            )));
        }
        let (lo, hi) = self.second_range;
        if !(lo < hi) {
            return bad("second_range must be nonempty");
        }
        Ok(())
    }

    /// Inverse CDF of the piecewise-constant first-coordinate density.
    pub fn first_coordinate_quantile(&self, u: f64) -> f64 {
        let mut cum = 0.0;
        let last = self.densities.len() - 1;
        for (k, (&d, w)) in self.densities.iter().zip(self.breakpoints.windows(2)).enumerate() {
            let mass = d * (w[1] - w[0]);
            if mass > 0.0 && (u < cum + mass || k == last) {
                return (w[0] + (u - cum) / d).clamp(w[0], w[1]);
            }
            cum += mass;
        }
        self.breakpoints[self.breakpoints.len() - 1]
    }
}

/// Samples the Gaussian family, returning the dataset and the true means.
pub fn sample_gaussian_family_with_means(
    spec: &GaussianFamilySpec,
    seed: u64,
) -> Result<(LabeledDataset, Vec<[f64; 2]>)> {
    spec.validate()?;
    let mut rng: Rng = rng::rng(seed);
    let sd = spec.variance.sqrt();
    let (lo, hi) = spec.second_range;
    let mut measures = Vec::with_capacity(spec.n);
    let mut classes = Vec::with_capacity(spec.n);
    let mut means = Vec::with_capacity(spec.n);
    for _ in 0..spec.n {
        let c1 = spec.first_coordinate_quantile(rng.random::<f64>());
        let c2 = lo + (hi - lo) * rng.random::<f64>();
        let mut coords = Vec::with_capacity(2 * spec.m);
        for _ in 0..spec.m {
            let z1: f64 = rng.sample(StandardNormal);
            let z2: f64 = rng.sample(StandardNormal);
            coords.push(c1 + sd * z1);
            coords.push(c2 + sd * z2);
        }
        measures.push(EmpiricalMeasure::from_flat(coords, 2)?);
        classes.push(usize::from(c1 >= 0.0));
        means.push([c1, c2]);
    }
    let labels = Labels::new(classes.into_iter().map(Some).collect(), 2)?;
    Ok((LabeledDataset::new(measures, labels)?, means))
}

/// Samples `n` empirical Gaussians with fully populated labels.
pub fn sample_gaussian_family(spec: &GaussianFamilySpec, seed: u64) -> Result<LabeledDataset> {
    sample_gaussian_family_with_means(spec, seed).map(|(d, _)| d)
}

/// Translates `base` by each `theta` (zero-padded to the ambient dimension).
///
/// With `resample_m = Some(m)`, each measure instead holds `m` atoms drawn
/// uniformly with replacement from the shifted base cloud.
pub fn sample_translation_family(
    base: &EmpiricalMeasure,
    thetas: &[Vec<f64>],
    resample_m: Option<usize>,
    seed: u64,
) -> Result<(LabeledDataset, Vec<Vec<f64>>)> {
    let d = thetas.first().ok_or(MeasureError::EmptyInput)?.len();
    if d > base.dim() {
        return Err(MeasureError::DimensionMismatch {
            expected: base.dim(),
            found: d,
        });
    }
    if let Some(t) = thetas.iter().find(|t| t.len() != d) {
        return Err(MeasureError::DimensionMismatch {
            expected: d,
            found: t.len(),
        });
    }
    if resample_m == Some(0) {
        return Err(MeasureError::InvalidSpec("resample_m must be positive".into()));
    }
    let mut rng: Rng = rng::rng(seed);
    let k = base.dim();
    let mut measures = Vec::with_capacity(thetas.len());
    for theta in thetas {
        let shifted = base.translated(theta)?;
        let measure = match resample_m {
            None => shifted,
            Some(m) => {
                let mut coords = Vec::with_capacity(m * k);
                for _ in 0..m {
                    let j = rng.random_range(0..shifted.len());
                    coords.extend_from_slice(shifted.point(j));
                }
                EmpiricalMeasure::from_flat(coords, k)?
            }
        };
        measures.push(measure);
    }
    Ok((LabeledDataset::unlabeled(measures)?, thetas.to_vec()))
}
