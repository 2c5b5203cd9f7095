//! Fixed-size template representations: exemplars and principal subspaces.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::eigen::symmetric_eigen;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::quality::{quality_weights, QualityConfig};
use crate::scalar::{dot, norm, Scalar};
use crate::types::Template;

/// Eigenvalues below this fraction of the leading one are treated as zero.
const SPECTRUM_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExemplarKind {
    Plain,
    Quality,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SubspaceKind {
    Plain,
    Quality,
}

/// Pooled template vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Exemplar<T> {
    pub vector: Vec<T>,
    pub kind: ExemplarKind,
}

impl<T: Scalar> Exemplar<T> {
    /// A zero exemplar cannot be compared by cosine.
    pub fn is_degenerate(&self) -> bool {
        norm(&self.vector) <= T::min_positive_value()
    }

    pub fn dim(&self) -> usize {
        self.vector.len()
    }
}

/// Orthonormal basis (columns) of a template's principal subspace, with the
/// scatter eigenvalue belonging to each basis vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Subspace<T> {
    basis: Matrix<T>,
    spectrum: Vec<T>,
    kind: SubspaceKind,
}

impl<T: Scalar> Subspace<T> {
    pub fn new(basis: Matrix<T>, spectrum: Vec<T>, kind: SubspaceKind) -> Result<Self> {
        if basis.cols() == 0 || basis.cols() > basis.rows() {
            return Err(Error::validation(format!(
                "subspace basis must be D x d with 1 <= d <= D, got {}x{}",
                basis.rows(),
                basis.cols()
            )));
        }
        if spectrum.len() != basis.cols() {
            return Err(Error::validation("subspace spectrum length differs from its dimension"));
        }
        if spectrum.iter().any(|&v| !(v >= T::zero()) || !v.is_finite()) {
            return Err(Error::validation("subspace spectrum must be finite and non-negative"));
        }
        if spectrum.windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::validation("subspace spectrum must be descending"));
        }
        if basis.orthonormality_error() > T::rel_tol(1e-8) {
            return Err(Error::validation("subspace basis is not orthonormal"));
        }
        Ok(Subspace {
            basis,
            spectrum,
            kind,
        })
    }

    pub fn basis(&self) -> &Matrix<T> {
        &self.basis
    }

    pub fn spectrum(&self) -> &[T] {
        &self.spectrum
    }

    pub fn kind(&self) -> SubspaceKind {
        self.kind
    }

    /// Subspace dimension `d`.
    pub fn dim(&self) -> usize {
        self.basis.cols()
    }

    /// Feature dimension `D`.
    pub fn ambient_dim(&self) -> usize {
        self.basis.rows()
    }

    /// Orthogonal projector `P·Pᵀ`.
    pub fn projector(&self) -> Matrix<T> {
        let pt = self.basis.transpose();
        self.basis.matmul(&pt).expect("D x d times d x D")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AggregateConfig {
    #[serde(default = "default_dim")]
    pub subspace_dim: usize,
    /// Subtract the (weighted) template mean before forming the scatter matrix.
    #[serde(default)]
    pub center: bool,
    /// Error instead of truncating when a template has fewer samples than `subspace_dim`.
    #[serde(default)]
    pub strict: bool,
    #[serde(default)]
    pub quality: QualityConfig,
}

fn default_dim() -> usize {
    3
}

impl Default for AggregateConfig {
    fn default() -> Self {
        AggregateConfig {
            subspace_dim: default_dim(),
            quality: QualityConfig::default(),
            center: false,
            strict: false,
        }
    }
}

impl AggregateConfig {
    pub fn validate(&self) -> Result<()> {
        if self.subspace_dim == 0 {
            return Err(Error::Config("subspace_dim must be >= 1".into()));
        }
        self.quality.validate()
    }
}

/// Sample mean `(1/L)·Σ y_i`.
pub fn exemplar_mean<T: Scalar>(tpl: &Template<T>) -> Exemplar<T> {
    let weights = vec![T::one(); tpl.len()];
    Exemplar {
        vector: weighted_sum(tpl, &weights, T::one() / T::of(tpl.len() as f64)),
        kind: ExemplarKind::Plain,
    }
}

/// Quality-pooled exemplar `(1/L)·Σ d̃_i·y_i`.
pub fn exemplar_quality<T: Scalar>(tpl: &Template<T>, cfg: &QualityConfig) -> Result<Exemplar<T>> {
    let w = quality_weights(tpl.qualities(), cfg)?;
    Ok(Exemplar {
        vector: weighted_sum(tpl, w.as_slice(), T::one() / T::of(tpl.len() as f64)),
        kind: ExemplarKind::Quality,
    })
}

fn weighted_sum<T: Scalar>(tpl: &Template<T>, weights: &[T], scale: T) -> Vec<T> {
    let mut acc = vec![T::zero(); tpl.dim()];
    for (sample, &w) in tpl.samples().iter().zip(weights) {
        for (a, &y) in acc.iter_mut().zip(sample.as_slice()) {
            *a += w * y;
        }
    }
    acc.iter_mut().for_each(|a| *a *= scale);
    acc
}

/// Principal subspace of the uncentered scatter `Y·Yᵀ` (strict: `d` must not
/// exceed `min(D, N)`).
pub fn learn_subspace<T: Scalar>(tpl: &Template<T>, d: usize) -> Result<Subspace<T>> {
    let d = checked_dim(tpl, d, true)?;
    fit(tpl, None, d, false, SubspaceKind::Plain)
}

/// Plain subspace honoring the truncation and centering options of `cfg`.
pub fn learn_subspace_with<T: Scalar>(tpl: &Template<T>, cfg: &AggregateConfig) -> Result<Subspace<T>> {
    let d = checked_dim(tpl, cfg.subspace_dim, cfg.strict)?;
    fit(tpl, None, d, cfg.center, SubspaceKind::Plain)
}

/// Quality-weighted principal subspace.
///
/// Sample `i` enters the scatter with weight `N·d̃_i`: the normalized quality
/// weights rescaled to mean one. Rescaling all weights by a common factor leaves
/// the basis unchanged and keeps the spectrum on the same scale as the plain
/// subspace, which coincides with this one under uniform scores.
pub fn learn_subspace_quality<T: Scalar>(tpl: &Template<T>, cfg: &AggregateConfig) -> Result<Subspace<T>> {
    let d = checked_dim(tpl, cfg.subspace_dim, cfg.strict)?;
    let n = T::of(tpl.len() as f64);
    let weights: Vec<T> = quality_weights(tpl.qualities(), &cfg.quality)?
        .into_vec()
        .into_iter()
        .map(|w| w * n)
        .collect();
    fit(tpl, Some(&weights), d, cfg.center, SubspaceKind::Quality)
}

fn checked_dim<T: Scalar>(tpl: &Template<T>, d: usize, strict: bool) -> Result<usize> {
    let limit = tpl.dim().min(tpl.len());
    if d == 0 {
        return Err(Error::validation("subspace dimension must be >= 1"));
    }
    if d > limit {
        if strict {
            return Err(Error::validation(format!(
                "subspace dimension {d} exceeds min(D, N) = {limit}"
            )));
        }
        warn!("template with {} samples: subspace dimension truncated from {d} to {limit}", tpl.len());
        return Ok(limit);
    }
    Ok(d)
}

fn fit<T: Scalar>(
    tpl: &Template<T>,
    weights: Option<&[T]>,
    d: usize,
    center: bool,
    kind: SubspaceKind,
) -> Result<Subspace<T>> {
    let dim = tpl.dim();
    let ones;
    let w = match weights {
        Some(w) => w,
        None => {
            ones = vec![T::one(); tpl.len()];
            &ones
        }
    };
    let mean = if center {
        let total: T = w.iter().copied().sum();
        weighted_sum(tpl, w, T::one() / total)
    } else {
        vec![T::zero(); dim]
    };

    // rows of `ys` are the centered samples scaled by √w
    let ys: Vec<Vec<T>> = tpl
        .samples()
        .iter()
        .zip(w)
        .map(|(sample, &wi)| {
            let r = wi.sqrt();
            sample.as_slice().iter().zip(&mean).map(|(&s, &m)| r * (s - m)).collect()
        })
        .collect();
    let (values, basis) = if ys.len() < dim {
        gram_route(&ys, dim, d)?
    } else {
        scatter_route(&ys, dim, d)?
    };
    let lead = values[0].max(T::zero());
    let floor = T::of(SPECTRUM_FLOOR) * lead;
    let spectrum: Vec<T> = values[..d]
        .iter()
        .map(|&v| if v < floor || v < T::zero() { T::zero() } else { v })
        .collect();
    Subspace::new(basis, spectrum, kind)
}

fn scatter_route<T: Scalar>(ys: &[Vec<T>], dim: usize, d: usize) -> Result<(Vec<T>, Matrix<T>)> {
    let mut scatter = Matrix::<T>::zeros(dim, dim);
    for y in ys {
        for a in 0..dim {
            if y[a] == T::zero() {
                continue;
            }
            for b in a..dim {
                scatter[(a, b)] += y[a] * y[b];
            }
        }
    }
    for a in 0..dim {
        for b in 0..a {
            scatter[(a, b)] = scatter[(b, a)];
        }
    }
    let eig = symmetric_eigen(&scatter)?;
    Ok((eig.values, eig.vectors.leading_columns(d)))
}

/// Same eigenpairs through the `N x N` Gram matrix when `N < D`: for
/// `K·v = λ·v`, `u = Yᵀ·v / √λ` is a unit eigenvector of the scatter.
fn gram_route<T: Scalar>(ys: &[Vec<T>], dim: usize, d: usize) -> Result<(Vec<T>, Matrix<T>)> {
    let n = ys.len();
    let mut gram = Matrix::<T>::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = dot(&ys[i], &ys[j]);
            gram[(i, j)] = v;
            gram[(j, i)] = v;
        }
    }
    let eig = symmetric_eigen(&gram)?;
    let reliable = T::of(1e-8) * eig.values[0].max(T::zero());
    let mut columns: Vec<Vec<T>> = Vec::with_capacity(d);
    for j in 0..d {
        let lambda = eig.values[j];
        if lambda <= reliable || lambda <= T::zero() {
            break;
        }
        let scale = T::one() / lambda.sqrt();
        let mut u = vec![T::zero(); dim];
        for (i, y) in ys.iter().enumerate() {
            let c = eig.vectors[(i, j)] * scale;
            for (a, &yv) in u.iter_mut().zip(y) {
                *a += c * yv;
            }
        }
        columns.push(u);
    }
    // null directions: complete with coordinate axes
    let mut axis = 0;
    let mut basis: Vec<Vec<T>> = Vec::with_capacity(d);
    let mut pending = columns.into_iter();
    while basis.len() < d {
        let mut v = match pending.next() {
            Some(u) => u,
            None => {
                let mut e = vec![T::zero(); dim];
                e[axis] = T::one();
                axis += 1;
                e
            }
        };
        for _ in 0..2 {
            for b in &basis {
                let c = dot(&v, b);
                for (x, &bv) in v.iter_mut().zip(b) {
                    *x -= c * bv;
                }
            }
        }
        let nv = norm(&v);
        if nv > T::of(1e-6) {
            let pivot = v.iter().copied().fold(T::zero(), |m, x| if x.abs() > m.abs() { x } else { m });
            let s = if pivot < T::zero() { -nv } else { nv };
            basis.push(v.into_iter().map(|x| x / s).collect());
        } else if axis >= dim {
            return Err(Error::Numeric("cannot complete subspace basis".into()));
        }
    }
    let mut values = eig.values;
    values.resize(d.max(values.len()), T::zero());
    Ok((values, Matrix::from_columns(&basis)?))
}

/// Weighted reconstruction error `Σ w_i ‖y_i − P·Pᵀ·y_i‖²` of a template in the
/// span of `basis`.
pub fn reconstruction_error<T: Scalar>(tpl: &Template<T>, basis: &Matrix<T>, weights: Option<&[T]>) -> T {
    let mut total = T::zero();
    for (i, sample) in tpl.samples().iter().enumerate() {
        let y = sample.as_slice();
        let mut residual = y.to_vec();
        for j in 0..basis.cols() {
            let coef: T = (0..basis.rows()).map(|r| basis[(r, j)] * y[r]).sum();
            for r in 0..basis.rows() {
                residual[r] -= coef * basis[(r, j)];
            }
        }
        let w = weights.map_or(T::one(), |w| w[i]);
        total += w * residual.iter().map(|&v| v * v).sum::<T>();
    }
    total
}
