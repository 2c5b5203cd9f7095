//! Template-to-template similarity: exemplar cosine, projection metric (PM),
//! variance-aware projection metric (VPM) and their fusion.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::aggregate::{
    exemplar_mean, exemplar_quality, learn_subspace_quality, learn_subspace_with, AggregateConfig,
    Exemplar, ExemplarKind, Subspace, SubspaceKind,
};
use crate::eigen::symmetric_eigen;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::{dot, norm, Scalar};
use crate::types::Template;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MetricKind {
    #[serde(rename = "PM")]
    Pm,
    #[serde(rename = "VPM")]
    Vpm,
}

/// Which exemplar, subspace and metric to combine, and the fusion weight `λ`.
///
/// Written and parsed by name, e.g. `Cos`, `QCos`, `Cos+Sub-PM` or `QCos+QSub-VPM`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimilarityConfig {
    pub exemplar_kind: ExemplarKind,
    pub subspace_kind: Option<SubspaceKind>,
    pub metric_kind: MetricKind,
    pub lambda_fusion: f64,
}

impl SimilarityConfig {
    pub const COS: &'static str = "Cos";
    pub const QCOS: &'static str = "QCos";
    pub const COS_SUB_PM: &'static str = "Cos+Sub-PM";
    pub const QCOS_SUB_PM: &'static str = "QCos+Sub-PM";
    pub const QCOS_QSUB_PM: &'static str = "QCos+QSub-PM";
    pub const QCOS_QSUB_VPM: &'static str = "QCos+QSub-VPM";

    /// The six named variants compared in the ablation.
    pub const VARIANTS: [&'static str; 6] = [
        Self::COS,
        Self::QCOS,
        Self::COS_SUB_PM,
        Self::QCOS_SUB_PM,
        Self::QCOS_QSUB_PM,
        Self::QCOS_QSUB_VPM,
    ];

    /// Parses a variant name and attaches `lambda`.
    pub fn named(name: &str, lambda: f64) -> Result<Self> {
        let mut cfg: SimilarityConfig = name.parse()?;
        cfg.lambda_fusion = lambda;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_fusion >= 0.0) || !self.lambda_fusion.is_finite() {
            return Err(Error::Config(format!(
                "fusion weight lambda must be >= 0, got {}",
                self.lambda_fusion
            )));
        }
        Ok(())
    }

    pub fn name(&self) -> String {
        self.to_string()
    }
}

impl Default for SimilarityConfig {
    fn default() -> Self {
        SimilarityConfig {
            exemplar_kind: ExemplarKind::Quality,
            subspace_kind: Some(SubspaceKind::Quality),
            metric_kind: MetricKind::Vpm,
            lambda_fusion: 1.0,
        }
    }
}

impl fmt::Display for SimilarityConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let ex = match self.exemplar_kind {
            ExemplarKind::Plain => "Cos",
            ExemplarKind::Quality => "QCos",
        };
        f.write_str(ex)?;
        if let Some(kind) = self.subspace_kind {
            let sub = match kind {
                SubspaceKind::Plain => "Sub",
                SubspaceKind::Quality => "QSub",
            };
            let metric = match self.metric_kind {
                MetricKind::Pm => "PM",
                MetricKind::Vpm => "VPM",
            };
            write!(f, "+{sub}-{metric}")?;
        }
        Ok(())
    }
}

impl FromStr for SimilarityConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("unknown similarity variant '{s}'"));
        let (ex, rest) = match s.split_once('+') {
            Some((ex, rest)) => (ex, Some(rest)),
            None => (s, None),
        };
        let exemplar_kind = match ex {
            "Cos" => ExemplarKind::Plain,
            "QCos" => ExemplarKind::Quality,
            _ => return Err(bad()),
        };
        let (subspace_kind, metric_kind) = match rest {
            None => (None, MetricKind::Pm),
            Some(rest) => {
                let (sub, metric) = rest.split_once('-').ok_or_else(bad)?;
                let sub = match sub {
                    "Sub" => SubspaceKind::Plain,
                    "QSub" => SubspaceKind::Quality,
                    _ => return Err(bad()),
                };
                let metric = match metric {
                    "PM" => MetricKind::Pm,
                    "VPM" => MetricKind::Vpm,
                    _ => return Err(bad()),
                };
                (Some(sub), metric)
            }
        };
        Ok(SimilarityConfig {
            exemplar_kind,
            subspace_kind,
            metric_kind,
            lambda_fusion: 1.0,
        })
    }
}

/// Serialized as `{ variant = "QCos+QSub-VPM", lambda = 1.0 }`.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SimilarityConfigRepr {
    variant: String,
    #[serde(default = "one")]
    lambda: f64,
}

fn one() -> f64 {
    1.0
}

impl Serialize for SimilarityConfig {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        SimilarityConfigRepr {
            variant: self.name(),
            lambda: self.lambda_fusion,
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for SimilarityConfig {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let repr = SimilarityConfigRepr::deserialize(deserializer)?;
        SimilarityConfig::named(&repr.variant, repr.lambda).map_err(serde::de::Error::custom)
    }
}

/// Cosines of the principal angles, descending.
#[derive(Clone, Debug, PartialEq)]
pub struct PrincipalAngles<T> {
    pub cosines: Vec<T>,
}

impl<T> PrincipalAngles<T> {
    pub fn count(&self) -> usize {
        self.cosines.len()
    }
}

/// Everything needed to match a template under a given [`SimilarityConfig`].
#[derive(Clone, Debug, PartialEq)]
pub struct TemplateRepresentation<T> {
    pub exemplar: Exemplar<T>,
    pub subspace: Option<Subspace<T>>,
}

impl<T: Scalar> TemplateRepresentation<T> {
    pub fn new(exemplar: Exemplar<T>, subspace: Option<Subspace<T>>) -> Result<Self> {
        if let Some(s) = &subspace {
            if s.ambient_dim() != exemplar.dim() {
                return Err(Error::validation(format!(
                    "exemplar dimension {} differs from subspace dimension {}",
                    exemplar.dim(),
                    s.ambient_dim()
                )));
            }
        }
        Ok(TemplateRepresentation { exemplar, subspace })
    }
}

/// Learns the representation `cfg` asks for.
pub fn represent<T: Scalar>(
    tpl: &Template<T>,
    cfg: &SimilarityConfig,
    agg: &AggregateConfig,
) -> Result<TemplateRepresentation<T>> {
    let exemplar = match cfg.exemplar_kind {
        ExemplarKind::Plain => exemplar_mean(tpl),
        ExemplarKind::Quality => exemplar_quality(tpl, &agg.quality)?,
    };
    let subspace = match cfg.subspace_kind {
        None => None,
        Some(SubspaceKind::Plain) => Some(learn_subspace_with(tpl, agg)?),
        Some(SubspaceKind::Quality) => Some(learn_subspace_quality(tpl, agg)?),
    };
    TemplateRepresentation::new(exemplar, subspace)
}

/// Cosine similarity of two exemplars.
pub fn cosine<T: Scalar>(a: &Exemplar<T>, b: &Exemplar<T>) -> Result<T> {
    if a.dim() != b.dim() {
        return Err(Error::validation(format!(
            "exemplar dimensions differ: {} vs {}",
            a.dim(),
            b.dim()
        )));
    }
    if a.is_degenerate() || b.is_degenerate() {
        return Err(Error::DegenerateTemplate("zero-norm exemplar".into()));
    }
    let c = dot(&a.vector, &b.vector) / (norm(&a.vector) * norm(&b.vector));
    Ok(c.max(-T::one()).min(T::one()))
}

fn check_ambient<T: Scalar>(a: &Subspace<T>, b: &Subspace<T>) -> Result<()> {
    if a.ambient_dim() != b.ambient_dim() {
        return Err(Error::validation(format!(
            "subspaces live in different dimensions: {} vs {}",
            a.ambient_dim(),
            b.ambient_dim()
        )));
    }
    Ok(())
}

fn cross_metric<T: Scalar>(p1: &Matrix<T>, p2: &Matrix<T>, r: usize) -> Result<T> {
    let cross = p1.tr_matmul(p2)?;
    let sq = cross.frobenius_norm().powi(2);
    Ok((sq / T::of(r as f64)).sqrt())
}

/// `√((1/r)·‖P₁ᵀP₂‖_F²)` with `r = min(d₁, d₂)`.
pub fn projection_metric<T: Scalar>(a: &Subspace<T>, b: &Subspace<T>) -> Result<T> {
    check_ambient(a, b)?;
    cross_metric(a.basis(), b.basis(), a.dim().min(b.dim()))
}

/// Singular values of `P₁ᵀP₂` via the eigenvalues of its smaller Gram matrix.
pub fn principal_angle_cosines<T: Scalar>(a: &Subspace<T>, b: &Subspace<T>) -> Result<PrincipalAngles<T>> {
    check_ambient(a, b)?;
    let cross = a.basis().tr_matmul(b.basis())?;
    let gram = if cross.rows() <= cross.cols() {
        cross.matmul(&cross.transpose())?
    } else {
        cross.tr_matmul(&cross)?
    };
    let eig = symmetric_eigen(&gram)?;
    let cosines = eig
        .values
        .into_iter()
        .map(|v| v.max(T::zero()).sqrt())
        .collect();
    Ok(PrincipalAngles { cosines })
}

/// Basis scaled by normalized non-negative log-eigenvalues,
/// `P·diag(w)/Σw` with `w_k = max(0, ln λ_k)`. Falls back to `P/d` when every
/// weight clamps to zero.
pub fn variance_weighted_basis<T: Scalar>(s: &Subspace<T>) -> Matrix<T> {
    let weights: Vec<T> = s
        .spectrum()
        .iter()
        .map(|&lambda| {
            if lambda > T::zero() {
                lambda.ln().max(T::zero())
            } else {
                T::zero()
            }
        })
        .collect();
    let total: T = weights.iter().copied().sum();
    if total > T::zero() {
        let scaled: Vec<T> = weights.iter().map(|&w| w / total).collect();
        s.basis().scale_columns(&scaled)
    } else {
        s.basis().scale(T::one() / T::of(s.dim() as f64))
    }
}

/// Variance-aware projection metric `√((1/r)·‖P̃₁ᵀP̃₂‖_F²)`.
pub fn vpm<T: Scalar>(a: &Subspace<T>, b: &Subspace<T>) -> Result<T> {
    check_ambient(a, b)?;
    cross_metric(
        &variance_weighted_basis(a),
        &variance_weighted_basis(b),
        a.dim().min(b.dim()),
    )
}

/// Exemplar cosine plus `λ` times the subspace metric.
pub fn template_similarity<T: Scalar>(
    a: &TemplateRepresentation<T>,
    b: &TemplateRepresentation<T>,
    cfg: &SimilarityConfig,
) -> Result<T> {
    for rep in [a, b] {
        if rep.exemplar.kind != cfg.exemplar_kind {
            return Err(Error::validation(format!(
                "representation carries a {:?} exemplar but {} needs {:?}",
                rep.exemplar.kind, cfg, cfg.exemplar_kind
            )));
        }
    }
    let cos = cosine(&a.exemplar, &b.exemplar)?;
    let Some(kind) = cfg.subspace_kind else {
        return Ok(cos);
    };
    let (sa, sb) = match (&a.subspace, &b.subspace) {
        (Some(sa), Some(sb)) if sa.kind() == kind && sb.kind() == kind => (sa, sb),
        _ => {
            return Err(Error::validation(format!(
                "{cfg} needs {kind:?} subspaces on both templates"
            )))
        }
    };
    let lambda = T::of(cfg.lambda_fusion);
    if lambda == T::zero() {
        return Ok(cos);
    }
    let metric = match cfg.metric_kind {
        MetricKind::Pm => projection_metric(sa, sb)?,
        MetricKind::Vpm => vpm(sa, sb)?,
    };
    Ok(cos + lambda * metric)
}

/// Probe-by-gallery similarity matrix. Rows are computed in parallel; the
/// result does not depend on the worker count.
pub fn score_matrix<T: Scalar>(
    probes: &[TemplateRepresentation<T>],
    gallery: &[TemplateRepresentation<T>],
    cfg: &SimilarityConfig,
) -> Result<Matrix<T>> {
    let rows = probes
        .par_iter()
        .map(|p| {
            gallery
                .iter()
                .map(|g| template_similarity(p, g, cfg))
                .collect::<Result<Vec<T>>>()
        })
        .collect::<Result<Vec<Vec<T>>>>()?;
    Matrix::new(probes.len(), gallery.len(), rows.concat())
}

/// Score-level fusion across feature sources: element-wise arithmetic mean.
pub fn fuse_network_scores<T: Scalar>(matrices: &[Matrix<T>]) -> Result<Matrix<T>> {
    let first = matrices
        .first()
        .ok_or_else(|| Error::validation("score fusion needs at least one matrix"))?;
    let mut acc = first.clone();
    for m in &matrices[1..] {
        acc = acc.add(m)?;
    }
    Ok(acc.scale(T::one() / T::of(matrices.len() as f64)))
}
