//! Score matrices, reports and representations on disk.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{EvalReport, ScoreMatrix};
use crate::matrix::Matrix;
use crate::similarity::TemplateRepresentation;
use crate::types::IdentityId;

/// Score matrix of one gallery split.
#[derive(Clone, Debug, PartialEq)]
pub struct SplitScores {
    pub split: String,
    pub gallery_ids: Vec<String>,
    pub matrix: ScoreMatrix,
}

#[derive(Debug, Serialize, Deserialize)]
struct ScoreRow {
    split: String,
    probe_id: String,
    probe_label: Option<IdentityId>,
    gallery_id: String,
    gallery_label: IdentityId,
    score: f64,
}

/// Long-format CSV: one row per `(split, probe, gallery)` triple.
pub fn write_scores_csv(path: &Path, splits: &[SplitScores]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for s in splits {
        let m = &s.matrix;
        for i in 0..m.probes() {
            for (j, gid) in s.gallery_ids.iter().enumerate() {
                w.serialize(ScoreRow {
                    split: s.split.clone(),
                    probe_id: m.probe_ids[i].clone(),
                    probe_label: m.probe_labels[i],
                    gallery_id: gid.clone(),
                    gallery_label: m.gallery_labels[j],
                    score: m.scores[(i, j)],
                })
                .map_err(|e| csv_error(path, e))?;
            }
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(1, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::parse(path, line, format!("{other:?}")),
    }
}

#[derive(Default)]
struct SplitBuilder {
    probes: Vec<(String, Option<IdentityId>)>,
    gallery: Vec<(String, IdentityId)>,
    cells: HashMap<(usize, usize), f64>,
}

fn slot<K: PartialEq + Clone, L: Copy>(list: &mut Vec<(K, L)>, key: &K, label: L) -> usize {
    match list.iter().position(|(k, _)| k == key) {
        Some(i) => i,
        None => {
            list.push((key.clone(), label));
            list.len() - 1
        }
    }
}

/// Reads a file written by [`write_scores_csv`]; splits, probes and gallery
/// entries keep their first-appearance order.
pub fn read_scores_csv(path: &Path) -> Result<Vec<SplitScores>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let mut order: Vec<String> = Vec::new();
    let mut splits: HashMap<String, SplitBuilder> = HashMap::new();
    for (n, row) in r.deserialize::<ScoreRow>().enumerate() {
        let row = row.map_err(|e| csv_error(path, e))?;
        let line = n + 2;
        if !row.score.is_finite() {
            return Err(Error::parse(path, line, "score is not finite"));
        }
        if !splits.contains_key(&row.split) {
            order.push(row.split.clone());
        }
        let b = splits.entry(row.split.clone()).or_default();
        let i = slot(&mut b.probes, &row.probe_id, row.probe_label);
        let j = slot(&mut b.gallery, &row.gallery_id, row.gallery_label);
        if b.cells.insert((i, j), row.score).is_some() {
            return Err(Error::parse(path, line, "duplicate probe/gallery pair"));
        }
    }
    order
        .into_iter()
        .map(|name| {
            let b = splits.remove(&name).expect("split recorded");
            let (p, g) = (b.probes.len(), b.gallery.len());
            if b.cells.len() != p * g {
                return Err(Error::parse(path, 1, format!("split {name} is missing score entries")));
            }
            let scores = Matrix::from_fn(p, g, |i, j| b.cells[&(i, j)]);
            let matrix = ScoreMatrix::new(
                scores,
                b.probes.iter().map(|x| x.0.clone()).collect(),
                b.probes.iter().map(|x| x.1).collect(),
                b.gallery.iter().map(|x| x.1).collect(),
            )?;
            Ok(SplitScores {
                split: name,
                gallery_ids: b.gallery.into_iter().map(|x| x.0).collect(),
                matrix,
            })
        })
        .collect()
}

pub fn write_report_csv(path: &Path, report: &EvalReport) -> Result<()> {
    fs::write(path, report.to_csv()).map_err(|e| Error::io(path, e))
}

/// Serialized template representation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepresentationRecord {
    pub template_id: String,
    pub network: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label: Option<IdentityId>,
    pub exemplar: Vec<f64>,
    /// Basis vectors, one inner list per column.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub basis: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spectrum: Option<Vec<f64>>,
}

impl RepresentationRecord {
    pub fn new(
        template_id: &str,
        network: usize,
        label: Option<IdentityId>,
        rep: &TemplateRepresentation<f64>,
    ) -> Self {
        RepresentationRecord {
            template_id: template_id.to_string(),
            network,
            label,
            exemplar: rep.exemplar.vector.clone(),
            basis: rep
                .subspace
                .as_ref()
                .map(|s| (0..s.dim()).map(|j| s.basis().column(j)).collect()),
            spectrum: rep.subspace.as_ref().map(|s| s.spectrum().to_vec()),
        }
    }
}
