//! Open-set 1:N identification metrics.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::types::{iou, BoundingBox, Detection, IdentityId};

/// Probe-by-gallery similarity scores with the identities needed to score them.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreMatrix {
    pub scores: Matrix<f64>,
    pub probe_ids: Vec<String>,
    /// Resolved probe identity; `None` when no detection matched the truth.
    pub probe_labels: Vec<Option<IdentityId>>,
    pub gallery_labels: Vec<IdentityId>,
}

impl ScoreMatrix {
    pub fn new(
        scores: Matrix<f64>,
        probe_ids: Vec<String>,
        probe_labels: Vec<Option<IdentityId>>,
        gallery_labels: Vec<IdentityId>,
    ) -> Result<Self> {
        if scores.rows() != probe_labels.len() || scores.rows() != probe_ids.len() {
            return Err(Error::validation("score matrix rows do not match the probe list"));
        }
        if scores.cols() != gallery_labels.len() {
            return Err(Error::validation("score matrix columns do not match the gallery list"));
        }
        if !scores.is_finite() {
            return Err(Error::validation("score matrix has non-finite entries"));
        }
        let mut seen = HashSet::new();
        if let Some(dup) = gallery_labels.iter().find(|l| !seen.insert(**l)) {
            return Err(Error::validation(format!("gallery label {dup} appears twice in one split")));
        }
        Ok(ScoreMatrix {
            scores,
            probe_ids,
            probe_labels,
            gallery_labels,
        })
    }

    pub fn probes(&self) -> usize {
        self.scores.rows()
    }

    /// Gallery column holding the probe's mate, if it is enrolled.
    pub fn mate(&self, probe: usize) -> Option<usize> {
        let label = self.probe_labels[probe]?;
        self.gallery_labels.iter().position(|&g| g == label)
    }

    /// Highest-scoring gallery column, ties to the lowest index.
    pub fn top1(&self, probe: usize) -> Option<(usize, f64)> {
        self.scores
            .row(probe)
            .iter()
            .copied()
            .enumerate()
            .fold(None, |best, (j, s)| match best {
                Some((_, b)) if b >= s => best,
                _ => Some((j, s)),
            })
    }

    /// Probes with a mate in the gallery, and probes without one.
    pub fn partition(&self) -> (Vec<usize>, Vec<usize>) {
        (0..self.probes()).partition(|&i| self.mate(i).is_some())
    }
}

/// Ground-truth face box.
#[derive(Clone, Debug, PartialEq)]
pub struct TruthBox {
    pub video_id: String,
    pub frame: u32,
    pub bbox: BoundingBox<f64>,
    pub identity: IdentityId,
}

/// Truth boxes grouped by `(video, frame)`.
#[derive(Clone, Debug, Default)]
pub struct TruthIndex {
    by_frame: HashMap<(String, u32), Vec<(BoundingBox<f64>, IdentityId)>>,
}

impl TruthIndex {
    pub fn new(boxes: impl IntoIterator<Item = TruthBox>) -> Self {
        let mut by_frame: HashMap<_, Vec<_>> = HashMap::new();
        for b in boxes {
            by_frame.entry((b.video_id, b.frame)).or_default().push((b.bbox, b.identity));
        }
        TruthIndex { by_frame }
    }

    pub fn is_empty(&self) -> bool {
        self.by_frame.is_empty()
    }

    /// Identity of the truth box overlapping `det` the most, if that overlap
    /// reaches `min_iou`.
    pub fn match_detection(&self, det: &Detection, min_iou: f64) -> Option<IdentityId> {
        let boxes = self.by_frame.get(&(det.video_id.clone(), det.frame))?;
        let mut best: Option<(f64, IdentityId)> = None;
        for (b, id) in boxes {
            let o = iou(b, &det.bbox);
            if o >= min_iou && best.is_none_or(|(bo, _)| o > bo) {
                best = Some((o, *id));
            }
        }
        best.map(|(_, id)| id)
    }
}

/// Most frequent label, ties to the one seen first. `None` entries abstain.
pub fn majority_label(labels: impl IntoIterator<Item = Option<IdentityId>>) -> Option<IdentityId> {
    let mut votes: Vec<(IdentityId, usize)> = Vec::new();
    for l in labels.into_iter().flatten() {
        match votes.iter_mut().find(|(id, _)| *id == l) {
            Some(v) => v.1 += 1,
            None => votes.push((l, 1)),
        }
    }
    votes
        .into_iter()
        .fold(None, |best: Option<(IdentityId, usize)>, v| match best {
            Some(b) if b.1 >= v.1 => Some(b),
            _ => Some(v),
        })
        .map(|(id, _)| id)
}

/// Majority truth identity over a template's detections.
pub fn resolve_template_identity(detections: &[&Detection], truth: &TruthIndex, min_iou: f64) -> Option<IdentityId> {
    majority_label(detections.iter().map(|d| truth.match_detection(d, min_iou)))
}

/// Rank of the mate among the gallery (1-based), ties to the lower column.
fn mate_rank(m: &ScoreMatrix, probe: usize, mate: usize) -> usize {
    let row = m.scores.row(probe);
    let s = row[mate];
    1 + row
        .iter()
        .enumerate()
        .filter(|&(j, &v)| v > s || (v == s && j < mate))
        .count()
}

/// Fraction of enrolled probes whose mate ranks within the top `k`.
/// Returns zeros when no probe is enrolled.
pub fn rank_k_accuracy(m: &ScoreMatrix, ks: &[usize]) -> Vec<(usize, f64)> {
    let (known, _) = m.partition();
    let ranks: Vec<usize> = known
        .iter()
        .map(|&i| mate_rank(m, i, m.mate(i).expect("known probe")))
        .collect();
    ks.iter()
        .map(|&k| {
            let acc = if ranks.is_empty() {
                0.0
            } else {
                ranks.iter().filter(|&&r| r <= k).count() as f64 / ranks.len() as f64
            };
            (k, acc)
        })
        .collect()
}

/// One threshold of the open-set ROC.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpir: f64,
    pub tpir: f64,
}

/// ROC over `+∞` and every distinct probe max-score, by decreasing threshold.
/// A probe is accepted when its max score is `≥` the threshold.
pub fn open_set_roc(m: &ScoreMatrix) -> Result<Vec<RocPoint>> {
    let (known, unknown) = m.partition();
    if unknown.is_empty() {
        return Err(Error::validation("FPIR is undefined without unknown probes"));
    }
    let max_of = |i: usize| m.top1(i).map_or(f64::NEG_INFINITY, |(_, s)| s);
    let mut unknown_max: Vec<f64> = unknown.iter().map(|&i| max_of(i)).collect();
    let mut hit_max: Vec<f64> = known
        .iter()
        .filter(|&&i| m.top1(i).map(|(j, _)| j) == m.mate(i))
        .map(|&i| max_of(i))
        .collect();
    let desc = |a: &f64, b: &f64| b.partial_cmp(a).expect("finite scores");
    unknown_max.sort_by(desc);
    hit_max.sort_by(desc);

    let mut thresholds: Vec<f64> = unknown
        .iter()
        .chain(&known)
        .map(|&i| max_of(i))
        .collect();
    thresholds.sort_by(desc);
    thresholds.dedup();

    let n_u = unknown.len() as f64;
    let n_k = known.len().max(1) as f64;
    let mut points = vec![RocPoint {
        threshold: f64::INFINITY,
        fpir: 0.0,
        tpir: 0.0,
    }];
    let (mut iu, mut ik) = (0, 0);
    for t in thresholds {
        while iu < unknown_max.len() && unknown_max[iu] >= t {
            iu += 1;
        }
        while ik < hit_max.len() && hit_max[ik] >= t {
            ik += 1;
        }
        points.push(RocPoint {
            threshold: t,
            fpir: iu as f64 / n_u,
            tpir: ik as f64 / n_k,
        });
    }
    Ok(points)
}

/// TPIR at the most permissive threshold whose FPIR stays within `target`,
/// linearly interpolated in FPIR towards the next threshold.
pub fn interpolate_tpir(roc: &[RocPoint], target: f64) -> f64 {
    let last = roc.iter().rposition(|p| p.fpir <= target).unwrap_or(0);
    let a = roc[last];
    match roc.get(last + 1) {
        Some(b) if b.fpir > a.fpir => a.tpir + (target - a.fpir) / (b.fpir - a.fpir) * (b.tpir - a.tpir),
        _ => a.tpir,
    }
}

pub fn tpir_at_fpir(m: &ScoreMatrix, targets: &[f64]) -> Result<Vec<(f64, f64)>> {
    let roc = open_set_roc(m)?;
    Ok(targets.iter().map(|&t| (t, interpolate_tpir(&roc, t))).collect())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct EvalCounts {
    pub probes: usize,
    pub known: usize,
    pub unknown: usize,
    pub gallery: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub rank_k: Vec<(usize, f64)>,
    pub tpir_at_fpir: Vec<(f64, f64)>,
    pub counts: EvalCounts,
}

/// Rank-K and, when unknown probes exist, TPIR@FPIR.
pub fn evaluate(m: &ScoreMatrix, ks: &[usize], fpir_targets: &[f64]) -> Result<EvalReport> {
    let (known, unknown) = m.partition();
    if known.is_empty() {
        log::warn!("no probe has a mate in the gallery; rank-K is reported as 0");
    }
    let tpir = if unknown.is_empty() || fpir_targets.is_empty() {
        if !fpir_targets.is_empty() {
            log::warn!("no unknown probes; TPIR@FPIR is omitted");
        }
        Vec::new()
    } else {
        tpir_at_fpir(m, fpir_targets)?
    };
    Ok(EvalReport {
        rank_k: rank_k_accuracy(m, ks),
        tpir_at_fpir: tpir,
        counts: EvalCounts {
            probes: m.probes(),
            known: known.len(),
            unknown: unknown.len(),
            gallery: m.gallery_labels.len(),
        },
    })
}

/// Entry-wise mean over splits; counts are summed. Rank-K averages the splits
/// with enrolled probes and TPIR the splits that report it.
pub fn average_over_splits(reports: &[EvalReport]) -> Result<EvalReport> {
    let first = reports
        .first()
        .ok_or_else(|| Error::validation("no reports to average"))?;
    let ks: Vec<usize> = first.rank_k.iter().map(|p| p.0).collect();
    if reports.iter().any(|r| r.rank_k.iter().map(|p| p.0).ne(ks.iter().copied())) {
        return Err(Error::validation("reports use different K grids"));
    }
    let with_tpir: Vec<&EvalReport> = reports.iter().filter(|r| !r.tpir_at_fpir.is_empty()).collect();
    let fpirs: Vec<u64> = with_tpir
        .first()
        .map(|r| r.tpir_at_fpir.iter().map(|p| p.0.to_bits()).collect())
        .unwrap_or_default();
    if with_tpir.iter().any(|r| r.tpir_at_fpir.iter().map(|p| p.0.to_bits()).ne(fpirs.iter().copied())) {
        return Err(Error::validation("reports use different FPIR grids"));
    }
    let mut with_known: Vec<&EvalReport> = reports.iter().filter(|r| r.counts.known > 0).collect();
    if with_known.is_empty() {
        with_known = reports.iter().collect();
    }
    let mean = |set: &[&EvalReport], get: &dyn Fn(&EvalReport) -> f64| {
        set.iter().map(|r| get(r)).sum::<f64>() / set.len() as f64
    };
    let rank_k = ks
        .iter()
        .enumerate()
        .map(|(i, &k)| (k, mean(&with_known, &|r| r.rank_k[i].1)))
        .collect();
    let tpir_at_fpir = fpirs
        .iter()
        .enumerate()
        .map(|(i, &f)| (f64::from_bits(f), mean(&with_tpir, &|r| r.tpir_at_fpir[i].1)))
        .collect();
    let counts = reports.iter().fold(EvalCounts::default(), |acc, r| EvalCounts {
        probes: acc.probes + r.counts.probes,
        known: acc.known + r.counts.known,
        unknown: acc.unknown + r.counts.unknown,
        gallery: acc.gallery + r.counts.gallery,
    });
    Ok(EvalReport {
        rank_k,
        tpir_at_fpir,
        counts,
    })
}

impl EvalReport {
    /// `(metric, value)` rows in report order.
    pub fn rows(&self) -> Vec<(String, String)> {
        let mut rows: Vec<(String, String)> = self
            .rank_k
            .iter()
            .map(|(k, v)| (format!("rank_{k}"), format!("{v:.6}")))
            .collect();
        rows.extend(
            self.tpir_at_fpir
                .iter()
                .map(|(f, v)| (format!("tpir@fpir={f}"), format!("{v:.6}"))),
        );
        rows.push(("probes".into(), self.counts.probes.to_string()));
        rows.push(("known_probes".into(), self.counts.known.to_string()));
        rows.push(("unknown_probes".into(), self.counts.unknown.to_string()));
        rows.push(("gallery".into(), self.counts.gallery.to_string()));
        rows
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,value\n");
        for (k, v) in self.rows() {
            out.push_str(&format!("{k},{v}\n"));
        }
        out
    }

    pub fn rank(&self, k: usize) -> Option<f64> {
        self.rank_k.iter().find(|p| p.0 == k).map(|p| p.1)
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows = self.rows();
        let width = rows.iter().map(|r| r.0.len()).max().unwrap_or(6).max(6);
        writeln!(f, "{:<width$}  value", "metric")?;
        for (k, v) in rows {
            writeln!(f, "{k:<width$}  {v}")?;
        }
        Ok(())
    }
}

/// One-sided sign test for "differences are positive". Zero differences are
/// dropped; returns `P(X ≥ n₊)` for `X ~ Binomial(n, ½)`.
pub fn sign_test_one_sided(diffs: &[f64]) -> f64 {
    let pos = diffs.iter().filter(|&&d| d > 0.0).count();
    let n = diffs.iter().filter(|&&d| d != 0.0).count();
    if n == 0 {
        return 1.0;
    }
    let mut coeffs = BTreeMap::new();
    let mut c = 1.0f64;
    for k in 0..=n {
        coeffs.insert(k, c);
        c = c * (n - k) as f64 / (k + 1) as f64;
    }
    let tail: f64 = (pos..=n).map(|k| coeffs[&k]).sum();
    tail / 2f64.powi(n as i32)
}
