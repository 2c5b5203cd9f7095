//! End-to-end runs: probe formation, representation, matching and evaluation.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use rayon::prelude::*;

use crate::aggregate::AggregateConfig;
use crate::associate::{tfa_run, ConstantVelocityPredictor, TfaConfig};
use crate::config::{EvalConfig, PipelineConfig};
use crate::dataset::{Dataset, TemplateDef};
use crate::error::{Error, Result};
use crate::eval::{average_over_splits, evaluate, majority_label, resolve_template_identity, EvalReport, ScoreMatrix, TruthIndex};
use crate::io::{ingest, write_jsonl, write_report_csv, write_scores_csv, Manifest, SplitScores};
use crate::similarity::{fuse_network_scores, represent, score_matrix, SimilarityConfig, TemplateRepresentation};
use crate::track::{filter_tracklets, sort_track, SortConfig};
use crate::types::{BoundingBox, Detection, IdentityId, Template};

/// Environment variable holding the worker count.
pub const WORKERS_ENV: &str = "FACESUB_WORKERS";

fn label_of(dets: &[&Detection], truth: &TruthIndex, truth_iou: f64) -> Option<IdentityId> {
    if truth.is_empty() {
        majority_label(dets.iter().map(|d| d.truth_id))
    } else {
        resolve_template_identity(dets, truth, truth_iou)
    }
}

fn def_from(ds: &Dataset, id: String, video: &str, dets: &[&Detection], label: Option<IdentityId>) -> TemplateDef {
    TemplateDef {
        template_id: id,
        split_id: None,
        video_id: Some(video.to_string()),
        label,
        embedding_ids: dets.iter().map(|d| ds.embeddings.ids[d.embedding].clone()).collect(),
        scores: dets.iter().map(|d| d.score).collect(),
    }
}

/// Single-shot probes: SORT tracklets of every video, optionally filtered.
pub fn track_probes(ds: &Dataset, cfg: &SortConfig, filtering: bool, truth_iou: f64) -> Result<Vec<TemplateDef>> {
    let truth = TruthIndex::new(ds.truth.iter().cloned());
    let per_video = ds
        .videos
        .par_iter()
        .map(|v| {
            let tracklets = filter_tracklets(sort_track(&v.detections, cfg)?, cfg, filtering);
            Ok(tracklets
                .iter()
                .map(|t| {
                    let dets: Vec<&Detection> = t.detections.iter().collect();
                    let label = label_of(&dets, &truth, truth_iou);
                    def_from(ds, format!("{}_t{:04}", v.id, t.id), &v.id, &dets, label)
                })
                .collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(per_video.concat())
}

/// Multi-shot probes: one associated template per anchor.
pub fn associate_probes(ds: &Dataset, cfg: &TfaConfig, truth_iou: f64) -> Result<Vec<TemplateDef>> {
    if ds.embeddings.networks.is_empty() {
        return Err(Error::validation("dataset has no embeddings"));
    }
    let truth = TruthIndex::new(ds.truth.iter().cloned());
    let videos: HashMap<&str, usize> = ds.videos.iter().enumerate().map(|(i, v)| (v.id.as_str(), i)).collect();
    let background: Vec<Vec<f64>> = ds.background.iter().map(|&r| ds.embeddings.vector(0, r)).collect();
    ds.anchors
        .par_iter()
        .map(|a| {
            let video = &ds.videos[*videos
                .get(a.video_id.as_str())
                .ok_or_else(|| Error::validation(format!("anchor {} names unknown video {}", a.anchor_id, a.video_id)))?];
            let b = BoundingBox::new(a.x, a.y, a.w, a.h)?;
            let anchor = video.locate(a.frame, &b).ok_or_else(|| {
                Error::validation(format!("anchor {} overlaps no detection in frame {}", a.anchor_id, a.frame))
            })?;
            let features: Vec<Vec<f64>> = video.detections.iter().map(|d| ds.embeddings.vector(0, d.embedding)).collect();
            let mut predictor = ConstantVelocityPredictor::new(cfg.kalman);
            let (_, result) = tfa_run(video, &features, anchor, &background, cfg, &mut predictor)?;
            let dets: Vec<&Detection> = result.members.iter().map(|&i| &video.detections[i]).collect();
            let anchor_det = &video.detections[anchor];
            let label = a.truth_id.or_else(|| label_of(&[anchor_det], &truth, truth_iou));
            Ok(def_from(ds, a.anchor_id.clone(), &video.id, &dets, label))
        })
        .collect()
}

/// Probe templates appropriate for the dataset's protocol.
pub fn build_probes(ds: &Dataset, cfg: &PipelineConfig, filtering: bool) -> Result<Vec<TemplateDef>> {
    if ds.protocol.uses_anchors() {
        associate_probes(ds, &cfg.tfa, cfg.eval.truth_iou)
    } else {
        track_probes(ds, &cfg.sort, filtering, cfg.eval.truth_iou)
    }
}

/// Materializes template definitions with the embeddings of one network.
pub fn templates_for(ds: &Dataset, defs: &[TemplateDef], network: usize) -> Result<Vec<Template<f64>>> {
    let index = ds.embeddings.index();
    defs.iter()
        .map(|d| {
            let vectors = d
                .embedding_ids
                .iter()
                .map(|id| {
                    index
                        .get(id.as_str())
                        .map(|&r| ds.embeddings.vector(network, r))
                        .ok_or_else(|| Error::validation(format!("template {} uses unknown embedding {id}", d.template_id)))
                })
                .collect::<Result<Vec<_>>>()?;
            Template::from_vectors(vectors, d.scores.clone(), d.label)
        })
        .collect()
}

pub fn represent_all(
    templates: &[Template<f64>],
    sim: &SimilarityConfig,
    agg: &AggregateConfig,
) -> Result<Vec<TemplateRepresentation<f64>>> {
    templates.par_iter().map(|t| represent(t, sim, agg)).collect()
}

/// Gallery templates of `split`; templates without a split belong to `"all"`.
pub fn gallery_split<'a>(ds: &'a Dataset, split: &str) -> Vec<&'a TemplateDef> {
    ds.gallery
        .iter()
        .filter(|t| t.split_id.as_deref().unwrap_or("all") == split)
        .collect()
}

/// Per-split score matrices, fused across networks by the mean score.
pub fn match_splits(
    ds: &Dataset,
    probes: &[TemplateDef],
    sim: &SimilarityConfig,
    agg: &AggregateConfig,
) -> Result<Vec<SplitScores>> {
    let networks = ds.embeddings.networks.len();
    let probe_reps = (0..networks)
        .map(|n| represent_all(&templates_for(ds, probes, n)?, sim, agg))
        .collect::<Result<Vec<_>>>()?;
    ds.splits()
        .into_iter()
        .map(|split| {
            let defs: Vec<TemplateDef> = gallery_split(ds, &split).into_iter().cloned().collect();
            let mut labels = Vec::with_capacity(defs.len());
            for d in &defs {
                labels.push(d.label.ok_or_else(|| {
                    Error::validation(format!("gallery template {} has no label", d.template_id))
                })?);
            }
            let per_net = (0..networks)
                .map(|n| {
                    let reps = represent_all(&templates_for(ds, &defs, n)?, sim, agg)?;
                    score_matrix(&probe_reps[n], &reps, sim)
                })
                .collect::<Result<Vec<_>>>()?;
            let matrix = ScoreMatrix::new(
                fuse_network_scores(&per_net)?,
                probes.iter().map(|p| p.template_id.clone()).collect(),
                probes.iter().map(|p| p.label).collect(),
                labels,
            )?;
            Ok(SplitScores {
                split,
                gallery_ids: defs.iter().map(|d| d.template_id.clone()).collect(),
                matrix,
            })
        })
        .collect()
}

/// Reports per split and their average.
pub fn evaluate_splits(splits: &[SplitScores], cfg: &EvalConfig) -> Result<(Vec<(String, EvalReport)>, EvalReport)> {
    let reports = splits
        .iter()
        .map(|s| Ok((s.split.clone(), evaluate(&s.matrix, &cfg.rank_ks, &cfg.fpir_targets)?)))
        .collect::<Result<Vec<_>>>()?;
    let all: Vec<EvalReport> = reports.iter().map(|r| r.1.clone()).collect();
    let average = average_over_splits(&all)?;
    Ok((reports, average))
}

#[derive(Clone, Debug)]
pub struct PipelineOutput {
    pub config: PipelineConfig,
    pub probes: Vec<TemplateDef>,
    pub splits: Vec<SplitScores>,
    pub reports: Vec<(String, EvalReport)>,
    pub average: EvalReport,
}

/// Fills manifest-derived options into the config so the echo is explicit.
pub fn resolve_config(cfg: &PipelineConfig, manifest: &Manifest) -> PipelineConfig {
    let mut out = cfg.clone();
    out.filtering = Some(cfg.filtering.unwrap_or(manifest.options.filtering));
    out.score_floor = Some(cfg.score_floor.unwrap_or(manifest.options.score_floor));
    if let Ok(abs) = fs::canonicalize(&cfg.manifest) {
        out.manifest = abs;
    }
    out
}

/// Worker count from the config, then the environment, then rayon's default.
pub fn worker_count(cfg: &PipelineConfig) -> Result<Option<usize>> {
    if cfg.workers.is_some() {
        return Ok(cfg.workers);
    }
    match std::env::var(WORKERS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .map(Some)
            .ok_or_else(|| Error::Config(format!("{WORKERS_ENV} must be a positive integer, got {v:?}"))),
        Err(_) => Ok(None),
    }
}

/// Runs `f` in a pool sized by [`worker_count`].
pub fn with_workers<R: Send>(workers: Option<usize>, f: impl FnOnce() -> R + Send) -> Result<R> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(f))
}

/// Loads the manifest, runs every stage and writes all artifacts into
/// `cfg.out_dir`.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineOutput> {
    cfg.validate()?;
    let mut manifest = Manifest::load(&cfg.manifest)?;
    let resolved = resolve_config(cfg, &manifest);
    manifest.options.score_floor = resolved.score_floor.expect("resolved");
    let workers = worker_count(&resolved)?;
    let out = with_workers(workers, || -> Result<PipelineOutput> {
        let ds = ingest(&manifest)?;
        let probes = build_probes(&ds, &resolved, resolved.filtering.expect("resolved"))?;
        log::info!("{} probe templates", probes.len());
        let splits = match_splits(&ds, &probes, &resolved.similarity, &resolved.aggregate)?;
        let (reports, average) = evaluate_splits(&splits, &resolved.eval)?;
        Ok(PipelineOutput {
            config: resolved.clone(),
            probes,
            splits,
            reports,
            average,
        })
    })??;
    write_outputs(&out, &cfg.out_dir)?;
    Ok(out)
}

/// Writes the resolved config, probe templates, score matrices and reports.
pub fn write_outputs(out: &PipelineOutput, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut echo = out.config.clone();
    echo.out_dir = fs::canonicalize(dir).unwrap_or_else(|_| dir.to_path_buf());
    let cfg_path = dir.join("resolved_config.toml");
    fs::write(&cfg_path, echo.to_toml()?).map_err(|e| Error::io(&cfg_path, e))?;
    write_jsonl(&dir.join("probes.jsonl"), &out.probes)?;
    write_scores_csv(&dir.join("scores.csv"), &out.splits)?;
    for (split, report) in &out.reports {
        write_report_csv(&dir.join(format!("report_{split}.csv")), report)?;
    }
    write_report_csv(&dir.join("report.csv"), &out.average)
}
