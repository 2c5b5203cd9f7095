//! Dataset manifests: loading every referenced file into a [`Dataset`] and
//! writing a dataset back out.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::fte::{read_fte, write_fte};
use super::jsonl::{read_jsonl, write_jsonl, CutRecord, DetectionLine, DetectionRecord, TruthRecord};
use crate::associate::Video;
use crate::dataset::{AnchorDef, Dataset, EmbeddingTable, Protocol, TemplateDef};
use crate::error::{Error, Result};
use crate::eval::TruthBox;
use crate::quality::clip_score;
use crate::types::{BoundingBox, Detection};

/// Minimum detection score kept at ingestion unless overridden.
pub const DEFAULT_SCORE_FLOOR: f64 = 0.4771;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestOptions {
    /// Whether short or low-confidence tracklets are discarded.
    #[serde(default = "default_true")]
    pub filtering: bool,
    /// Detections must score strictly above this to be kept.
    #[serde(default = "default_floor")]
    pub score_floor: f64,
}

fn default_true() -> bool {
    true
}

fn default_floor() -> f64 {
    DEFAULT_SCORE_FLOOR
}

impl Default for ManifestOptions {
    fn default() -> Self {
        ManifestOptions {
            filtering: true,
            score_floor: DEFAULT_SCORE_FLOOR,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub protocol: Protocol,
    /// One embedding file per feature network, all with the same ids.
    pub embeddings: Vec<PathBuf>,
    pub detections: PathBuf,
    pub gallery: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anchors: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub background: Option<PathBuf>,
    #[serde(default)]
    pub options: ManifestOptions,
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Manifest> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut m: Manifest = toml::from_str(&text).map_err(|e| {
            let line = e
                .span()
                .map_or(1, |s| text[..s.start.min(text.len())].matches('\n').count() + 1);
            Error::parse(path, line, e.message().to_string())
        })?;
        m.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        if m.embeddings.is_empty() {
            return Err(Error::parse(path, 1, "manifest lists no embedding files"));
        }
        Ok(m)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }
}

fn check_score(path: &Path, line: usize, score: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&score) {
        return Err(Error::parse(path, line, format!("score {score} outside [0, 1]")));
    }
    Ok(clip_score(score))
}

fn read_embeddings(m: &Manifest) -> Result<EmbeddingTable> {
    let mut table = EmbeddingTable::default();
    for (n, rel) in m.embeddings.iter().enumerate() {
        let path = m.resolve(rel);
        let (ids, rows) = read_fte(&path)?;
        if n == 0 {
            table.ids = ids;
        } else if ids != table.ids {
            return Err(Error::parse(
                super::fte::sidecar_path(&path),
                1,
                "embedding ids differ from the first network's ids",
            ));
        }
        table.networks.push(rows);
    }
    Ok(table)
}

fn read_detections(path: &Path, index: &HashMap<&str, usize>, floor: f64) -> Result<Vec<Video>> {
    let mut videos: Vec<Video> = Vec::new();
    let mut slot: HashMap<String, usize> = HashMap::new();
    let mut video_of = |id: &str, videos: &mut Vec<Video>| -> usize {
        *slot.entry(id.to_string()).or_insert_with(|| {
            videos.push(Video {
                id: id.to_string(),
                ..Default::default()
            });
            videos.len() - 1
        })
    };
    let mut dropped = 0usize;
    let lines = read_jsonl::<DetectionLine>(path)?;
    if lines.is_empty() {
        log::warn!("{}: no detections", path.display());
    }
    for (line, rec) in lines {
        match rec {
            DetectionLine::Cut(CutRecord { video_id, cut_frame }) => {
                let v = video_of(&video_id, &mut videos);
                videos[v].scene_cuts.push(cut_frame);
            }
            DetectionLine::Detection(r) => {
                let score = check_score(path, line, r.score)?;
                let bbox = BoundingBox::new(r.x, r.y, r.w, r.h).map_err(|e| Error::parse(path, line, e.to_string()))?;
                let row = *index
                    .get(r.embedding_id.as_str())
                    .ok_or_else(|| Error::parse(path, line, format!("unknown embedding id {:?}", r.embedding_id)))?;
                let v = video_of(&r.video_id, &mut videos);
                if r.score <= floor {
                    dropped += 1;
                    continue;
                }
                let det = Detection::new(r.video_id, r.frame, bbox, score, row, r.truth_id)
                    .map_err(|e| Error::parse(path, line, e.to_string()))?;
                videos[v].detections.push(det);
            }
        }
    }
    if dropped > 0 {
        log::info!("{}: dropped {dropped} detections at or below score floor {floor}", path.display());
    }
    Ok(videos)
}

fn read_templates(path: &Path, index: &HashMap<&str, usize>) -> Result<Vec<TemplateDef>> {
    read_jsonl::<TemplateDef>(path)?
        .into_iter()
        .map(|(line, mut t)| {
            if t.embedding_ids.is_empty() {
                return Err(Error::parse(path, line, format!("template {:?} has no samples", t.template_id)));
            }
            if t.embedding_ids.len() != t.scores.len() {
                return Err(Error::parse(path, line, "embedding_ids and scores differ in length"));
            }
            if let Some(bad) = t.embedding_ids.iter().find(|id| !index.contains_key(id.as_str())) {
                return Err(Error::parse(path, line, format!("unknown embedding id {bad:?}")));
            }
            for s in &mut t.scores {
                *s = check_score(path, line, *s)?;
            }
            Ok(t)
        })
        .collect()
}

/// Loads and validates the dataset a manifest describes. Detection scores at
/// or below the floor are dropped; the rest are clipped away from 0 and 1.
pub fn ingest(m: &Manifest) -> Result<Dataset> {
    let embeddings = read_embeddings(m)?;
    let index = embeddings.index();
    let videos = read_detections(&m.resolve(&m.detections), &index, m.options.score_floor)?;
    let gallery = read_templates(&m.resolve(&m.gallery), &index)?;

    let truth = match &m.truth {
        Some(p) => {
            let path = m.resolve(p);
            read_jsonl::<TruthRecord>(&path)?
                .into_iter()
                .map(|(line, r)| {
                    Ok(TruthBox {
                        bbox: BoundingBox::new(r.x, r.y, r.w, r.h).map_err(|e| Error::parse(&path, line, e.to_string()))?,
                        video_id: r.video_id,
                        frame: r.frame,
                        identity: r.identity,
                    })
                })
                .collect::<Result<Vec<_>>>()?
        }
        None => Vec::new(),
    };
    let anchors = match &m.anchors {
        Some(p) => {
            let path = m.resolve(p);
            read_jsonl::<AnchorDef>(&path)?
                .into_iter()
                .map(|(line, a)| {
                    BoundingBox::new(a.x, a.y, a.w, a.h).map_err(|e| Error::parse(&path, line, e.to_string()))?;
                    Ok(a)
                })
                .collect::<Result<Vec<_>>>()?
        }
        None => Vec::new(),
    };
    if m.protocol.uses_anchors() && anchors.is_empty() {
        return Err(Error::Config(format!("protocol {} needs an anchors file", m.protocol)));
    }
    let background = match &m.background {
        Some(p) => {
            let path = m.resolve(p);
            let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            let ids: Vec<String> =
                serde_json::from_str(&text).map_err(|e| Error::parse(&path, e.line(), e.to_string()))?;
            ids.iter()
                .map(|id| {
                    index
                        .get(id.as_str())
                        .copied()
                        .ok_or_else(|| Error::parse(&path, 1, format!("unknown embedding id {id:?}")))
                })
                .collect::<Result<Vec<_>>>()?
        }
        None => Vec::new(),
    };
    Ok(Dataset {
        protocol: m.protocol,
        embeddings,
        videos,
        gallery,
        truth,
        anchors,
        background,
    })
}

/// Writes every part of `ds` into `dir` and returns the manifest path.
pub fn write_dataset(ds: &Dataset, dir: &Path, options: ManifestOptions) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut embeddings = Vec::new();
    for (n, rows) in ds.embeddings.networks.iter().enumerate() {
        let name = PathBuf::from(format!("embeddings_{n}.fte"));
        write_fte(&dir.join(&name), &ds.embeddings.ids, rows)?;
        embeddings.push(name);
    }

    let mut lines = Vec::new();
    for v in &ds.videos {
        for d in &v.detections {
            lines.push(DetectionLine::Detection(DetectionRecord {
                video_id: d.video_id.clone(),
                frame: d.frame,
                x: d.bbox.x,
                y: d.bbox.y,
                w: d.bbox.w,
                h: d.bbox.h,
                score: d.score,
                embedding_id: ds.embeddings.ids[d.embedding].clone(),
                truth_id: d.truth_id,
            }));
        }
        for &c in &v.scene_cuts {
            lines.push(DetectionLine::Cut(CutRecord {
                video_id: v.id.clone(),
                cut_frame: c,
            }));
        }
    }
    let detections = PathBuf::from("detections.jsonl");
    write_jsonl(&dir.join(&detections), &lines)?;
    let gallery = PathBuf::from("gallery.jsonl");
    write_jsonl(&dir.join(&gallery), &ds.gallery)?;

    let truth = if ds.truth.is_empty() {
        None
    } else {
        let recs: Vec<TruthRecord> = ds
            .truth
            .iter()
            .map(|t| TruthRecord {
                video_id: t.video_id.clone(),
                frame: t.frame,
                x: t.bbox.x,
                y: t.bbox.y,
                w: t.bbox.w,
                h: t.bbox.h,
                identity: t.identity,
            })
            .collect();
        let p = PathBuf::from("truth.jsonl");
        write_jsonl(&dir.join(&p), &recs)?;
        Some(p)
    };
    let anchors = if ds.anchors.is_empty() {
        None
    } else {
        let p = PathBuf::from("anchors.jsonl");
        write_jsonl(&dir.join(&p), &ds.anchors)?;
        Some(p)
    };
    let background = if ds.background.is_empty() {
        None
    } else {
        let p = PathBuf::from("background.json");
        let ids: Vec<&String> = ds.background.iter().map(|&r| &ds.embeddings.ids[r]).collect();
        let path = dir.join(&p);
        fs::write(&path, serde_json::to_string(&ids).expect("ids serialize") + "\n").map_err(|e| Error::io(&path, e))?;
        Some(p)
    };

    let m = Manifest {
        protocol: ds.protocol,
        embeddings,
        detections,
        gallery,
        truth,
        anchors,
        background,
        options,
        base_dir: dir.to_path_buf(),
    };
    let path = dir.join("manifest.toml");
    let text = toml::to_string(&m).map_err(|e| Error::Config(e.to_string()))?;
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}
