//! Multi-shot target-face association.
//!
//! Starting from one annotated face, a short positional track supplies the
//! initial positives, same-frame low-overlap boxes supply negatives through
//! cannot-link constraints, and a one-shot linear SVM then decides which faces
//! across the whole video belong to the target. Cannot-link violations in the
//! associated set are removed greedily by lowest decision value.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::svm::{augment, train, Group, SvmConfig, SvmModel, SvmProblem};
use crate::track::{kalman_predict, kalman_update, KalmanConfig, KalmanTrackState};
use crate::types::{iou, BoundingBox, Detection, Template};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TfaConfig {
    /// Frames after the anchor searched by pre-association.
    #[serde(default = "default_k")]
    pub k: u32,
    /// Pre-associated boxes overlapping the tracker box less than this are dropped.
    #[serde(default = "default_pre_iou")]
    pub pre_iou_min: f64,
    /// Same-frame boxes with IoU at most `gamma` cannot show the same face.
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    /// Extra retraining rounds seeded with the refined associated set.
    #[serde(default)]
    pub iterations: u32,
    /// Score raw features `[x; 1]` instead of the normalized training features.
    #[serde(default)]
    pub strict_decision: bool,
    #[serde(default)]
    pub svm: SvmConfig,
    #[serde(default)]
    pub kalman: KalmanConfig,
}

fn default_k() -> u32 {
    50
}
fn default_pre_iou() -> f64 {
    0.3
}
fn default_gamma() -> f64 {
    0.1
}

impl Default for TfaConfig {
    fn default() -> Self {
        TfaConfig {
            k: default_k(),
            pre_iou_min: default_pre_iou(),
            gamma: default_gamma(),
            iterations: 0,
            strict_decision: false,
            svm: SvmConfig::default(),
            kalman: KalmanConfig::default(),
        }
    }
}

impl TfaConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::Config(format!("gamma must be in [0, 1], got {}", self.gamma)));
        }
        if !(0.0..=1.0).contains(&self.pre_iou_min) {
            return Err(Error::Config("pre_iou_min must be in [0, 1]".into()));
        }
        self.svm.validate()
    }
}

/// All detections of one video plus its scene-cut markers. A cut at frame `f`
/// means frame `f` starts a new shot.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Video {
    pub id: String,
    pub detections: Vec<Detection>,
    pub scene_cuts: Vec<u32>,
}

impl Video {
    fn by_frame(&self) -> BTreeMap<u32, Vec<usize>> {
        let mut map: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        for (i, d) in self.detections.iter().enumerate() {
            map.entry(d.frame).or_default().push(i);
        }
        map
    }

    /// Index of the detection in `frame` overlapping `b` the most.
    pub fn locate(&self, frame: u32, b: &BoundingBox<f64>) -> Option<usize> {
        self.detections
            .iter()
            .enumerate()
            .filter(|(_, d)| d.frame == frame)
            .map(|(i, d)| (i, iou(&d.bbox, b)))
            .filter(|&(_, o)| o > 0.0)
            .fold(None, |best: Option<(usize, f64)>, cur| match best {
                Some(b) if b.1 >= cur.1 => Some(b),
                _ => Some(cur),
            })
            .map(|(i, _)| i)
    }
}

/// Box tracker used for pre-association.
pub trait BoxPredictor {
    fn reset(&mut self, anchor: &BoundingBox<f64>);
    /// Advances one frame and returns the predicted box.
    fn predict(&mut self) -> BoundingBox<f64>;
    fn correct(&mut self, observed: &BoundingBox<f64>);
}

/// Constant-velocity Kalman box predictor.
#[derive(Clone, Debug)]
pub struct ConstantVelocityPredictor {
    cfg: KalmanConfig,
    state: Option<KalmanTrackState<f64>>,
}

impl ConstantVelocityPredictor {
    pub fn new(cfg: KalmanConfig) -> Self {
        ConstantVelocityPredictor { cfg, state: None }
    }
}

impl BoxPredictor for ConstantVelocityPredictor {
    fn reset(&mut self, anchor: &BoundingBox<f64>) {
        self.state = Some(KalmanTrackState::from_box(anchor, &self.cfg));
    }

    fn predict(&mut self) -> BoundingBox<f64> {
        let state = self.state.as_ref().expect("predictor used before reset");
        let next = kalman_predict(state, &self.cfg);
        let b = next.to_box();
        self.state = Some(next);
        b
    }

    fn correct(&mut self, observed: &BoundingBox<f64>) {
        if let Some(state) = &self.state {
            // a failed correction leaves the prediction in place
            if let Ok(next) = kalman_update(state, observed, &self.cfg) {
                self.state = Some(next);
            }
        }
    }
}

/// Tracks the anchor through at most `k` following frames, stopping at the
/// next scene cut. Returns the pre-associated detection indices.
pub fn pre_associate(
    video: &Video,
    anchor: usize,
    predictor: &mut dyn BoxPredictor,
    cfg: &TfaConfig,
) -> Vec<usize> {
    let a = &video.detections[anchor];
    let frames = video.by_frame();
    let next_cut = video.scene_cuts.iter().copied().filter(|&c| c > a.frame).min();
    predictor.reset(&a.bbox);
    let mut picked = Vec::new();
    for step in 1..=cfg.k {
        let frame = a.frame + step;
        if next_cut.is_some_and(|c| frame >= c) {
            break;
        }
        let predicted = predictor.predict();
        let Some(candidates) = frames.get(&frame) else {
            continue;
        };
        let best = candidates
            .iter()
            .map(|&i| (i, iou(&video.detections[i].bbox, &predicted)))
            .fold(None, |best: Option<(usize, f64)>, cur| match best {
                Some(b) if b.1 >= cur.1 => Some(b),
                _ => Some(cur),
            });
        if let Some((i, overlap)) = best {
            if overlap >= cfg.pre_iou_min {
                predictor.correct(&video.detections[i].bbox);
                picked.push(i);
            }
        }
    }
    picked
}

/// Unordered pairs of same-frame detections that cannot share an identity.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CannotLinkGraph {
    pairs: BTreeSet<(usize, usize)>,
    partners: BTreeMap<usize, BTreeSet<usize>>,
}

impl CannotLinkGraph {
    pub fn insert(&mut self, i: usize, j: usize) {
        if i == j {
            return;
        }
        self.pairs.insert((i.min(j), i.max(j)));
        self.partners.entry(i).or_default().insert(j);
        self.partners.entry(j).or_default().insert(i);
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.pairs.contains(&(i.min(j), i.max(j)))
    }

    pub fn partners(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.partners.get(&i).into_iter().flatten().copied()
    }

    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.pairs.iter().copied()
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Links every same-frame pair with IoU `≤ gamma`.
pub fn build_cannot_link(detections: &[Detection], gamma: f64) -> CannotLinkGraph {
    let mut by_frame: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, d) in detections.iter().enumerate() {
        by_frame.entry(d.frame).or_default().push(i);
    }
    let mut g = CannotLinkGraph::default();
    for members in by_frame.values() {
        for (a, &i) in members.iter().enumerate() {
            for &j in &members[a + 1..] {
                if iou(&detections[i].bbox, &detections[j].bbox) <= gamma {
                    g.insert(i, j);
                }
            }
        }
    }
    g
}

/// Index sets for one SVM round. Background indices continue after the video's
/// own detections: `n_video..n_video + l`.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingSets {
    pub positive: BTreeSet<usize>,
    pub negative: BTreeSet<usize>,
    pub background: Vec<usize>,
}

pub fn build_training_sets(
    positive: &BTreeSet<usize>,
    graph: &CannotLinkGraph,
    n_video: usize,
    background_len: usize,
) -> Result<TrainingSets> {
    if positive.is_empty() {
        return Err(Error::validation("positive set is empty"));
    }
    let negative: BTreeSet<usize> = positive
        .iter()
        .flat_map(|&p| graph.partners(p))
        .filter(|i| !positive.contains(i))
        .collect();
    let background: Vec<usize> = (n_video..n_video + background_len).collect();
    if negative.is_empty() && background.is_empty() {
        return Err(Error::Config(
            "no within-video negatives and no background set supplied".into(),
        ));
    }
    Ok(TrainingSets {
        positive: positive.clone(),
        negative,
        background,
    })
}

/// Outcome of associating one anchor.
#[derive(Clone, Debug)]
pub struct AssociationResult {
    pub anchor: usize,
    pub members: BTreeSet<usize>,
    /// Decision value for every video detection.
    pub decisions: Vec<f64>,
    pub model: SvmModel<f64>,
}

/// Per-detection decision values of `model` on the video features.
pub fn decision_values(model: &SvmModel<f64>, features: &[Vec<f64>], strict: bool) -> Result<Vec<f64>> {
    features
        .iter()
        .map(|x| {
            let v = if strict {
                let mut raw = x.clone();
                raw.push(1.0);
                raw
            } else {
                augment(x)?
            };
            Ok(model.decision(&v))
        })
        .collect()
}

/// Anchor plus every detection with a strictly positive decision value.
pub fn associate(decisions: &[f64], anchor: usize) -> BTreeSet<usize> {
    let mut set: BTreeSet<usize> = decisions
        .iter()
        .enumerate()
        .filter(|(_, &v)| v > 0.0)
        .map(|(i, _)| i)
        .collect();
    set.insert(anchor);
    set
}

/// Removes the lowest-scoring violating member until no cannot-link pair
/// remains. The anchor is never removed.
pub fn refine(
    members: &BTreeSet<usize>,
    graph: &CannotLinkGraph,
    decisions: &[f64],
    anchor: usize,
) -> BTreeSet<usize> {
    let mut set = members.clone();
    loop {
        let victim = set
            .iter()
            .copied()
            .filter(|&i| i != anchor && graph.partners(i).any(|j| set.contains(&j)))
            .fold(None, |best: Option<usize>, i| match best {
                Some(b) if decisions[b] <= decisions[i] => Some(b),
                _ => Some(i),
            });
        match victim {
            Some(i) => {
                set.remove(&i);
            }
            None => return set,
        }
    }
}

fn train_round(
    sets: &TrainingSets,
    features: &[Vec<f64>],
    background: &[Vec<f64>],
    cfg: &TfaConfig,
) -> Result<SvmModel<f64>> {
    let n = features.len();
    let samples = sets
        .positive
        .iter()
        .map(|&i| (features[i].as_slice(), Group::Positive))
        .chain(sets.negative.iter().map(|&i| (features[i].as_slice(), Group::Negative)))
        .chain(sets.background.iter().map(|&i| (background[i - n].as_slice(), Group::Background)));
    let problem = SvmProblem::from_raw(samples)?;
    train(&problem, &cfg.svm)
}

/// Full association for one anchor: pre-association, cannot-link negatives,
/// SVM training, positive-set extraction and refinement, repeated
/// `cfg.iterations` more times with the refined set as positives.
///
/// `features[i]` is the embedding of `video.detections[i]`.
pub fn tfa_run(
    video: &Video,
    features: &[Vec<f64>],
    anchor: usize,
    background: &[Vec<f64>],
    cfg: &TfaConfig,
    predictor: &mut dyn BoxPredictor,
) -> Result<(Template<f64>, AssociationResult)> {
    cfg.validate()?;
    if anchor >= video.detections.len() {
        return Err(Error::validation(format!("anchor index {anchor} out of range")));
    }
    if features.len() != video.detections.len() {
        return Err(Error::validation("one feature vector per detection is required"));
    }
    let graph = build_cannot_link(&video.detections, cfg.gamma);
    if video.detections.len() == 1 && background.is_empty() {
        let members = BTreeSet::from([anchor]);
        let model = SvmModel {
            weights: vec![0.0; features[anchor].len() + 1],
            objective: 0.0,
            iterations: 0,
        };
        let result = AssociationResult {
            anchor,
            members,
            decisions: vec![0.0],
            model,
        };
        return Ok((template_of(video, features, &result)?, result));
    }

    let mut positive: BTreeSet<usize> = pre_associate(video, anchor, predictor, cfg).into_iter().collect();
    positive.insert(anchor);
    let mut result = None;
    for _round in 0..=cfg.iterations {
        let sets = build_training_sets(&positive, &graph, video.detections.len(), background.len())?;
        let model = train_round(&sets, features, background, cfg)?;
        let decisions = decision_values(&model, features, cfg.strict_decision)?;
        let members = refine(&associate(&decisions, anchor), &graph, &decisions, anchor);
        positive = members.clone();
        result = Some(AssociationResult {
            anchor,
            members,
            decisions,
            model,
        });
    }
    let result = result.expect("at least one round");
    Ok((template_of(video, features, &result)?, result))
}

fn template_of(video: &Video, features: &[Vec<f64>], result: &AssociationResult) -> Result<Template<f64>> {
    let vectors = result.members.iter().map(|&i| features[i].clone()).collect();
    let scores = result.members.iter().map(|&i| video.detections[i].score).collect();
    Template::from_vectors(vectors, scores, video.detections[result.anchor].truth_id)
}
