//! Single-shot face association: constant-velocity Kalman tracking with
//! IoU-gated Hungarian assignment, tracklet lifecycle and quality filtering.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::assignment::hungarian_assignment;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;
pub use crate::types::iou;
use crate::types::{BoundingBox, Detection};

const STATE_DIM: usize = 7;
const OBS_DIM: usize = 4;

/// Noise model of the 7-state `(u, v, s, r, u̇, v̇, ṡ)` filter.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KalmanConfig {
    /// Diagonal of the observation noise over `(u, v, s, r)`.
    #[serde(default = "default_obs")]
    pub observation_noise: [f64; OBS_DIM],
    /// Diagonal of the process noise.
    #[serde(default = "default_process")]
    pub process_noise: [f64; STATE_DIM],
    /// Diagonal of the covariance given to a newborn track.
    #[serde(default = "default_initial")]
    pub initial_covariance: [f64; STATE_DIM],
}

fn default_obs() -> [f64; OBS_DIM] {
    [1.0, 1.0, 10.0, 0.01]
}

fn default_process() -> [f64; STATE_DIM] {
    [1.0, 1.0, 1.0, 1.0, 0.01, 0.01, 1e-4]
}

fn default_initial() -> [f64; STATE_DIM] {
    [10.0, 10.0, 10.0, 10.0, 1e4, 1e4, 1e4]
}

impl Default for KalmanConfig {
    fn default() -> Self {
        KalmanConfig {
            observation_noise: default_obs(),
            process_noise: default_process(),
            initial_covariance: default_initial(),
        }
    }
}

/// Mean and covariance of one track.
#[derive(Clone, Debug, PartialEq)]
pub struct KalmanTrackState<T> {
    pub mean: [T; STATE_DIM],
    pub covariance: Matrix<T>,
}

fn observe<T: Scalar>(b: &BoundingBox<T>) -> [T; OBS_DIM] {
    let (u, v) = b.center();
    [u, v, b.area(), b.w / b.h]
}

impl<T: Scalar> KalmanTrackState<T> {
    /// Newborn track at `b` with zero velocity.
    pub fn from_box(b: &BoundingBox<T>, cfg: &KalmanConfig) -> Self {
        let z = observe(b);
        let mut mean = [T::zero(); STATE_DIM];
        mean[..OBS_DIM].copy_from_slice(&z);
        let diag: Vec<T> = cfg.initial_covariance.iter().map(|&v| T::of(v)).collect();
        KalmanTrackState {
            mean,
            covariance: Matrix::from_diagonal(&diag),
        }
    }

    /// Box implied by the current mean.
    pub fn to_box(&self) -> BoundingBox<T> {
        let m = &self.mean;
        BoundingBox::from_center_area(m[0], m[1], m[2].max(T::zero()), m[3].max(T::zero()))
    }
}

fn transition<T: Scalar>() -> Matrix<T> {
    let mut f = Matrix::identity(STATE_DIM);
    f[(0, 4)] = T::one();
    f[(1, 5)] = T::one();
    f[(2, 6)] = T::one();
    f
}

/// Constant-velocity prediction `x' = F·x`, `P' = F·P·Fᵀ + Q`.
pub fn kalman_predict<T: Scalar>(ts: &KalmanTrackState<T>, cfg: &KalmanConfig) -> KalmanTrackState<T> {
    let mut mean = ts.mean;
    // keep the area positive
    if mean[2] + mean[6] <= T::zero() {
        mean[6] = T::zero();
    }
    mean[0] += mean[4];
    mean[1] += mean[5];
    mean[2] += mean[6];

    let f = transition::<T>();
    let q: Vec<T> = cfg.process_noise.iter().map(|&v| T::of(v)).collect();
    let mut cov = f
        .matmul(&ts.covariance)
        .and_then(|fp| fp.matmul(&f.transpose()))
        .and_then(|fpf| fpf.add(&Matrix::from_diagonal(&q)))
        .expect("7x7 products");
    cov.symmetrize();
    KalmanTrackState {
        mean,
        covariance: cov,
    }
}

/// Kalman correction with a box observation of `(u, v, s, r)`.
pub fn kalman_update<T: Scalar>(
    ts: &KalmanTrackState<T>,
    observation: &BoundingBox<T>,
    cfg: &KalmanConfig,
) -> Result<KalmanTrackState<T>> {
    let z = observe(observation);
    let p = &ts.covariance;
    let mut s = Matrix::from_fn(OBS_DIM, OBS_DIM, |i, j| p[(i, j)]);
    for i in 0..OBS_DIM {
        s[(i, i)] += T::of(cfg.observation_noise[i]);
    }
    let s_inv = spd_inverse(&s)?;
    // K = P·Hᵀ·S⁻¹, with P·Hᵀ the leading four columns of P
    let pht = p.leading_columns(OBS_DIM);
    let gain = pht.matmul(&s_inv)?;
    let innovation: Vec<T> = (0..OBS_DIM).map(|i| z[i] - ts.mean[i]).collect();

    let mut mean = ts.mean;
    for (r, m) in mean.iter_mut().enumerate() {
        *m += (0..OBS_DIM).map(|c| gain[(r, c)] * innovation[c]).sum::<T>();
    }
    // P' = P − K·H·P, where H·P is the leading four rows of P
    let hp = Matrix::from_fn(OBS_DIM, STATE_DIM, |i, j| p[(i, j)]);
    let mut cov = p.sub(&gain.matmul(&hp)?)?;
    cov.symmetrize();
    Ok(KalmanTrackState {
        mean,
        covariance: cov,
    })
}

/// Inverse of a symmetric positive definite matrix through its Cholesky factor.
fn spd_inverse<T: Scalar>(a: &Matrix<T>) -> Result<Matrix<T>> {
    let n = a.rows();
    let mut l = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[(i, j)];
            for k in 0..j {
                sum -= l[(i, k)] * l[(j, k)];
            }
            if i == j {
                if !(sum > T::zero()) {
                    return Err(Error::Numeric(
                        "innovation covariance is not positive definite".into(),
                    ));
                }
                l[(i, i)] = sum.sqrt();
            } else {
                l[(i, j)] = sum / l[(j, j)];
            }
        }
    }
    // solve L·Lᵀ·X = I column by column
    let mut inv = Matrix::zeros(n, n);
    for col in 0..n {
        let mut y = vec![T::zero(); n];
        for i in 0..n {
            let mut sum = if i == col { T::one() } else { T::zero() };
            for k in 0..i {
                sum -= l[(i, k)] * y[k];
            }
            y[i] = sum / l[(i, i)];
        }
        for i in (0..n).rev() {
            let mut sum = y[i];
            for k in (i + 1)..n {
                sum -= l[(k, i)] * inv[(k, col)];
            }
            inv[(i, col)] = sum / l[(i, i)];
        }
    }
    inv.symmetrize();
    Ok(inv)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SortConfig {
    /// Minimum IoU between a prediction and a detection for a match.
    #[serde(default = "default_gate")]
    pub iou_gate: f64,
    /// Frames a track may go unmatched before it is terminated.
    #[serde(default = "default_max_age")]
    pub max_age: u32,
    /// Matched detections a track needs before it is emitted.
    #[serde(default = "default_min_hits")]
    pub min_hits: u32,
    #[serde(default = "default_min_length")]
    pub min_length: usize,
    #[serde(default = "default_min_avg_score")]
    pub min_avg_score: f64,
    #[serde(default)]
    pub kalman: KalmanConfig,
}

fn default_gate() -> f64 {
    0.3
}
fn default_max_age() -> u32 {
    1
}
fn default_min_hits() -> u32 {
    3
}
fn default_min_length() -> usize {
    25
}
fn default_min_avg_score() -> f64 {
    0.9
}

impl Default for SortConfig {
    fn default() -> Self {
        SortConfig {
            iou_gate: default_gate(),
            max_age: default_max_age(),
            min_hits: default_min_hits(),
            min_length: default_min_length(),
            min_avg_score: default_min_avg_score(),
            kalman: KalmanConfig::default(),
        }
    }
}

impl SortConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.iou_gate) {
            return Err(Error::Config(format!("iou_gate must be in [0, 1], got {}", self.iou_gate)));
        }
        Ok(())
    }
}

/// A temporally ordered chain of detections believed to show one face.
#[derive(Clone, Debug, PartialEq)]
pub struct Tracklet {
    pub id: u32,
    pub detections: Vec<Detection>,
}

impl Tracklet {
    pub fn len(&self) -> usize {
        self.detections.len()
    }

    pub fn is_empty(&self) -> bool {
        self.detections.is_empty()
    }

    pub fn mean_score(&self) -> f64 {
        if self.detections.is_empty() {
            return 0.0;
        }
        self.detections.iter().map(|d| d.score).sum::<f64>() / self.detections.len() as f64
    }
}

struct Track {
    id: u32,
    state: KalmanTrackState<f64>,
    hits: u32,
    time_since_update: u32,
    detections: Vec<Detection>,
}

/// Frame-by-frame SORT tracker for one video.
pub struct SortTracker {
    cfg: SortConfig,
    tracks: Vec<Track>,
    finished: Vec<Tracklet>,
    next_id: u32,
}

impl SortTracker {
    pub fn new(cfg: SortConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(SortTracker {
            cfg,
            tracks: Vec::new(),
            finished: Vec::new(),
            next_id: 0,
        })
    }

    /// Advances one frame. Frames without detections must still be stepped so
    /// unmatched tracks age.
    pub fn step(&mut self, detections: &[Detection]) -> Result<()> {
        let kcfg = self.cfg.kalman;
        for t in &mut self.tracks {
            t.state = kalman_predict(&t.state, &kcfg);
            t.time_since_update += 1;
        }
        let predicted: Vec<BoundingBox<f64>> = self.tracks.iter().map(|t| t.state.to_box()).collect();

        let mut matched_det = vec![false; detections.len()];
        if !detections.is_empty() && !predicted.is_empty() {
            let overlap = Matrix::from_fn(detections.len(), predicted.len(), |i, j| {
                iou(&detections[i].bbox, &predicted[j])
            });
            let cost = Matrix::from_fn(overlap.rows(), overlap.cols(), |i, j| 1.0 - overlap[(i, j)]);
            for (di, ti) in hungarian_assignment(&cost)? {
                if overlap[(di, ti)] < self.cfg.iou_gate || overlap[(di, ti)] <= 0.0 {
                    continue;
                }
                let track = &mut self.tracks[ti];
                track.state = kalman_update(&track.state, &detections[di].bbox, &kcfg)?;
                track.hits += 1;
                track.time_since_update = 0;
                track.detections.push(detections[di].clone());
                matched_det[di] = true;
            }
        }
        for (d, _) in detections.iter().zip(&matched_det).filter(|(_, &m)| !m) {
            self.tracks.push(Track {
                id: self.next_id,
                state: KalmanTrackState::from_box(&d.bbox, &kcfg),
                hits: 1,
                time_since_update: 0,
                detections: vec![d.clone()],
            });
            self.next_id += 1;
        }

        let max_age = self.cfg.max_age;
        let (dead, alive): (Vec<Track>, Vec<Track>) = std::mem::take(&mut self.tracks)
            .into_iter()
            .partition(|t| t.time_since_update > max_age);
        self.tracks = alive;
        for t in dead {
            self.retire(t);
        }
        Ok(())
    }

    fn retire(&mut self, t: Track) {
        if t.hits >= self.cfg.min_hits {
            self.finished.push(Tracklet {
                id: t.id,
                detections: t.detections,
            });
        }
    }

    /// Terminates all live tracks and returns every emitted tracklet ordered by id.
    pub fn finish(mut self) -> Vec<Tracklet> {
        for t in std::mem::take(&mut self.tracks) {
            self.retire(t);
        }
        self.finished.sort_by_key(|t| t.id);
        self.finished
    }
}

/// Tracks all detections of one video. Frames between the first and last
/// detection are stepped even when empty.
pub fn sort_track(detections: &[Detection], cfg: &SortConfig) -> Result<Vec<Tracklet>> {
    let mut by_frame: BTreeMap<u32, Vec<Detection>> = BTreeMap::new();
    for d in detections {
        by_frame.entry(d.frame).or_default().push(d.clone());
    }
    let mut tracker = SortTracker::new(*cfg)?;
    if let (Some(&first), Some(&last)) = (by_frame.keys().next(), by_frame.keys().next_back()) {
        for frame in first..=last {
            let dets = by_frame.get(&frame).map_or(&[][..], Vec::as_slice);
            tracker.step(dets)?;
        }
    }
    Ok(tracker.finish())
}

/// Keeps tracklets with `len ≥ min_length` and mean score `≥ min_avg_score`;
/// passes everything through when `enabled` is false.
pub fn filter_tracklets(tracklets: Vec<Tracklet>, cfg: &SortConfig, enabled: bool) -> Vec<Tracklet> {
    if !enabled {
        return tracklets;
    }
    tracklets
        .into_iter()
        .filter(|t| t.len() >= cfg.min_length && t.mean_score() >= cfg.min_avg_score)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bb(x: f64, y: f64, w: f64, h: f64) -> BoundingBox<f64> {
        BoundingBox::new(x, y, w, h).unwrap()
    }

    fn det(frame: u32, b: BoundingBox<f64>, score: f64) -> Detection {
        Detection::new("v", frame, b, score, frame as usize, None).unwrap()
    }

    #[test]
    fn predict_zero_velocity() {
        let cfg = KalmanConfig::default();
        let s = KalmanTrackState::from_box(&bb(10.0, 10.0, 20.0, 40.0), &cfg);
        let p = kalman_predict(&s, &cfg);
        assert_eq!(p.mean, s.mean);
        assert!(p.covariance.trace() > s.covariance.trace());
    }

    #[test]
    fn predict_moves_with_velocity() {
        let cfg = KalmanConfig::default();
        let mut s = KalmanTrackState::from_box(&bb(0.0, 0.0, 10.0, 10.0), &cfg);
        s.mean[4] = 2.0;
        let u0 = s.mean[0];
        let p = kalman_predict(&kalman_predict(&s, &cfg), &cfg);
        assert!((p.mean[0] - (u0 + 4.0)).abs() < 1e-12);
    }

    #[test]
    fn repeated_prediction_grows_uncertainty() {
        let cfg = KalmanConfig::default();
        let mut s = KalmanTrackState::from_box(&bb(0.0, 0.0, 10.0, 10.0), &cfg);
        let mut trace = s.covariance.trace();
        for _ in 0..20 {
            s = kalman_predict(&s, &cfg);
            assert!(s.covariance.trace() > trace);
            trace = s.covariance.trace();
        }
    }

    #[test]
    fn update_at_mean_is_stationary_and_contracts() {
        let cfg = KalmanConfig::default();
        let b = bb(5.0, 5.0, 20.0, 30.0);
        let s = kalman_predict(&KalmanTrackState::from_box(&b, &cfg), &cfg);
        let u = kalman_update(&s, &s.to_box(), &cfg).unwrap();
        for (a, b) in u.mean.iter().zip(&s.mean) {
            assert!((a - b).abs() < 1e-9);
        }
        assert!(u.covariance.trace() <= s.covariance.trace());
        assert!(u.covariance.sub(&u.covariance.transpose()).unwrap().max_abs() <= 1e-10);
    }

    #[test]
    fn tiny_noise_snaps_to_observation() {
        let cfg = KalmanConfig { observation_noise: [1e-9; 4], ..Default::default() };
        let s = KalmanTrackState::from_box(&bb(0.0, 0.0, 10.0, 10.0), &cfg);
        let obs = bb(3.0, 4.0, 12.0, 11.0);
        let u = kalman_update(&kalman_predict(&s, &cfg), &obs, &cfg).unwrap();
        let z = observe(&obs);
        for i in 0..4 {
            assert!((u.mean[i] - z[i]).abs() < 1e-6 * z[i].abs().max(1.0), "{i}");
        }
    }

    #[test]
    fn non_positive_innovation_is_numeric_error() {
        let cfg = KalmanConfig { observation_noise: [0.0; 4], initial_covariance: [0.0; 7], ..Default::default() };
        let s = KalmanTrackState::from_box(&bb(0.0, 0.0, 10.0, 10.0), &cfg);
        assert!(matches!(kalman_update(&s, &bb(1.0, 1.0, 10.0, 10.0), &cfg), Err(Error::Numeric(_))));
    }

    #[test]
    fn single_moving_box_is_one_tracklet() {
        let dets: Vec<Detection> = (0..40).map(|f| det(f, bb(10.0 + 3.0 * f as f64, 50.0, 40.0, 50.0), 0.95)).collect();
        let ts = sort_track(&dets, &SortConfig::default()).unwrap();
        assert_eq!(ts.len(), 1);
        assert_eq!(ts[0].len(), 40);
        assert!((ts[0].mean_score() - 0.95).abs() < 1e-12);
    }

    #[test]
    fn gap_longer_than_max_age_splits() {
        let b = bb(100.0, 100.0, 40.0, 40.0);
        let dets: Vec<Detection> = (0..10).chain(13..25).map(|f| det(f, b, 0.9)).collect();
        let ts = sort_track(&dets, &SortConfig::default()).unwrap();
        assert_eq!(ts.len(), 2);
        assert_eq!(ts[0].len(), 10);
        assert_eq!(ts[1].len(), 12);
        // a one-frame gap is bridged at max_age = 1
        let dets: Vec<Detection> = (0..10).chain(11..25).map(|f| det(f, b, 0.9)).collect();
        assert_eq!(sort_track(&dets, &SortConfig::default()).unwrap().len(), 1);
    }

    #[test]
    fn short_tracks_are_not_emitted() {
        let dets = vec![det(0, bb(0.0, 0.0, 10.0, 10.0), 0.9), det(1, bb(0.0, 0.0, 10.0, 10.0), 0.9)];
        assert!(sort_track(&dets, &SortConfig::default()).unwrap().is_empty());
    }

    #[test]
    fn filter_thresholds() {
        let mk = |n: usize, s: f64| Tracklet {
            id: 0,
            detections: (0..n as u32).map(|f| det(f, bb(0.0, 0.0, 1.0, 1.0), s)).collect(),
        };
        let cfg = SortConfig::default();
        assert!(filter_tracklets(vec![mk(24, 0.95)], &cfg, true).is_empty());
        assert!(filter_tracklets(vec![mk(30, 0.89)], &cfg, true).is_empty());
        assert_eq!(filter_tracklets(vec![mk(30, 0.95)], &cfg, true).len(), 1);
        assert_eq!(filter_tracklets(vec![mk(24, 0.5)], &cfg, false).len(), 1);
    }

    #[test]
    fn gate_validation() {
        let cfg = SortConfig { iou_gate: 1.5, ..Default::default() };
        assert!(SortTracker::new(cfg).is_err());
    }
}
