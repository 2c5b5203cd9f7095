//! Seeded synthetic scenarios: unit prototypes per identity, constant-velocity
//! box paths cut into shots, and embeddings whose noise grows as the detection
//! score falls.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::associate::Video;
use crate::dataset::{AnchorDef, Dataset, EmbeddingTable, Protocol, TemplateDef};
use crate::error::{Error, Result};
use crate::eval::TruthBox;
use crate::scalar::{dot, norm};
use crate::types::{BoundingBox, Detection, IdentityId, Template};

const STREAM_PROTOTYPES: u64 = 1;
const STREAM_GALLERY: u64 = 2;
const STREAM_BACKGROUND: u64 = 3;
const STREAM_VIDEO: u64 = 1 << 20;
const STREAM_NETWORK: u64 = 1 << 40;

const MAX_SEPARATION: f64 = 0.5;
const REJECTION_RETRIES: usize = 1000;
const SCORE_MIN: f64 = 0.3;
const SCORE_MAX: f64 = 0.999;
const MAX_SPEED: f64 = 3.0;

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub protocol: Protocol,
    pub n_identities: usize,
    pub embedding_dim: usize,
    pub networks: usize,
    pub videos: usize,
    pub frames: u32,
    /// Faces visible in every frame of a video.
    pub boxes_per_frame: usize,
    /// Base embedding noise `σ₀`.
    pub noise_base: f64,
    /// Coupling `κ`: per-sample noise is `σ₀·(1 + κ·(1 − score))`.
    pub quality_noise_coupling: f64,
    /// Frames that start a new shot.
    pub shot_cut_frames: Vec<u32>,
    /// Standard deviation of detector box noise in pixels.
    pub box_jitter: f64,
    /// Per-frame score noise around the per-shot base score.
    pub score_spread: f64,
    pub frame_width: f64,
    pub frame_height: f64,
    pub box_size: f64,
    /// Identities enrolled in each gallery split.
    pub gallery_identities: usize,
    pub gallery_samples: usize,
    pub gallery_splits: usize,
    pub background_identities: usize,
    pub background_size: usize,
    pub orthogonal_prototypes: bool,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            seed: 0,
            protocol: Protocol::SurveillanceBooking,
            n_identities: 6,
            embedding_dim: 32,
            networks: 1,
            videos: 3,
            frames: 120,
            boxes_per_frame: 3,
            noise_base: 0.1,
            quality_noise_coupling: 1.0,
            shot_cut_frames: Vec::new(),
            box_jitter: 0.0,
            score_spread: 0.02,
            frame_width: 640.0,
            frame_height: 480.0,
            box_size: 40.0,
            gallery_identities: 4,
            gallery_samples: 5,
            gallery_splits: 2,
            background_identities: 4,
            background_size: 40,
            orthogonal_prototypes: false,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.embedding_dim < 2 {
            return fail(format!("embedding_dim must be >= 2, got {}", self.embedding_dim));
        }
        if !(self.noise_base >= 0.0) || !(self.quality_noise_coupling >= 0.0) {
            return fail("noise_base and quality_noise_coupling must be >= 0".into());
        }
        if self.n_identities == 0 || self.networks == 0 {
            return fail("n_identities and networks must be >= 1".into());
        }
        if self.boxes_per_frame == 0 || self.boxes_per_frame > self.n_identities {
            return fail(format!(
                "boxes_per_frame must be in 1..={}, got {}",
                self.n_identities, self.boxes_per_frame
            ));
        }
        let lane = self.frame_width / self.boxes_per_frame as f64;
        if !(self.box_size > 0.0) || lane < 1.5 * self.box_size || self.frame_height < 1.5 * self.box_size {
            return fail("frame too small for the requested boxes".into());
        }
        if self.gallery_identities > self.n_identities {
            return fail("gallery_identities exceeds n_identities".into());
        }
        if !(0.0..1.0).contains(&self.score_spread) || !(self.box_jitter >= 0.0) {
            return fail("score_spread must be in [0, 1) and box_jitter >= 0".into());
        }
        Ok(())
    }

    fn sigma(&self, score: f64) -> f64 {
        self.noise_base * (1.0 + self.quality_noise_coupling * (1.0 - score))
    }
}

fn random_unit(r: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| r.sample(rand_distr::StandardNormal)).collect();
        let n = norm(&v);
        if n > 1e-12 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

fn gram_schmidt(vectors: &mut [Vec<f64>]) -> Result<()> {
    for i in 0..vectors.len() {
        for j in 0..i {
            let (done, rest) = vectors.split_at_mut(i);
            let c = dot(&rest[0], &done[j]);
            for (x, y) in rest[0].iter_mut().zip(&done[j]) {
                *x -= c * y;
            }
        }
        let n = norm(&vectors[i]);
        if n < 1e-10 {
            return Err(Error::Numeric("prototype orthogonalization lost rank".into()));
        }
        vectors[i].iter_mut().for_each(|x| *x /= n);
    }
    Ok(())
}

/// `n` unit prototypes in `d` dimensions. For `n ≤ d` pairwise cosines are
/// kept below 0.5 by rejection, falling back to orthogonalization.
pub fn gen_prototypes(n: usize, d: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    gen_prototypes_from(&mut rng(seed, STREAM_PROTOTYPES), n, d, false)
}

fn gen_prototypes_from(r: &mut ChaCha8Rng, n: usize, d: usize, orthogonal: bool) -> Result<Vec<Vec<f64>>> {
    if n == 0 {
        return Err(Error::Config("need at least one prototype".into()));
    }
    if orthogonal {
        if n > d {
            return Err(Error::Config(format!("cannot place {n} orthogonal prototypes in {d} dimensions")));
        }
        let mut v: Vec<Vec<f64>> = (0..n).map(|_| random_unit(r, d)).collect();
        gram_schmidt(&mut v)?;
        return Ok(v);
    }
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(n);
    while out.len() < n {
        let mut accepted = false;
        for _ in 0..REJECTION_RETRIES {
            let v = random_unit(r, d);
            if n > d || out.iter().all(|p| dot(p, &v) < MAX_SEPARATION) {
                out.push(v);
                accepted = true;
                break;
            }
        }
        if !accepted {
            // rejection stalled; orthogonalize fresh draws instead
            let mut v: Vec<Vec<f64>> = (0..n).map(|_| random_unit(r, d)).collect();
            gram_schmidt(&mut v)?;
            if v.iter().enumerate().any(|(i, a)| v[..i].iter().any(|b| dot(a, b) >= MAX_SEPARATION)) {
                return Err(Error::Numeric("could not separate prototypes".into()));
            }
            return Ok(v);
        }
    }
    Ok(out)
}

/// `normalize(prototype + ε)` with `ε ~ N(0, σ²I)`, stored in single precision.
pub fn corrupt(r: &mut ChaCha8Rng, prototype: &[f64], sigma: f64) -> Vec<f32> {
    let noise = Normal::new(0.0, sigma.max(0.0)).expect("valid sigma");
    let v: Vec<f64> = prototype.iter().map(|&p| p + noise.sample(r)).collect();
    let n = norm(&v);
    v.iter().map(|&x| (x / n) as f32).collect()
}

/// A generated scenario: the dataset plus the hidden generator state.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub dataset: Dataset,
    pub prototypes: Vec<Vec<f64>>,
    /// Identity shown in each video, indexed by lane order at frame 0.
    pub cast: Vec<Vec<IdentityId>>,
}

struct Path {
    x: f64,
    y: f64,
    vx: f64,
    vy: f64,
}

fn sample_path(r: &mut ChaCha8Rng, lane: usize, cfg: &ScenarioConfig, len: f64) -> Path {
    let lane_w = cfg.frame_width / cfg.boxes_per_frame as f64;
    let (x_lo, x_hi) = (lane as f64 * lane_w, (lane + 1) as f64 * lane_w - cfg.box_size);
    let (y_lo, y_hi) = (0.0, cfg.frame_height - cfg.box_size);
    let x = r.random_range(x_lo..=x_hi);
    let y = r.random_range(y_lo..=y_hi);
    // keep the whole shot inside the lane
    let span = len.max(1.0);
    let vx_lo = ((x_lo - x) / span).max(-MAX_SPEED);
    let vx_hi = ((x_hi - x) / span).min(MAX_SPEED);
    let vy_lo = ((y_lo - y) / span).max(-MAX_SPEED);
    let vy_hi = ((y_hi - y) / span).min(MAX_SPEED);
    Path {
        x,
        y,
        vx: r.random_range(vx_lo..=vx_hi),
        vy: r.random_range(vy_lo..=vy_hi),
    }
}

fn shots(cfg: &ScenarioConfig) -> Vec<(u32, u32)> {
    let mut cuts: Vec<u32> = cfg
        .shot_cut_frames
        .iter()
        .copied()
        .filter(|&c| c > 0 && c < cfg.frames)
        .collect();
    cuts.sort_unstable();
    cuts.dedup();
    let mut bounds = vec![0];
    bounds.extend(cuts);
    bounds.push(cfg.frames);
    bounds.windows(2).map(|w| (w[0], w[1])).collect()
}

/// Generates the full dataset for `cfg`. Identical configs give identical output.
pub fn gen_scenario(cfg: &ScenarioConfig) -> Result<Scenario> {
    cfg.validate()?;
    let total = cfg.n_identities + cfg.background_identities;
    let all = gen_prototypes_from(
        &mut rng(cfg.seed, STREAM_PROTOTYPES),
        total,
        cfg.embedding_dim,
        cfg.orthogonal_prototypes,
    )?;
    let prototypes = all[..cfg.n_identities].to_vec();
    let distractors = &all[cfg.n_identities..];

    let mut ids = Vec::new();
    // (prototype, score) behind each embedding row
    let mut sources: Vec<(Vec<f64>, f64)> = Vec::new();
    let mut videos = Vec::new();
    let mut truth = Vec::new();
    let mut anchors = Vec::new();
    let mut cast = Vec::new();

    for v in 0..cfg.videos {
        let mut r = rng(cfg.seed, STREAM_VIDEO + v as u64);
        let video_id = format!("video{v:03}");
        let mut people: Vec<IdentityId> = (0..cfg.n_identities as IdentityId).collect();
        people.shuffle(&mut r);
        people.truncate(cfg.boxes_per_frame);
        cast.push(people.clone());
        let mut lanes: Vec<usize> = (0..cfg.boxes_per_frame).collect();
        let mut detections = Vec::new();
        let shot_list = shots(cfg);
        let jitter = Normal::new(0.0, cfg.box_jitter).expect("valid jitter");
        let spread = Normal::new(0.0, cfg.score_spread).expect("valid spread");
        for (s, &(start, end)) in shot_list.iter().enumerate() {
            if s > 0 {
                lanes.shuffle(&mut r);
            }
            let len = (end - start - 1) as f64;
            let paths: Vec<Path> = lanes.iter().map(|&lane| sample_path(&mut r, lane, cfg, len)).collect();
            let bases: Vec<f64> = people.iter().map(|_| r.random_range(SCORE_MIN..SCORE_MAX)).collect();
            for frame in start..end {
                let t = (frame - start) as f64;
                for (k, &person) in people.iter().enumerate() {
                    let p = &paths[k];
                    let true_box = BoundingBox::new(p.x + p.vx * t, p.y + p.vy * t, cfg.box_size, cfg.box_size)?;
                    let seen = BoundingBox::new(
                        true_box.x + jitter.sample(&mut r),
                        true_box.y + jitter.sample(&mut r),
                        cfg.box_size,
                        cfg.box_size,
                    )?;
                    let score = (bases[k] + spread.sample(&mut r)).clamp(SCORE_MIN, SCORE_MAX);
                    let row = ids.len();
                    ids.push(format!("{video_id}_f{frame:05}_i{person}"));
                    sources.push((prototypes[person as usize].clone(), score));
                    truth.push(TruthBox {
                        video_id: video_id.clone(),
                        frame,
                        bbox: true_box,
                        identity: person,
                    });
                    if frame == 0 {
                        anchors.push(AnchorDef {
                            anchor_id: format!("{video_id}_a{person}"),
                            video_id: video_id.clone(),
                            frame,
                            x: seen.x,
                            y: seen.y,
                            w: seen.w,
                            h: seen.h,
                            truth_id: Some(person),
                        });
                    }
                    detections.push(Detection::new(video_id.clone(), frame, seen, score, row, Some(person))?);
                }
            }
        }
        let scene_cuts = shot_list.iter().skip(1).map(|s| s.0).collect();
        videos.push(Video {
            id: video_id,
            detections,
            scene_cuts,
        });
    }

    let mut gallery = Vec::new();
    let mut r = rng(cfg.seed, STREAM_GALLERY);
    let (g_lo, g_hi, g_samples) = match cfg.protocol {
        Protocol::SurveillanceSingle => (0.9, SCORE_MAX, 1),
        Protocol::SurveillanceSurveillance => (SCORE_MIN, SCORE_MAX, cfg.gallery_samples.max(1)),
        _ => (0.9, SCORE_MAX, cfg.gallery_samples.max(1)),
    };
    for split in 0..cfg.gallery_splits {
        let mut enrolled: Vec<IdentityId> = (0..cfg.n_identities as IdentityId).collect();
        enrolled.shuffle(&mut r);
        enrolled.truncate(cfg.gallery_identities);
        enrolled.sort_unstable();
        for person in enrolled {
            let mut tpl_ids = Vec::new();
            let mut scores = Vec::new();
            for k in 0..g_samples {
                let score = r.random_range(g_lo..g_hi);
                tpl_ids.push(format!("g{split}_i{person}_s{k}"));
                scores.push(score);
                sources.push((prototypes[person as usize].clone(), score));
            }
            ids.extend(tpl_ids.iter().cloned());
            gallery.push(TemplateDef {
                template_id: format!("g{split}_i{person}"),
                split_id: Some(format!("G{}", split + 1)),
                video_id: None,
                label: Some(person),
                embedding_ids: tpl_ids,
                scores,
            });
        }
    }

    let mut background = Vec::new();
    let mut r = rng(cfg.seed, STREAM_BACKGROUND);
    if !distractors.is_empty() {
        for k in 0..cfg.background_size {
            let proto = &distractors[k % distractors.len()];
            let score = r.random_range(SCORE_MIN..SCORE_MAX);
            background.push(ids.len());
            ids.push(format!("bg{k:04}"));
            sources.push((proto.clone(), score));
        }
    }

    let networks = (0..cfg.networks)
        .map(|n| {
            let mut r = rng(cfg.seed, STREAM_NETWORK + n as u64);
            sources
                .iter()
                .map(|(proto, score)| corrupt(&mut r, proto, cfg.sigma(*score)))
                .collect()
        })
        .collect();

    Ok(Scenario {
        dataset: Dataset {
            protocol: cfg.protocol,
            embeddings: EmbeddingTable { ids, networks },
            videos,
            gallery,
            truth,
            anchors,
            background,
        },
        prototypes,
        cast,
    })
}

/// Template-level open-set benchmark: enrolled identities with a gallery
/// template each, and probe templates of enrolled and unknown identities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OpenSetConfig {
    pub seed: u64,
    pub known: usize,
    pub unknown: usize,
    pub embedding_dim: usize,
    pub noise_base: f64,
    pub quality_noise_coupling: f64,
    pub gallery_samples: usize,
    pub probes_per_identity: usize,
    pub probe_samples: usize,
}

impl Default for OpenSetConfig {
    fn default() -> Self {
        OpenSetConfig {
            seed: 0,
            known: 50,
            unknown: 10,
            embedding_dim: 64,
            noise_base: 0.25,
            quality_noise_coupling: 3.0,
            gallery_samples: 3,
            probes_per_identity: 4,
            probe_samples: 12,
        }
    }
}

#[derive(Clone, Debug)]
pub struct OpenSet {
    pub gallery: Vec<Template<f64>>,
    pub probes: Vec<Template<f64>>,
}

pub fn gen_open_set(cfg: &OpenSetConfig) -> Result<OpenSet> {
    let n = cfg.known + cfg.unknown;
    let protos = gen_prototypes_from(&mut rng(cfg.seed, STREAM_PROTOTYPES), n, cfg.embedding_dim, false)?;
    let sigma = |s: f64| cfg.noise_base * (1.0 + cfg.quality_noise_coupling * (1.0 - s));
    let mut r = rng(cfg.seed, STREAM_GALLERY);
    let template = |r: &mut ChaCha8Rng, id: usize, samples: usize, lo: f64| -> Result<Template<f64>> {
        let scores: Vec<f64> = (0..samples).map(|_| r.random_range(lo..SCORE_MAX)).collect();
        let vectors = scores
            .iter()
            .map(|&s| corrupt(r, &protos[id], sigma(s)).into_iter().map(f64::from).collect())
            .collect();
        Template::from_vectors(vectors, scores, Some(id as IdentityId))
    };
    let gallery = (0..cfg.known)
        .map(|id| template(&mut r, id, cfg.gallery_samples.max(1), 0.9))
        .collect::<Result<Vec<_>>>()?;
    let mut probes = Vec::new();
    for id in 0..n {
        for _ in 0..cfg.probes_per_identity {
            probes.push(template(&mut r, id, cfg.probe_samples.max(1), SCORE_MIN)?);
        }
    }
    Ok(OpenSet { gallery, probes })
}
