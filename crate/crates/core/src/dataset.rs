//! In-memory dataset shared by the generator, the file formats and the pipeline.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::associate::Video;
use crate::error::{Error, Result};
use crate::eval::TruthBox;
use crate::types::IdentityId;

/// Evaluation protocol; selects how probe templates are formed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    SurveillanceSingle,
    SurveillanceBooking,
    SurveillanceSurveillance,
    MultishotSearch,
}

impl Protocol {
    pub const ALL: [Protocol; 4] = [
        Protocol::SurveillanceSingle,
        Protocol::SurveillanceBooking,
        Protocol::SurveillanceSurveillance,
        Protocol::MultishotSearch,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Protocol::SurveillanceSingle => "surveillance_single",
            Protocol::SurveillanceBooking => "surveillance_booking",
            Protocol::SurveillanceSurveillance => "surveillance_surveillance",
            Protocol::MultishotSearch => "multishot_search",
        }
    }

    /// Whether probes come from target-face association rather than tracking.
    pub fn uses_anchors(self) -> bool {
        self == Protocol::MultishotSearch
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Protocol::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown protocol {s:?}")))
    }
}

/// A gallery (or precomputed probe) template given by embedding ids.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemplateDef {
    pub template_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub video_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<IdentityId>,
    pub embedding_ids: Vec<String>,
    pub scores: Vec<f64>,
}

/// Annotated target face that seeds association.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnchorDef {
    pub anchor_id: String,
    pub video_id: String,
    pub frame: u32,
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth_id: Option<IdentityId>,
}

/// Embedding table for each feature network, all sharing one id list.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EmbeddingTable {
    pub ids: Vec<String>,
    /// `networks[n][row]` is the embedding of `ids[row]` under network `n`.
    pub networks: Vec<Vec<Vec<f32>>>,
}

impl EmbeddingTable {
    pub fn dim(&self) -> usize {
        self.networks
            .first()
            .and_then(|n| n.first())
            .map_or(0, |v| v.len())
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn index(&self) -> HashMap<&str, usize> {
        self.ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect()
    }

    pub fn vector(&self, network: usize, row: usize) -> Vec<f64> {
        self.networks[network][row].iter().map(|&v| v as f64).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub protocol: Protocol,
    pub embeddings: EmbeddingTable,
    pub videos: Vec<Video>,
    pub gallery: Vec<TemplateDef>,
    pub truth: Vec<TruthBox>,
    pub anchors: Vec<AnchorDef>,
    /// Rows of the embedding table used as association background.
    pub background: Vec<usize>,
}

impl Dataset {
    /// Gallery split ids in first-appearance order. Templates without a split
    /// form the split `"all"`.
    pub fn splits(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for t in &self.gallery {
            let s = t.split_id.clone().unwrap_or_else(|| "all".into());
            if !out.contains(&s) {
                out.push(s);
            }
        }
        out
    }
}
