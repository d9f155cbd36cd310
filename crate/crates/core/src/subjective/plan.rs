use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Which side the candidate model's image is shown on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Placement {
    CandidateLeft,
    AnchorLeft,
}

impl Placement {
    /// Maps a raw left-minus-right score onto candidate-minus-anchor.
    pub fn orient(self, raw: i8) -> i8 {
        match self {
            Placement::CandidateLeft => raw,
            Placement::AnchorLeft => -raw,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Placement::CandidateLeft => Placement::AnchorLeft,
            Placement::AnchorLeft => Placement::CandidateLeft,
        }
    }
}

/// Content-addressed image bytes; handles reveal nothing about the model.
#[derive(Clone, Debug, Default)]
pub struct ImageStore {
    images: BTreeMap<String, Arc<Vec<u8>>>,
}

impl ImageStore {
    pub fn insert(&mut self, bytes: Vec<u8>) -> String {
        let handle = hex::encode(&Sha256::digest(&bytes)[..16]);
        self.images.entry(handle.clone()).or_insert_with(|| Arc::new(bytes));
        handle
    }

    pub fn get(&self, handle: &str) -> Option<Arc<Vec<u8>>> {
        self.images.get(handle).cloned()
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }
}

/// MIME type sniffed from the leading bytes.
pub fn content_type(bytes: &[u8]) -> &'static str {
    if bytes.starts_with(b"\x89PNG\r\n\x1a\n") {
        "image/png"
    } else if bytes.starts_with(b"BM") {
        "image/bmp"
    } else {
        "application/octet-stream"
    }
}

/// One comparison as written in a plan file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanEntry {
    pub pair_id: String,
    pub image_id: String,
    /// Column label in the report; defaults to `Ours VS. {anchor_model}`.
    #[serde(default)]
    pub comparison: Option<String>,
    pub candidate_model: String,
    pub anchor_model: String,
    pub candidate_image: PathBuf,
    pub anchor_image: PathBuf,
}

/// One comparison with its images already in memory.
#[derive(Clone, Debug)]
pub struct TrialSpec {
    pub pair_id: String,
    pub image_id: String,
    pub comparison: String,
    pub candidate_model: String,
    pub anchor_model: String,
    pub candidate_image: Vec<u8>,
    pub anchor_image: Vec<u8>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialPlan {
    pub pair_id: String,
    pub image_id: String,
    pub comparison: String,
    /// Candidate model (scores are oriented in its favour).
    pub model_a: String,
    /// Anchor model.
    pub model_b: String,
    pub placement: Placement,
    pub candidate_handle: String,
    pub anchor_handle: String,
}

impl TrialPlan {
    /// `(left, right)` image handles.
    pub fn sides(&self) -> (&str, &str) {
        match self.placement {
            Placement::CandidateLeft => (&self.candidate_handle, &self.anchor_handle),
            Placement::AnchorLeft => (&self.anchor_handle, &self.candidate_handle),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub seed: u64,
    pub trials: Vec<TrialPlan>,
}

impl Plan {
    /// Fixes one uniformly random placement per trial.
    pub fn new(specs: Vec<TrialSpec>, seed: u64, images: &mut ImageStore) -> Result<Self> {
        if specs.is_empty() {
            return Err(Error::Config("trial plan is empty".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut seen = std::collections::HashSet::new();
        let mut trials = Vec::with_capacity(specs.len());
        for s in specs {
            if !seen.insert(s.pair_id.clone()) {
                return Err(Error::Config(format!("duplicate pair id {}", s.pair_id)));
            }
            let placement = if rng.random::<bool>() {
                Placement::CandidateLeft
            } else {
                Placement::AnchorLeft
            };
            trials.push(TrialPlan {
                candidate_handle: images.insert(s.candidate_image),
                anchor_handle: images.insert(s.anchor_image),
                pair_id: s.pair_id,
                image_id: s.image_id,
                comparison: s.comparison,
                model_a: s.candidate_model,
                model_b: s.anchor_model,
                placement,
            });
        }
        Ok(Self { seed, trials })
    }

    /// Loads a JSON array of [`PlanEntry`]; image paths resolve relative to
    /// the plan file.
    pub fn load(path: &Path, seed: u64, images: &mut ImageStore) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Load {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        let entries: Vec<PlanEntry> = serde_json::from_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let read = |p: &Path| {
            let full = if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
            std::fs::read(&full).map_err(|e| Error::Load {
                path: full.clone(),
                reason: e.to_string(),
            })
        };
        let specs = entries
            .into_iter()
            .map(|e| {
                Ok(TrialSpec {
                    comparison: e.comparison.unwrap_or_else(|| format!("Ours VS. {}", e.anchor_model)),
                    candidate_image: read(&e.candidate_image)?,
                    anchor_image: read(&e.anchor_image)?,
                    pair_id: e.pair_id,
                    image_id: e.image_id,
                    candidate_model: e.candidate_model,
                    anchor_model: e.anchor_model,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(specs, seed, images)
    }

    pub fn trial(&self, pair_id: &str) -> Option<&TrialPlan> {
        self.trials.iter().find(|t| t.pair_id == pair_id)
    }
}
