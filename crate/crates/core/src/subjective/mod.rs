//! Blinded pairwise viewing test: plans, rater sessions, score persistence
//! and Mean/Std summaries.

mod plan;
mod store;
mod summary;

use std::collections::HashMap;
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pipeline::dataset::derive_seed;

pub use plan::{content_type, ImageStore, Placement, Plan, PlanEntry, TrialPlan, TrialSpec};
pub use store::{ScoreRecord, ScoreStore};
pub use summary::{
    mean_std, render_table, summarize, ComparisonAverage, Observation, SummaryRow, SummaryTable, GAP_MARKER,
};

pub const SCORE_RANGE: std::ops::RangeInclusive<i8> = -3..=3;

#[derive(Clone, Debug)]
struct Session {
    subject_id: String,
    order: Vec<usize>,
    cursor: usize,
    token: String,
    nonce: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionCreated {
    pub session_id: String,
    pub total: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Progress {
    /// 1-based index of the trial being shown.
    pub index: usize,
    pub total: usize,
}

/// What a rater sees next. Carries only opaque handles.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum NextPair {
    Trial {
        token: String,
        left_image_url: String,
        right_image_url: String,
        progress: Progress,
    },
    Complete {
        completed: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreAck {
    pub accepted: bool,
    pub remaining: usize,
}

fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64)
}

fn subject_key(subject: &str) -> u64 {
    subject.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

pub struct SubjectiveService {
    plan: Plan,
    images: ImageStore,
    store: ScoreStore,
    sessions: HashMap<String, Session>,
    seed: u64,
    created: u64,
}

impl SubjectiveService {
    pub fn new(plan: Plan, images: ImageStore, store: ScoreStore, seed: u64) -> Self {
        Self {
            plan,
            images,
            store,
            sessions: HashMap::new(),
            seed,
            created: 0,
        }
    }

    pub fn plan(&self) -> &Plan {
        &self.plan
    }

    pub fn store(&self) -> &ScoreStore {
        &self.store
    }

    fn token(&self, s: &Session) -> String {
        format!("{:016x}", derive_seed(self.seed, &[s.nonce, s.cursor as u64, 0x70]))
    }

    pub fn create_session(&mut self, subject_id: &str) -> Result<SessionCreated> {
        let subject_id = subject_id.trim();
        if subject_id.is_empty() {
            return Err(Error::InvalidValue("subject id must not be empty".into()));
        }
        let total = self.plan.trials.len();
        if self
            .sessions
            .values()
            .any(|s| s.subject_id == subject_id && s.cursor < s.order.len())
        {
            return Err(Error::Conflict(format!("subject {subject_id} already has an active session")));
        }
        self.created += 1;
        let nonce = derive_seed(self.seed, &[subject_key(subject_id), self.created]);
        let mut order: Vec<usize> = (0..total).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(nonce));
        let session_id = format!("{:016x}", derive_seed(nonce, &[0x5e55]));
        let mut s = Session {
            subject_id: subject_id.to_string(),
            order,
            cursor: 0,
            token: String::new(),
            nonce,
        };
        s.token = self.token(&s);
        self.sessions.insert(session_id.clone(), s);
        Ok(SessionCreated { session_id, total })
    }

    fn session(&self, id: &str) -> Result<&Session> {
        self.sessions.get(id).ok_or_else(|| Error::NotFound(format!("session {id}")))
    }

    /// Internal: the trial order of a session, as plan pair ids.
    pub fn session_order(&self, id: &str) -> Result<Vec<String>> {
        let s = self.session(id)?;
        Ok(s.order.iter().map(|&i| self.plan.trials[i].pair_id.clone()).collect())
    }

    pub fn next_pair(&self, id: &str) -> Result<NextPair> {
        let s = self.session(id)?;
        let total = s.order.len();
        if s.cursor >= total {
            return Ok(NextPair::Complete { completed: total });
        }
        let (left, right) = self.plan.trials[s.order[s.cursor]].sides();
        Ok(NextPair::Trial {
            token: s.token.clone(),
            left_image_url: format!("/images/{left}"),
            right_image_url: format!("/images/{right}"),
            progress: Progress {
                index: s.cursor + 1,
                total,
            },
        })
    }

    pub fn submit_score(&mut self, id: &str, token: &str, raw_score: i64) -> Result<ScoreAck> {
        let s = self.session(id)?;
        if !(*SCORE_RANGE.start() as i64..=*SCORE_RANGE.end() as i64).contains(&raw_score) {
            return Err(Error::InvalidValue(format!("score {raw_score} outside -3..=3")));
        }
        if s.cursor >= s.order.len() || token != s.token {
            return Err(Error::Conflict("stale or unknown trial token".into()));
        }
        let raw = raw_score as i8;
        let trial = &self.plan.trials[s.order[s.cursor]];
        let replaced = self.store.contains(&s.subject_id, &trial.pair_id);
        let record = ScoreRecord {
            subject_id: s.subject_id.clone(),
            pair_id: trial.pair_id.clone(),
            raw_score: raw,
            stored_score: trial.placement.orient(raw),
            timestamp_ms: now_ms(),
            placement: trial.placement,
            audit: replaced.then(|| "replaces an earlier score for this subject and pair".to_string()),
        };
        self.store.append(record)?;
        let mut s = self.sessions.remove(id).expect("checked above");
        s.cursor += 1;
        let remaining = s.order.len() - s.cursor;
        s.token = self.token(&s);
        self.sessions.insert(id.to_string(), s);
        Ok(ScoreAck {
            accepted: true,
            remaining,
        })
    }

    pub fn observations(&self) -> Vec<Observation> {
        self.store
            .current()
            .into_iter()
            .filter_map(|r| {
                self.plan.trial(&r.pair_id).map(|t| Observation {
                    image_id: t.image_id.clone(),
                    comparison: t.comparison.clone(),
                    score: r.stored_score as f64,
                })
            })
            .collect()
    }

    pub fn summary(&self) -> SummaryTable {
        let mut images = Vec::new();
        let mut comparisons = Vec::new();
        for t in &self.plan.trials {
            if !images.contains(&t.image_id) {
                images.push(t.image_id.clone());
            }
            if !comparisons.contains(&t.comparison) {
                comparisons.push(t.comparison.clone());
            }
        }
        summarize(&self.observations(), Some((&images, &comparisons)))
    }

    pub fn image(&self, handle: &str) -> Result<(&'static str, Arc<Vec<u8>>)> {
        let bytes = self
            .images
            .get(handle)
            .ok_or_else(|| Error::NotFound(format!("image {handle}")))?;
        Ok((content_type(&bytes), bytes))
    }
}
