//! Lifecycle stage sequences: generation and validation.
//!
//! A campaign lifecycle starts with the two fixed stages IC and EF, runs an
//! incubation period of optional stages (EP, IR, ML, MP, in any order and
//! multiplicity) and optionally closes with CM. Known-campaign specs may
//! repeat EF directly after IC, so the accepted language is
//! `IC EF+ (EP|IR|ML|MP)* CM?`.

use std::collections::BTreeMap;
use std::fmt;

use rand::Rng;
use thiserror::Error;

use crate::model::Stage;

/// An ordered lifecycle stage list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageSequence {
    pub stages: Vec<Stage>,
}

impl StageSequence {
    pub fn new(stages: Vec<Stage>) -> Self {
        StageSequence { stages }
    }

    pub fn len(&self) -> usize {
        self.stages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stages.is_empty()
    }

    /// Manifest form: `{1,2,2,4,4,7}`.
    pub fn format_indices(&self) -> String {
        let inner: Vec<String> = self.stages.iter().map(|s| s.index().to_string()).collect();
        format!("{{{}}}", inner.join(","))
    }
}

impl fmt::Display for StageSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let inner: Vec<&str> = self.stages.iter().map(|s| s.abbrev()).collect();
        write!(f, "[{}]", inner.join(","))
    }
}

/// Stochastic policy knobs for lifecycle generation.
#[derive(Debug, Clone)]
pub struct GrammarParams {
    /// Probability of emitting another incubation stage.
    pub continue_prob: f64,
    /// Relative weights for the four incubation stages.
    pub stage_weights: BTreeMap<Stage, f64>,
    /// Probability of closing with CM.
    pub cm_prob: f64,
    /// Hard cap on incubation length.
    pub max_incubation: u32,
}

impl Default for GrammarParams {
    fn default() -> Self {
        let mut stage_weights = BTreeMap::new();
        for stage in Stage::INCUBATION {
            stage_weights.insert(stage, 1.0);
        }
        GrammarParams {
            continue_prob: 0.6,
            stage_weights,
            cm_prob: 0.9,
            max_incubation: 12,
        }
    }
}

#[derive(Debug, Error)]
pub enum GrammarError {
    #[error("continue_prob must be strictly between 0 and 1, got {0}")]
    BadContinueProb(f64),
    #[error("cm_prob must be in [0, 1], got {0}")]
    BadCmProb(f64),
    #[error("stage weights must be non-negative with at least one positive")]
    BadWeights,
}

impl GrammarParams {
    pub fn validate(&self) -> Result<(), GrammarError> {
        if !(self.continue_prob > 0.0 && self.continue_prob < 1.0) {
            return Err(GrammarError::BadContinueProb(self.continue_prob));
        }
        if !(0.0..=1.0).contains(&self.cm_prob) {
            return Err(GrammarError::BadCmProb(self.cm_prob));
        }
        let weights: Vec<f64> =
            Stage::INCUBATION.iter().map(|s| self.stage_weights.get(s).copied().unwrap_or(0.0)).collect();
        if weights.iter().any(|w| *w < 0.0 || !w.is_finite()) || !weights.iter().any(|w| *w > 0.0) {
            return Err(GrammarError::BadWeights);
        }
        Ok(())
    }
}

/// Draw a lifecycle: IC, EF, a geometric-length incubation run drawn by
/// stage weight, and CM with probability `cm_prob`. The output always passes
/// [`validate_lifecycle`].
pub fn generate_lifecycle(rng: &mut impl Rng, params: &GrammarParams) -> StageSequence {
    debug_assert!(params.validate().is_ok());
    let mut stages = vec![Stage::InitialCompromise, Stage::EstablishFoothold];
    let weights: Vec<(Stage, f64)> = Stage::INCUBATION
        .iter()
        .map(|s| (*s, params.stage_weights.get(s).copied().unwrap_or(0.0)))
        .collect();
    let total: f64 = weights.iter().map(|(_, w)| w).sum();

    let mut emitted = 0;
    while emitted < params.max_incubation && rng.gen_bool(params.continue_prob) {
        let mut pick = rng.gen_range(0.0..total);
        let mut chosen = weights[weights.len() - 1].0;
        for (stage, w) in &weights {
            if pick < *w {
                chosen = *stage;
                break;
            }
            pick -= w;
        }
        stages.push(chosen);
        emitted += 1;
    }
    if rng.gen_bool(params.cm_prob) {
        stages.push(Stage::CompleteMission);
    }
    StageSequence::new(stages)
}

/// Position of the first symbol that breaks `IC EF+ (EP|IR|ML|MP)* CM?`,
/// if any.
pub fn first_violation(stages: &[Stage]) -> Option<usize> {
    if stages.is_empty() || stages[0] != Stage::InitialCompromise {
        return Some(0);
    }
    if stages.len() < 2 || stages[1] != Stage::EstablishFoothold {
        return Some(1);
    }
    let mut i = 2;
    while i < stages.len() && stages[i] == Stage::EstablishFoothold {
        i += 1;
    }
    while i < stages.len() && Stage::INCUBATION.contains(&stages[i]) {
        i += 1;
    }
    if i < stages.len() {
        if stages[i] != Stage::CompleteMission {
            return Some(i);
        }
        i += 1;
        if i < stages.len() {
            // Nothing may follow CM; the first offending symbol is after it.
            return Some(i);
        }
    }
    None
}

/// True iff the sequence is in the lifecycle language.
pub fn validate_lifecycle(seq: &StageSequence) -> bool {
    first_violation(&seq.stages).is_none()
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LifecycleError {
    #[error("stage index {0} is outside 1..=7")]
    IndexOutOfRange(i64),
    #[error("invalid lifecycle at position {position}: {sequence}")]
    InvalidLifecycle { position: usize, sequence: String },
}

/// Map integer stage indices to a validated sequence.
pub fn parse_stage_indices(indices: &[i64]) -> Result<StageSequence, LifecycleError> {
    let mut stages = Vec::with_capacity(indices.len());
    for &i in indices {
        let idx = u8::try_from(i).ok().filter(|v| (1..=7).contains(v));
        match idx.and_then(Stage::from_index) {
            Some(stage) => stages.push(stage),
            None => return Err(LifecycleError::IndexOutOfRange(i)),
        }
    }
    let seq = StageSequence::new(stages);
    match first_violation(&seq.stages) {
        None => Ok(seq),
        Some(position) => Err(LifecycleError::InvalidLifecycle {
            position,
            sequence: seq.to_string(),
        }),
    }
}

/// Parse a list of symbolic stage names ("IC", "Establish Foothold", ...).
pub fn parse_stage_symbols(symbols: &[String]) -> Result<StageSequence, LifecycleError> {
    let mut stages = Vec::with_capacity(symbols.len());
    for s in symbols {
        match Stage::parse(s) {
            Some(stage) => stages.push(stage),
            None => return Err(LifecycleError::IndexOutOfRange(-1)),
        }
    }
    let seq = StageSequence::new(stages);
    match first_violation(&seq.stages) {
        None => Ok(seq),
        Some(position) => Err(LifecycleError::InvalidLifecycle {
            position,
            sequence: seq.to_string(),
        }),
    }
}
