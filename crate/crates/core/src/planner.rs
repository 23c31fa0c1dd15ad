//! Campaign planning: template selection against the campaign information
//! table, outcome bookkeeping, and step timing.
//!
//! Planning walks the lifecycle stage by stage. At each occurrence it picks
//! templates whose prerequisites match live entity records (environment
//! seeds plus earlier outcomes), instantiates them, and feeds the produced
//! artifacts back into the table so later stages can consume them. Mandatory
//! stages (IC, EF) abort planning on a dead end; optional stages are skipped
//! with a warning.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::sync::Arc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::artifact::{instantiate_template, ArtifactProvider, InstantiatedTechnique, ProviderError};
use crate::grammar::StageSequence;
use crate::model::{CategoryDescriptor, Stage};
use crate::taxonomy::Taxonomy;
use crate::template::{AttackPatternTemplate, Placeholder, TemplateRepository};

/// Lifecycle status of an entity record.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecordStatus {
    Available,
    Consumed,
    Deleted,
}

/// One known system entity: its descriptor, bound value, status, and which
/// ability produced it ("environment" for pre-seeded entities).
#[derive(Debug, Clone)]
pub struct EntityRecord {
    pub descriptor: CategoryDescriptor,
    pub slot: u32,
    pub value: String,
    pub status: RecordStatus,
    pub provenance: String,
}

/// Ledger of executed abilities and the entities they used or produced.
#[derive(Debug, Clone, Default)]
pub struct CampaignInfoTable {
    pub records: Vec<EntityRecord>,
    pub executed: Vec<(Stage, String)>,
}

impl CampaignInfoTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, record: EntityRecord) -> usize {
        self.records.push(record);
        self.records.len() - 1
    }

    /// Every value currently recorded, for fresh-value collision checks.
    pub fn values(&self) -> HashSet<String> {
        self.records.iter().map(|r| r.value.clone()).collect()
    }

    /// Most recently produced non-deleted record matching the descriptor,
    /// skipping indices already taken by other bindings.
    fn find_match(&self, descriptor: &CategoryDescriptor, taken: &BTreeSet<usize>) -> Option<usize> {
        self.records
            .iter()
            .enumerate()
            .rev()
            .find(|(idx, r)| {
                r.status != RecordStatus::Deleted
                    && r.descriptor == *descriptor
                    && !taken.contains(idx)
            })
            .map(|(idx, _)| idx)
    }
}

/// Prerequisite placeholder -> record index bindings.
pub type Bindings = BTreeMap<Placeholder, usize>;

/// Bind each prerequisite to a distinct live record, preferring the most
/// recently produced match; `None` if any prerequisite is unmatchable.
pub fn check_prerequisites(
    template: &AttackPatternTemplate,
    info: &CampaignInfoTable,
) -> Option<Bindings> {
    let mut bindings = Bindings::new();
    let mut taken = BTreeSet::new();
    for placeholder in &template.prerequisites {
        let idx = info.find_match(&placeholder.descriptor, &taken)?;
        taken.insert(idx);
        bindings.insert(placeholder.clone(), idx);
    }
    Some(bindings)
}

/// Descriptors a template cannot satisfy against a table, for diagnostics.
fn missing_descriptors(template: &AttackPatternTemplate, info: &CampaignInfoTable) -> Vec<String> {
    let mut taken = BTreeSet::new();
    let mut missing = Vec::new();
    for placeholder in &template.prerequisites {
        match info.find_match(&placeholder.descriptor, &taken) {
            Some(idx) => {
                taken.insert(idx);
            }
            None => missing.push(placeholder.descriptor.token()),
        }
    }
    missing
}

/// Template selection policy for one stage occurrence.
#[derive(Debug, Clone)]
pub enum SelectionPolicy {
    Random,
    Pinned(String),
}

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("no satisfiable template for mandatory stage {stage}: {reason}")]
    PlanningFailed { stage: Stage, reason: String },
    #[error("pinned ability {ability} unsatisfiable; missing prerequisites: {}", missing.join(", "))]
    PinnedUnsatisfiable { ability: String, missing: Vec<String> },
    #[error("pinned ability {ability} not present in the template repository")]
    UnknownAbility { ability: String },
    #[error("pinned ability {ability} belongs to stage {actual}, not {requested}")]
    StageMismatch { ability: String, actual: Stage, requested: Stage },
    #[error("pinned ability list has {got} entries for a lifecycle of {want} stages")]
    PinnedLengthMismatch { got: usize, want: usize },
    #[error(transparent)]
    Provider(#[from] ProviderError),
}

/// Pick a template for `stage`: uniformly among satisfiable candidates under
/// the random policy, or the pinned ability (which must be satisfiable).
/// `Ok(None)` means no candidate exists.
pub fn select_template(
    stage: Stage,
    repo: &TemplateRepository,
    info: &CampaignInfoTable,
    rng: &mut impl Rng,
    policy: &SelectionPolicy,
) -> Result<Option<(Arc<AttackPatternTemplate>, Bindings)>, PlanError> {
    match policy {
        SelectionPolicy::Random => {
            let candidates: Vec<(&Arc<AttackPatternTemplate>, Bindings)> = repo
                .by_stage(stage)
                .into_iter()
                .filter_map(|t| check_prerequisites(t, info).map(|b| (t, b)))
                .collect();
            if candidates.is_empty() {
                return Ok(None);
            }
            let idx = rng.gen_range(0..candidates.len());
            let (template, bindings) = &candidates[idx];
            Ok(Some(((*template).clone(), bindings.clone())))
        }
        SelectionPolicy::Pinned(ability) => {
            let template = repo
                .get(ability)
                .ok_or_else(|| PlanError::UnknownAbility { ability: ability.clone() })?;
            if template.ident.stage != stage {
                return Err(PlanError::StageMismatch {
                    ability: ability.clone(),
                    actual: template.ident.stage,
                    requested: stage,
                });
            }
            match check_prerequisites(template, info) {
                Some(bindings) => Ok(Some((template.clone(), bindings))),
                None => Err(PlanError::PinnedUnsatisfiable {
                    ability: ability.clone(),
                    missing: missing_descriptors(template, info),
                }),
            }
        }
    }
}

/// Record a step's effects: bound prerequisites become consumed, each
/// template outcome appends an available record carrying its instantiated
/// value, entities the template deleted are marked deleted, and the
/// executed ledger grows by one entry.
pub fn apply_outcomes(
    info: &mut CampaignInfoTable,
    template: &AttackPatternTemplate,
    bindings: &Bindings,
    technique: &InstantiatedTechnique,
) {
    for idx in bindings.values() {
        let record = &mut info.records[*idx];
        if record.status == RecordStatus::Available {
            record.status = RecordStatus::Consumed;
        }
    }
    for outcome in &template.outcomes {
        let value = technique
            .values
            .get(outcome)
            .cloned()
            .unwrap_or_else(|| format!("{}_unreferenced", outcome.token()));
        info.push(EntityRecord {
            descriptor: outcome.descriptor.clone(),
            slot: outcome.slot,
            value,
            status: RecordStatus::Available,
            provenance: template.ident.ability_id.clone(),
        });
    }
    for deleted in &technique.deleted {
        if let Some(idx) = bindings.get(deleted) {
            info.records[*idx].status = RecordStatus::Deleted;
        }
    }
    info.executed.push((template.ident.stage, template.ident.ability_id.clone()));
}

/// How many attacks one stage occurrence contributes.
#[derive(Debug, Clone, Copy)]
pub enum AttacksPerStage {
    Fixed(u32),
    /// Uniform draw in the inclusive range.
    Uniform(u32, u32),
}

impl Default for AttacksPerStage {
    fn default() -> Self {
        AttacksPerStage::Uniform(1, 3)
    }
}

/// Planner knobs for one campaign.
#[derive(Debug, Clone)]
pub struct PlannerConfig {
    pub attacks_per_stage: AttacksPerStage,
    /// Target span from the first to the last malicious event.
    pub duration_us: u64,
    /// Gap between the campaign start time and the first technique.
    pub initial_lapse_us: u64,
    /// Inclusive range for the benign-prefix length before each technique.
    pub prefix_range: (u32, u32),
    /// Descriptor tokens pre-seeded as environment records.
    pub environment: Vec<String>,
    /// One pinned ability per lifecycle stage occurrence.
    pub pinned_abilities: Option<Vec<String>>,
    /// Pinned per-step lapses (position-aligned; missing entries are drawn).
    pub pinned_lapses: Option<Vec<u64>>,
}

/// Default environment: a browser, a shell, the local mail infrastructure,
/// host identity, a user, and the adversary-side endpoints templates dial.
pub const DEFAULT_ENVIRONMENT: &[&str] = &[
    "process.browser",
    "process.explorer",
    "network.mail_server",
    "system.host",
    "system.user",
    "network.c2",
    "network.payload_url",
    "network.script_url",
];

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig {
            attacks_per_stage: AttacksPerStage::default(),
            duration_us: 15 * 60 * 1_000_000,
            initial_lapse_us: 1_000_000,
            prefix_range: (2, 6),
            environment: DEFAULT_ENVIRONMENT.iter().map(|s| s.to_string()).collect(),
            pinned_abilities: None,
            pinned_lapses: None,
        }
    }
}

/// One planned and bound attack step.
#[derive(Debug, Clone)]
pub struct PlannedStep {
    pub stage: Stage,
    pub template: Arc<AttackPatternTemplate>,
    pub bindings: Bindings,
    /// Lapse before this step's first event.
    pub lapse_us: u64,
    /// Number of benign prefix events placed inside the lapse window.
    pub prefix_len: u32,
    /// Lifecycle occurrence index this step belongs to.
    pub occurrence: usize,
}

/// An ordered, fully bound campaign plan.
#[derive(Debug, Clone)]
pub struct CampaignPlan {
    pub campaign_id: String,
    pub lifecycle: StageSequence,
    pub steps: Vec<PlannedStep>,
    pub seed: u64,
}

/// A planned campaign with its instantiated techniques (paired by position
/// with `plan.steps`), the final information table and skip/warning notes.
#[derive(Debug, Clone)]
pub struct PlannedCampaign {
    pub plan: CampaignPlan,
    pub techniques: Vec<InstantiatedTechnique>,
    pub info: CampaignInfoTable,
    /// (occurrence index, stage) of optional occurrences without a
    /// satisfiable template.
    pub skipped: Vec<(usize, Stage)>,
    pub warnings: Vec<String>,
}

/// Stable campaign seed derivation (FNV-1a over the master seed and id).
pub fn derive_seed(master_seed: u64, campaign_id: &str) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    let mut eat = |byte: u8| {
        hash ^= byte as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    };
    for b in master_seed.to_le_bytes() {
        eat(b);
    }
    for &b in campaign_id.as_bytes() {
        eat(b);
    }
    hash
}

/// Plan one campaign over a lifecycle: seed the environment, walk the stage
/// occurrences selecting and instantiating templates, and assign lapses and
/// benign-prefix lengths.
pub fn plan_campaign(
    lifecycle: &StageSequence,
    repo: &TemplateRepository,
    provider: &mut ArtifactProvider,
    config: &PlannerConfig,
    campaign_id: &str,
    seed: u64,
) -> Result<PlannedCampaign, PlanError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut info = CampaignInfoTable::new();
    let mut warnings = Vec::new();
    let taxonomy = Taxonomy::builtin();

    if let Some(pinned) = &config.pinned_abilities {
        if pinned.len() != lifecycle.len() {
            return Err(PlanError::PinnedLengthMismatch {
                got: pinned.len(),
                want: lifecycle.len(),
            });
        }
    }

    // Environment seeding.
    for token in &config.environment {
        match taxonomy.descriptor_from_token(token) {
            Ok(descriptor) => {
                let value = provider.fresh_value(&descriptor, &mut rng)?;
                info.push(EntityRecord {
                    descriptor,
                    slot: 0,
                    value,
                    status: RecordStatus::Available,
                    provenance: "environment".to_string(),
                });
            }
            Err(e) => warnings.push(format!("environment entry {token:?} skipped: {e}")),
        }
    }

    let mut steps: Vec<PlannedStep> = Vec::new();
    let mut techniques: Vec<InstantiatedTechnique> = Vec::new();
    let mut skipped: Vec<(usize, Stage)> = Vec::new();

    for (occurrence, &stage) in lifecycle.stages.iter().enumerate() {
        let policy = match &config.pinned_abilities {
            Some(pinned) => SelectionPolicy::Pinned(pinned[occurrence].clone()),
            None => SelectionPolicy::Random,
        };
        let attack_count = match (&policy, config.attacks_per_stage) {
            (SelectionPolicy::Pinned(_), _) => 1,
            (_, AttacksPerStage::Fixed(n)) => n.max(1),
            (_, AttacksPerStage::Uniform(lo, hi)) => rng.gen_range(lo.max(1)..=hi.max(lo.max(1))),
        };

        let mut placed = 0u32;
        for _ in 0..attack_count {
            match select_template(stage, repo, &info, &mut rng, &policy)? {
                Some((template, bindings)) => {
                    let bound_values: BTreeMap<Placeholder, String> = bindings
                        .iter()
                        .map(|(p, idx)| (p.clone(), info.records[*idx].value.clone()))
                        .collect();
                    let used = info.values();
                    let technique = instantiate_template(
                        &template,
                        &bound_values,
                        provider,
                        &mut rng,
                        campaign_id,
                        &used,
                    )?;
                    apply_outcomes(&mut info, &template, &bindings, &technique);
                    steps.push(PlannedStep {
                        stage,
                        template,
                        bindings,
                        lapse_us: 0,
                        prefix_len: 0,
                        occurrence,
                    });
                    techniques.push(technique);
                    placed += 1;
                }
                None => break,
            }
        }

        if placed == 0 {
            let mandatory =
                matches!(stage, Stage::InitialCompromise | Stage::EstablishFoothold);
            if mandatory {
                return Err(PlanError::PlanningFailed {
                    stage,
                    reason: "no template with satisfiable prerequisites".to_string(),
                });
            }
            warnings.push(format!(
                "occurrence {occurrence} ({stage}) skipped: no satisfiable template"
            ));
            skipped.push((occurrence, stage));
        }
    }

    assign_timing(&mut steps, &techniques, config, &mut rng);

    Ok(PlannedCampaign {
        plan: CampaignPlan {
            campaign_id: campaign_id.to_string(),
            lifecycle: lifecycle.clone(),
            steps,
            seed,
        },
        techniques,
        info,
        skipped,
        warnings,
    })
}

/// Split the lapse budget (duration minus template spans) over the
/// inter-step gaps with normalized unit-exponential variates, pin any
/// user-fixed lapses, and draw prefix lengths. Integer apportioning is
/// exact: the assigned gaps sum to the budget.
fn assign_timing(
    steps: &mut [PlannedStep],
    techniques: &[InstantiatedTechnique],
    config: &PlannerConfig,
    rng: &mut impl Rng,
) {
    if steps.is_empty() {
        return;
    }
    let total_span: u64 = techniques.iter().map(|t| t.span_us).sum();
    let budget = config.duration_us.saturating_sub(total_span);

    steps[0].lapse_us = config.initial_lapse_us;
    let pinned = config.pinned_lapses.as_deref().unwrap_or(&[]);
    if let Some(&l0) = pinned.first() {
        steps[0].lapse_us = l0;
    }

    let gaps = steps.len() - 1; // lapses for steps 1..n-1
    if gaps > 0 {
        let mut fixed_total = 0u64;
        let mut free: Vec<usize> = Vec::new();
        for j in 1..steps.len() {
            match pinned.get(j) {
                Some(&l) => {
                    steps[j].lapse_us = l;
                    fixed_total += l;
                }
                None => free.push(j),
            }
        }
        let free_budget = budget.saturating_sub(fixed_total);
        if !free.is_empty() {
            let variates: Vec<f64> = free
                .iter()
                .map(|_| {
                    let u: f64 = rng.gen();
                    -(1.0 - u).ln()
                })
                .collect();
            let total: f64 = variates.iter().sum();
            let mut assigned = 0u64;
            for (k, &j) in free.iter().enumerate() {
                if k + 1 == free.len() {
                    steps[j].lapse_us = free_budget - assigned;
                } else {
                    let share = if total > 0.0 { variates[k] / total } else { 1.0 / free.len() as f64 };
                    let lapse = ((free_budget as f64) * share).floor() as u64;
                    let lapse = lapse.min(free_budget - assigned);
                    steps[j].lapse_us = lapse;
                    assigned += lapse;
                }
            }
        }
    }

    let (lo, hi) = config.prefix_range;
    for step in steps.iter_mut() {
        // A strictly-inside placement needs an open integer interval.
        if step.lapse_us < 2 {
            step.prefix_len = 0;
        } else {
            step.prefix_len = rng.gen_range(lo..=hi.max(lo));
        }
    }
}
