//! Shared event/entity/label vocabulary.
//!
//! Every other module builds on these types: audit events are
//! `<subject, operation, object>` triples with a timestamp, a PID and a
//! BIO2 label triple, and entities are classified by a small fixed set of
//! kinds. All values here are immutable once built and safe to move across
//! threads.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Kind of a concrete system entity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EntityKind {
    Process,
    File,
    Registry,
    NetworkSocket,
    System,
    Cmdline,
}

impl EntityKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            EntityKind::Process => "process",
            EntityKind::File => "file",
            EntityKind::Registry => "registry",
            EntityKind::NetworkSocket => "socket",
            EntityKind::System => "system",
            EntityKind::Cmdline => "cmdline",
        }
    }

    pub fn parse(s: &str) -> Option<EntityKind> {
        match s.to_ascii_lowercase().as_str() {
            "process" => Some(EntityKind::Process),
            "file" => Some(EntityKind::File),
            "registry" => Some(EntityKind::Registry),
            "socket" | "networksocket" | "network" => Some(EntityKind::NetworkSocket),
            "system" => Some(EntityKind::System),
            "cmdline" => Some(EntityKind::Cmdline),
            _ => None,
        }
    }

    /// File paths and process names follow Windows case-insensitive matching;
    /// registry paths, sockets, users and command lines compare verbatim.
    pub fn case_insensitive(&self) -> bool {
        matches!(self, EntityKind::File | EntityKind::Process)
    }
}

impl fmt::Display for EntityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Top-level artifact category of the descriptor taxonomy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Category {
    File,
    Network,
    Cmdline,
    Process,
    Registry,
    System,
}

impl Category {
    pub const ALL: [Category; 6] = [
        Category::File,
        Category::Network,
        Category::Cmdline,
        Category::Process,
        Category::Registry,
        Category::System,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Category::File => "file",
            Category::Network => "network",
            Category::Cmdline => "cmdline",
            Category::Process => "process",
            Category::Registry => "registry",
            Category::System => "system",
        }
    }

    pub fn parse(s: &str) -> Option<Category> {
        match s.to_ascii_lowercase().as_str() {
            "file" => Some(Category::File),
            "network" => Some(Category::Network),
            "cmdline" => Some(Category::Cmdline),
            "process" => Some(Category::Process),
            "registry" => Some(Category::Registry),
            "system" => Some(Category::System),
            _ => None,
        }
    }

    /// Entity kind a placeholder of this category materializes as.
    pub fn entity_kind(&self) -> EntityKind {
        match self {
            Category::File => EntityKind::File,
            Category::Network => EntityKind::NetworkSocket,
            Category::Cmdline => EntityKind::Cmdline,
            Category::Process => EntityKind::Process,
            Category::Registry => EntityKind::Registry,
            Category::System => EntityKind::System,
        }
    }

    /// Category consistent with a given entity kind.
    pub fn for_kind(kind: EntityKind) -> Category {
        match kind {
            EntityKind::File => Category::File,
            EntityKind::NetworkSocket => Category::Network,
            EntityKind::Cmdline => Category::Cmdline,
            EntityKind::Process => Category::Process,
            EntityKind::Registry => Category::Registry,
            EntityKind::System => Category::System,
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One (category, descriptor) pair of the artifact taxonomy, e.g.
/// `process.browser` or `file.payload_copy`.
///
/// Instances are only handed out by [`crate::taxonomy::Taxonomy`], which
/// rejects pairs outside the loaded taxonomy. `faker` marks descriptors whose
/// concrete values are synthesized instead of drawn from the artifact corpus.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CategoryDescriptor {
    pub category: Category,
    pub descriptor: String,
    pub faker_generated: bool,
}

impl CategoryDescriptor {
    /// Canonical `category.descriptor` token.
    pub fn token(&self) -> String {
        format!("{}.{}", self.category, self.descriptor)
    }
}

// Identity is the (category, descriptor) pair; the faker flag is a taxonomy
// attribute, not part of identity.
impl PartialEq for CategoryDescriptor {
    fn eq(&self, other: &Self) -> bool {
        self.category == other.category && self.descriptor == other.descriptor
    }
}
impl Eq for CategoryDescriptor {}

impl PartialOrd for CategoryDescriptor {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for CategoryDescriptor {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.category, &self.descriptor).cmp(&(other.category, &other.descriptor))
    }
}

impl std::hash::Hash for CategoryDescriptor {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.category.hash(state);
        self.descriptor.hash(state);
    }
}

impl fmt::Display for CategoryDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.category, self.descriptor)
    }
}

/// A concrete system entity: a process, file, registry path, socket
/// endpoint, host/user value or command line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SystemEntity {
    pub kind: EntityKind,
    pub value: String,
    pub descriptor: Option<CategoryDescriptor>,
}

impl SystemEntity {
    pub fn new(kind: EntityKind, value: impl Into<String>) -> SystemEntity {
        let value = value.into();
        debug_assert!(!value.is_empty(), "entity value must be non-empty");
        SystemEntity { kind, value, descriptor: None }
    }

    pub fn with_descriptor(mut self, descriptor: CategoryDescriptor) -> SystemEntity {
        debug_assert_eq!(descriptor.category.entity_kind(), self.kind);
        self.descriptor = Some(descriptor);
        self
    }

    /// Matching key honoring Windows case rules for files and processes.
    pub fn match_key(&self) -> String {
        entity_match_key(self.kind, &self.value)
    }
}

/// Canonical lookup key for an entity value under the kind's case rules.
pub fn entity_match_key(kind: EntityKind, value: &str) -> String {
    if kind.case_insensitive() {
        value.to_ascii_lowercase()
    } else {
        value.to_string()
    }
}

/// Adversary lifecycle stage. The integer index is fixed and used by
/// campaign spec files and manifests.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Stage {
    InitialCompromise = 1,
    EstablishFoothold = 2,
    EscalatePrivileges = 3,
    InternalReconnaissance = 4,
    MoveLaterally = 5,
    MaintainPresence = 6,
    CompleteMission = 7,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::InitialCompromise,
        Stage::EstablishFoothold,
        Stage::EscalatePrivileges,
        Stage::InternalReconnaissance,
        Stage::MoveLaterally,
        Stage::MaintainPresence,
        Stage::CompleteMission,
    ];

    /// The four stages allowed inside the incubation period.
    pub const INCUBATION: [Stage; 4] = [
        Stage::EscalatePrivileges,
        Stage::InternalReconnaissance,
        Stage::MoveLaterally,
        Stage::MaintainPresence,
    ];

    pub fn index(&self) -> u8 {
        *self as u8
    }

    pub fn from_index(i: u8) -> Option<Stage> {
        match i {
            1 => Some(Stage::InitialCompromise),
            2 => Some(Stage::EstablishFoothold),
            3 => Some(Stage::EscalatePrivileges),
            4 => Some(Stage::InternalReconnaissance),
            5 => Some(Stage::MoveLaterally),
            6 => Some(Stage::MaintainPresence),
            7 => Some(Stage::CompleteMission),
            _ => None,
        }
    }

    pub fn abbrev(&self) -> &'static str {
        match self {
            Stage::InitialCompromise => "IC",
            Stage::EstablishFoothold => "EF",
            Stage::EscalatePrivileges => "EP",
            Stage::InternalReconnaissance => "IR",
            Stage::MoveLaterally => "ML",
            Stage::MaintainPresence => "MP",
            Stage::CompleteMission => "CM",
        }
    }

    pub fn full_name(&self) -> &'static str {
        match self {
            Stage::InitialCompromise => "Initial Compromise",
            Stage::EstablishFoothold => "Establish Foothold",
            Stage::EscalatePrivileges => "Escalate Privileges",
            Stage::InternalReconnaissance => "Internal Reconnaissance",
            Stage::MoveLaterally => "Move Laterally",
            Stage::MaintainPresence => "Maintain Presence",
            Stage::CompleteMission => "Complete Mission",
        }
    }

    /// Accepts the two-letter abbreviation or the full stage name.
    pub fn parse(s: &str) -> Option<Stage> {
        let norm = s.trim().to_ascii_uppercase();
        for stage in Stage::ALL {
            if norm == stage.abbrev() || norm == stage.full_name().to_ascii_uppercase() {
                return Some(stage);
            }
        }
        None
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.abbrev())
    }
}

/// Identity of an attack pattern template: lifecycle stage, ATT&CK
/// technique id and the concrete ability id implementing it.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AttackIdentification {
    pub stage: Stage,
    pub technique_id: String,
    pub ability_id: String,
}

impl AttackIdentification {
    pub fn new(stage: Stage, technique_id: impl Into<String>, ability_id: impl Into<String>) -> Self {
        AttackIdentification {
            stage,
            technique_id: technique_id.into(),
            ability_id: ability_id.into(),
        }
    }
}

/// `T\d{4}(\.\d{3})?`
pub fn is_valid_technique_id(id: &str) -> bool {
    let bytes = id.as_bytes();
    if bytes.len() != 5 && bytes.len() != 9 {
        return false;
    }
    if bytes[0] != b'T' || !bytes[1..5].iter().all(|b| b.is_ascii_digit()) {
        return false;
    }
    if bytes.len() == 9 {
        return bytes[5] == b'.' && bytes[6..9].iter().all(|b| b.is_ascii_digit());
    }
    true
}

/// Chunk position within a BIO2 span.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BioPosition {
    Begin,
    Inside,
}

impl BioPosition {
    pub fn prefix(&self) -> &'static str {
        match self {
            BioPosition::Begin => "B",
            BioPosition::Inside => "I",
        }
    }
}

/// BIO2 label of one event. An event is either entirely benign ("O" on all
/// three tags) or carries a stage/technique/ability triple with a shared
/// B-/I- position, so mixed triples cannot be constructed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Label {
    Benign,
    Attack {
        position: BioPosition,
        ident: AttackIdentification,
    },
}

impl Label {
    pub fn is_malicious(&self) -> bool {
        matches!(self, Label::Attack { .. })
    }

    pub fn stage_tag(&self) -> String {
        match self {
            Label::Benign => "O".to_string(),
            Label::Attack { position, ident } => {
                format!("{}-{}", position.prefix(), ident.stage.abbrev())
            }
        }
    }

    pub fn technique_tag(&self) -> String {
        match self {
            Label::Benign => "O".to_string(),
            Label::Attack { position, ident } => {
                format!("{}-{}", position.prefix(), ident.technique_id)
            }
        }
    }

    pub fn ability_tag(&self) -> String {
        match self {
            Label::Benign => "O".to_string(),
            Label::Attack { position, ident } => {
                format!("{}-{}", position.prefix(), ident.ability_id)
            }
        }
    }
}

/// One audit record.
///
/// `seq` is the insertion counter used to break timestamp ties so that the
/// merged stream has one deterministic order; `time_us` is absolute
/// microseconds since the Unix epoch.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub seq: u64,
    pub time_us: u64,
    pub subject: SystemEntity,
    pub pid: u32,
    pub operation: String,
    pub object: SystemEntity,
    pub result: String,
    pub detail: String,
    pub label: Label,
    pub campaign_id: Option<String>,
}

impl Event {
    /// Benign event: all-O label, no campaign id.
    pub fn benign(
        time_us: u64,
        subject: SystemEntity,
        pid: u32,
        operation: impl Into<String>,
        object: SystemEntity,
        result: impl Into<String>,
        detail: impl Into<String>,
    ) -> Event {
        Event {
            seq: 0,
            time_us,
            subject,
            pid,
            operation: operation.into(),
            object,
            result: result.into(),
            detail: detail.into(),
            label: Label::Benign,
            campaign_id: None,
        }
    }

    /// True when the label/campaign coupling invariant holds.
    pub fn label_coupling_ok(&self) -> bool {
        self.label.is_malicious() == self.campaign_id.is_some()
    }
}

/// Total order used for timeline merging: by timestamp, ties broken by the
/// insertion sequence number.
pub fn compare_events(a: &Event, b: &Event) -> Ordering {
    (a.time_us, a.seq).cmp(&(b.time_us, b.seq))
}

/// Render microseconds since the Unix epoch as ISO-8601 UTC with exactly
/// six fractional digits (the on-disk `Time` column format).
pub fn format_time_us(time_us: u64) -> String {
    let secs = (time_us / 1_000_000) as i64;
    let micros = (time_us % 1_000_000) as u32;
    match chrono::DateTime::from_timestamp(secs, micros * 1000) {
        Some(dt) => dt.format("%Y-%m-%dT%H:%M:%S%.6fZ").to_string(),
        None => format!("+{time_us}us"),
    }
}

/// Parse an ISO-8601 UTC timestamp into microseconds since the epoch.
/// Sub-microsecond digits truncate; pre-epoch times are rejected.
pub fn parse_time_us(text: &str) -> Option<u64> {
    let dt = chrono::DateTime::parse_from_rfc3339(text).ok()?;
    let micros = dt.timestamp_micros();
    u64::try_from(micros).ok()
}

/// What an operation does to its object entity, for liveness replay and
/// prerequisite classification.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObjectEffect {
    /// Establishes or (over)writes the object: the entity exists afterwards.
    Creates,
    /// Reads, queries, executes or connects to an existing object.
    Consumes,
    /// Removes the object: the entity no longer exists afterwards.
    Deletes,
}

/// One entry of the fixed Procmon-style operation vocabulary.
#[derive(Debug, Clone, Copy)]
pub struct OpInfo {
    pub name: &'static str,
    pub object_kind: EntityKind,
    pub effect: ObjectEffect,
    /// Whether the subject process stops existing after this operation.
    pub ends_subject: bool,
}

/// The documented operation vocabulary. Unknown operations in ingested logs
/// pass through verbatim but are flagged by the validator.
pub const OPERATIONS: &[OpInfo] = &[
    op("ProcessCreate", EntityKind::Process, ObjectEffect::Creates, false),
    op("ProcessExit", EntityKind::Process, ObjectEffect::Deletes, true),
    op("Load Image", EntityKind::File, ObjectEffect::Consumes, false),
    op("CreateFile", EntityKind::File, ObjectEffect::Creates, false),
    op("ReadFile", EntityKind::File, ObjectEffect::Consumes, false),
    op("WriteFile", EntityKind::File, ObjectEffect::Creates, false),
    op("CloseFile", EntityKind::File, ObjectEffect::Consumes, false),
    op("QueryOpen", EntityKind::File, ObjectEffect::Consumes, false),
    op("QueryDirectory", EntityKind::File, ObjectEffect::Consumes, false),
    op("QueryStandardInformationFile", EntityKind::File, ObjectEffect::Consumes, false),
    op("QueryBasicInformationFile", EntityKind::File, ObjectEffect::Consumes, false),
    op("QuerySecurityFile", EntityKind::File, ObjectEffect::Consumes, false),
    op("SetBasicInformationFile", EntityKind::File, ObjectEffect::Creates, false),
    op("SetRenameInformationFile", EntityKind::File, ObjectEffect::Creates, false),
    op("SetDispositionInformationFile", EntityKind::File, ObjectEffect::Deletes, false),
    op("FlushBuffersFile", EntityKind::File, ObjectEffect::Consumes, false),
    op("CreateFileMapping", EntityKind::File, ObjectEffect::Consumes, false),
    op("LockFile", EntityKind::File, ObjectEffect::Consumes, false),
    op("UnlockFile", EntityKind::File, ObjectEffect::Consumes, false),
    op("RegOpenKey", EntityKind::Registry, ObjectEffect::Consumes, false),
    op("RegCreateKey", EntityKind::Registry, ObjectEffect::Creates, false),
    op("RegQueryKey", EntityKind::Registry, ObjectEffect::Consumes, false),
    op("RegQueryValue", EntityKind::Registry, ObjectEffect::Consumes, false),
    op("RegSetValue", EntityKind::Registry, ObjectEffect::Creates, false),
    op("RegSetInfoKey", EntityKind::Registry, ObjectEffect::Creates, false),
    op("RegDeleteKey", EntityKind::Registry, ObjectEffect::Deletes, false),
    op("RegDeleteValue", EntityKind::Registry, ObjectEffect::Deletes, false),
    op("RegCloseKey", EntityKind::Registry, ObjectEffect::Consumes, false),
    op("RegEnumKey", EntityKind::Registry, ObjectEffect::Consumes, false),
    op("RegEnumValue", EntityKind::Registry, ObjectEffect::Consumes, false),
    op("TCP Connect", EntityKind::NetworkSocket, ObjectEffect::Consumes, false),
    op("TCP Disconnect", EntityKind::NetworkSocket, ObjectEffect::Deletes, false),
    op("TCP Send", EntityKind::NetworkSocket, ObjectEffect::Consumes, false),
    op("TCP Receive", EntityKind::NetworkSocket, ObjectEffect::Consumes, false),
    op("TCP Reconnect", EntityKind::NetworkSocket, ObjectEffect::Consumes, false),
    op("UDP Send", EntityKind::NetworkSocket, ObjectEffect::Consumes, false),
    op("UDP Receive", EntityKind::NetworkSocket, ObjectEffect::Consumes, false),
];

const fn op(
    name: &'static str,
    object_kind: EntityKind,
    effect: ObjectEffect,
    ends_subject: bool,
) -> OpInfo {
    OpInfo { name, object_kind, effect, ends_subject }
}

/// Vocabulary lookup; `None` for pass-through operations.
pub fn op_info(name: &str) -> Option<&'static OpInfo> {
    OPERATIONS.iter().find(|o| o.name == name)
}

/// Object entity kind implied by an operation name. Pass-through operations
/// default to `File` (the dominant Procmon object class); the same fallback
/// is used by the CSV loader and the stats reader so both paths agree.
pub fn object_kind_for_op(name: &str) -> EntityKind {
    op_info(name).map(|o| o.object_kind).unwrap_or(EntityKind::File)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ev(time_us: u64, seq: u64) -> Event {
        let mut e = Event::benign(
            time_us,
            SystemEntity::new(EntityKind::Process, "explorer.exe"),
            1420,
            "QueryOpen",
            SystemEntity::new(EntityKind::File, "C:\\Windows\\notepad.exe"),
            "SUCCESS",
            "",
        );
        e.seq = seq;
        e
    }

    #[test]
    fn earlier_timestamp_orders_first() {
        let a = ev(100, 0);
        let b = ev(200, 1);
        assert_eq!(compare_events(&a, &b), Ordering::Less);
    }

    #[test]
    fn timestamp_tie_broken_by_seq() {
        let a = ev(100, 5);
        let b = ev(100, 2);
        assert_eq!(compare_events(&b, &a), Ordering::Less);
        assert_eq!(compare_events(&a, &b), Ordering::Greater);
    }

    #[test]
    fn sorting_permutations_is_canonical() {
        // Shuffle-and-sort oracle: any permutation of a fixed 1,000-event
        // list sorts back to one identical sequence.
        let mut rng = ChaCha8Rng::seed_from_u64(0xA11CE);
        let base: Vec<Event> = (0..1000)
            .map(|i| ev(((i * 37) % 251) as u64, i as u64))
            .collect();
        let mut reference = base.clone();
        reference.sort_by(compare_events);
        for _ in 0..100 {
            let mut shuffled = base.clone();
            shuffled.shuffle(&mut rng);
            shuffled.sort_by(compare_events);
            assert_eq!(shuffled, reference);
        }
        // Idempotence: sorting again changes nothing.
        let mut twice = reference.clone();
        twice.sort_by(compare_events);
        assert_eq!(twice, reference);
    }

    #[test]
    fn total_order_trichotomy() {
        let events: Vec<Event> = (0..40).map(|i| ev((i % 7) as u64, i as u64)).collect();
        for a in &events {
            for b in &events {
                let ab = compare_events(a, b);
                let ba = compare_events(b, a);
                assert_eq!(ab, ba.reverse());
                if a.seq == b.seq && a.time_us == b.time_us {
                    assert_eq!(ab, Ordering::Equal);
                }
            }
        }
    }

    #[test]
    fn technique_id_pattern() {
        assert!(is_valid_technique_id("T1566.001"));
        assert!(is_valid_technique_id("T1082"));
        assert!(!is_valid_technique_id("T15661"));
        assert!(!is_valid_technique_id("1566.001"));
        assert!(!is_valid_technique_id("T1566.01"));
        assert!(!is_valid_technique_id("T1566."));
    }

    #[test]
    fn label_tags_are_coupled_by_construction() {
        let benign = Label::Benign;
        assert_eq!(benign.stage_tag(), "O");
        assert_eq!(benign.technique_tag(), "O");
        assert_eq!(benign.ability_tag(), "O");

        let attack = Label::Attack {
            position: BioPosition::Begin,
            ident: AttackIdentification::new(Stage::InitialCompromise, "T1566.001", "PA"),
        };
        assert_eq!(attack.stage_tag(), "B-IC");
        assert_eq!(attack.technique_tag(), "B-T1566.001");
        assert_eq!(attack.ability_tag(), "B-PA");
    }

    #[test]
    fn stage_index_mapping_is_fixed() {
        let expected = [
            (1, "IC"),
            (2, "EF"),
            (3, "EP"),
            (4, "IR"),
            (5, "ML"),
            (6, "MP"),
            (7, "CM"),
        ];
        for (idx, abbrev) in expected {
            let stage = Stage::from_index(idx).unwrap();
            assert_eq!(stage.abbrev(), abbrev);
            assert_eq!(stage.index(), idx);
        }
        assert!(Stage::from_index(0).is_none());
        assert!(Stage::from_index(8).is_none());
        // Table row check: index 3 is the Escalate-Privileges stage.
        assert_eq!(Stage::from_index(3).unwrap(), Stage::EscalatePrivileges);
        assert_eq!(Stage::parse("Initial Compromise"), Some(Stage::InitialCompromise));
        assert_eq!(Stage::parse("ic"), Some(Stage::InitialCompromise));
    }

    #[test]
    fn operation_vocabulary_lookup() {
        assert_eq!(op_info("RegSetValue").unwrap().effect, ObjectEffect::Creates);
        assert_eq!(op_info("TCP Connect").unwrap().effect, ObjectEffect::Consumes);
        assert_eq!(
            op_info("SetDispositionInformationFile").unwrap().effect,
            ObjectEffect::Deletes
        );
        assert!(op_info("FrobnicateFile").is_none());
        assert_eq!(object_kind_for_op("FrobnicateFile"), EntityKind::File);
        assert_eq!(object_kind_for_op("TCP Send"), EntityKind::NetworkSocket);
    }
}
