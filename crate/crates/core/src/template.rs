//! Attack-pattern templates: parsing, validation, serialization and the
//! abstraction of templates from labeled event traces.
//!
//! A template generalizes one ability's event trace: concrete entities are
//! replaced by `category.descriptor` placeholders, entities the trace relies
//! on become prerequisites, and artifacts the trace leaves behind become
//! outcomes. Instantiating the template with fresh artifact values yields a
//! new concrete trace of the same shape.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use thiserror::Error;

use crate::model::{
    entity_match_key, is_valid_technique_id, op_info, AttackIdentification, CategoryDescriptor,
    EntityKind, Event, ObjectEffect, Stage, SystemEntity,
};
use crate::taxonomy::{EntityDescriptorTable, Taxonomy};

/// One generalized entity slot within a template. `slot` distinguishes
/// multiple entities of the same descriptor, in first-appearance order.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Placeholder {
    pub descriptor: CategoryDescriptor,
    pub slot: u32,
}

impl Placeholder {
    pub fn new(descriptor: CategoryDescriptor) -> Placeholder {
        Placeholder { descriptor, slot: 0 }
    }

    pub fn with_slot(descriptor: CategoryDescriptor, slot: u32) -> Placeholder {
        Placeholder { descriptor, slot }
    }

    /// Canonical token: `process.browser`, `file.payload#1`.
    pub fn token(&self) -> String {
        if self.slot == 0 {
            self.descriptor.token()
        } else {
            format!("{}#{}", self.descriptor.token(), self.slot)
        }
    }

    pub fn entity_kind(&self) -> EntityKind {
        self.descriptor.category.entity_kind()
    }
}

impl fmt::Display for Placeholder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.token())
    }
}

/// Object of a template event: either a placeholder slot or a fixed literal
/// entity (well-known system paths that are not generalized).
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ObjectRef {
    Slot(Placeholder),
    Literal(SystemEntity),
}

impl ObjectRef {
    pub fn placeholder(&self) -> Option<&Placeholder> {
        match self {
            ObjectRef::Slot(p) => Some(p),
            ObjectRef::Literal(_) => None,
        }
    }
}

/// One placeholder event of a template. `relative_us` is the offset from the
/// template's first event.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateEvent {
    pub subject: Placeholder,
    pub operation: String,
    pub object: ObjectRef,
    pub relative_us: u64,
    /// Free text; may interpolate placeholders as `{category.descriptor[#slot]}`.
    pub detail_pattern: String,
}

/// An abstracted attack pattern: identification, placeholder event skeleton,
/// prerequisites, outcomes and an optional lapse hint.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttackPatternTemplate {
    pub ident: AttackIdentification,
    pub events: Vec<TemplateEvent>,
    pub prerequisites: BTreeSet<Placeholder>,
    pub outcomes: BTreeSet<Placeholder>,
    pub default_lapse_us: Option<u64>,
}

impl AttackPatternTemplate {
    /// Span from the first to the last event, in microseconds.
    pub fn span_us(&self) -> u64 {
        self.events.last().map(|e| e.relative_us).unwrap_or(0)
    }

    /// Every placeholder referenced by subjects, objects or detail patterns,
    /// in first-reference order.
    pub fn referenced_placeholders(&self) -> Vec<Placeholder> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        let mut push = |p: &Placeholder| {
            if seen.insert(p.clone()) {
                out.push(p.clone());
            }
        };
        for ev in &self.events {
            push(&ev.subject);
            if let ObjectRef::Slot(p) = &ev.object {
                push(p);
            }
            for p in parse_detail_refs(&ev.detail_pattern) {
                push(&p);
            }
        }
        out
    }
}

/// A labeled concrete trace of one ability, the input to abstraction.
#[derive(Debug, Clone)]
pub struct LabeledAttackPattern {
    pub ident: AttackIdentification,
    pub events: Vec<Event>,
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

/// A structural rule violation; violations are data, not errors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    /// No events at all.
    EmptyEvents,
    /// Placeholder used without being a prerequisite or introduced by a
    /// creating operation; carries the first offending event index.
    UnboundPlaceholder { placeholder: String, event_index: usize },
    /// Declared outcome never referenced by any event.
    DanglingOutcome { placeholder: String },
    /// Event relative time decreases.
    NonMonotonicRelative { event_index: usize },
    /// Subject placeholder is not of the process category.
    NonProcessSubject { event_index: usize },
    /// Technique id does not match `T\d{4}(\.\d{3})?`.
    BadTechniqueId { technique_id: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptyEvents => write!(f, "template has no events"),
            Violation::UnboundPlaceholder { placeholder, event_index } => write!(
                f,
                "placeholder {placeholder} first used at event {event_index} without being a prerequisite or created earlier"
            ),
            Violation::DanglingOutcome { placeholder } => {
                write!(f, "outcome {placeholder} is never referenced by any event")
            }
            Violation::NonMonotonicRelative { event_index } => {
                write!(f, "event {event_index} has a smaller relative time than its predecessor")
            }
            Violation::NonProcessSubject { event_index } => {
                write!(f, "event {event_index} subject is not a process placeholder")
            }
            Violation::BadTechniqueId { technique_id } => {
                write!(f, "technique id {technique_id:?} is malformed")
            }
        }
    }
}

/// True when the operation's object role establishes the entity. Detail
/// references never introduce entities.
fn object_creates(operation: &str) -> bool {
    matches!(op_info(operation).map(|o| o.effect), Some(ObjectEffect::Creates))
}

/// Check all structural invariants; empty result means the template is valid.
pub fn validate_template(template: &AttackPatternTemplate) -> Vec<Violation> {
    let mut violations = Vec::new();
    if template.events.is_empty() {
        violations.push(Violation::EmptyEvents);
    }
    if !is_valid_technique_id(&template.ident.technique_id) {
        violations.push(Violation::BadTechniqueId {
            technique_id: template.ident.technique_id.clone(),
        });
    }

    let mut introduced: BTreeSet<&Placeholder> = BTreeSet::new();
    let mut last_rel = 0u64;
    for (idx, ev) in template.events.iter().enumerate() {
        if idx > 0 && ev.relative_us < last_rel {
            violations.push(Violation::NonMonotonicRelative { event_index: idx });
        }
        last_rel = ev.relative_us;

        if ev.subject.descriptor.category.entity_kind() != EntityKind::Process {
            violations.push(Violation::NonProcessSubject { event_index: idx });
        }
        // Subject role always consumes.
        if !template.prerequisites.contains(&ev.subject) && !introduced.contains(&ev.subject) {
            violations.push(Violation::UnboundPlaceholder {
                placeholder: ev.subject.token(),
                event_index: idx,
            });
            introduced.insert(&ev.subject); // report once
        }
        if let ObjectRef::Slot(p) = &ev.object {
            let known = template.prerequisites.contains(p) || introduced.contains(p);
            if object_creates(&ev.operation) {
                introduced.insert(p);
            } else if !known {
                violations.push(Violation::UnboundPlaceholder {
                    placeholder: p.token(),
                    event_index: idx,
                });
                introduced.insert(p);
            }
        }
    }

    let referenced: BTreeSet<Placeholder> = template.referenced_placeholders().into_iter().collect();
    for outcome in &template.outcomes {
        if !referenced.contains(outcome) {
            violations.push(Violation::DanglingOutcome { placeholder: outcome.token() });
        }
    }
    violations
}

// ---------------------------------------------------------------------------
// Abstraction (template generation from a labeled trace)
// ---------------------------------------------------------------------------

#[derive(Debug, Error)]
pub enum AbstractError {
    #[error("attack pattern has no events")]
    EmptyPattern,
    #[error("entity ({kind}, {value:?}) is not in the descriptor table")]
    UnknownEntity { kind: EntityKind, value: String },
}

/// Generalize a labeled trace into a template.
///
/// Each concrete entity maps to one placeholder for its registered
/// descriptor (slots in first-appearance order). An entity whose first
/// appearance is in a consuming role (read, executed, connected to) becomes
/// a prerequisite; entities created or written by the trace and not deleted
/// or terminated by its end become outcomes. Relative times are offsets from
/// the first event. Registered entity values inside detail strings are
/// rewritten to placeholder references.
pub fn abstract_template(
    pattern: &LabeledAttackPattern,
    table: &EntityDescriptorTable,
) -> Result<AttackPatternTemplate, AbstractError> {
    if pattern.events.is_empty() {
        return Err(AbstractError::EmptyPattern);
    }
    let base_time = pattern.events[0].time_us;

    // Concrete entity -> placeholder. One entity never maps to two slots.
    let mut mapping: HashMap<(EntityKind, String), Placeholder> = HashMap::new();
    let mut slot_counter: BTreeMap<CategoryDescriptor, u32> = BTreeMap::new();
    let mut prerequisites: BTreeSet<Placeholder> = BTreeSet::new();
    let mut created: BTreeSet<Placeholder> = BTreeSet::new();
    let mut dead: BTreeSet<Placeholder> = BTreeSet::new();

    let resolve = |entity: &SystemEntity,
                       mapping: &mut HashMap<(EntityKind, String), Placeholder>,
                       slot_counter: &mut BTreeMap<CategoryDescriptor, u32>|
     -> Result<(Placeholder, bool), AbstractError> {
        let key = (entity.kind, entity.match_key());
        if let Some(p) = mapping.get(&key) {
            return Ok((p.clone(), false));
        }
        let descriptor = table
            .lookup(&entity.value, entity.kind)
            .ok_or_else(|| AbstractError::UnknownEntity {
                kind: entity.kind,
                value: entity.value.clone(),
            })?
            .clone();
        let slot = slot_counter.entry(descriptor.clone()).or_insert(0);
        let placeholder = Placeholder::with_slot(descriptor, *slot);
        *slot += 1;
        mapping.insert(key, placeholder.clone());
        Ok((placeholder, true))
    };

    let mut events = Vec::with_capacity(pattern.events.len());
    for ev in &pattern.events {
        let (subject, subject_new) = resolve(&ev.subject, &mut mapping, &mut slot_counter)?;
        if subject_new {
            // A process acting as subject must already exist.
            prerequisites.insert(subject.clone());
        }
        let (object, object_new) = resolve(&ev.object, &mut mapping, &mut slot_counter)?;
        let effect = op_info(&ev.operation).map(|o| o.effect).unwrap_or(ObjectEffect::Consumes);
        match effect {
            ObjectEffect::Creates => {
                created.insert(object.clone());
                dead.remove(&object);
            }
            ObjectEffect::Consumes => {
                if object_new {
                    prerequisites.insert(object.clone());
                }
            }
            ObjectEffect::Deletes => {
                if object_new {
                    prerequisites.insert(object.clone());
                }
                dead.insert(object.clone());
            }
        }
        if op_info(&ev.operation).map(|o| o.ends_subject).unwrap_or(false) {
            dead.insert(subject.clone());
        }

        let detail_pattern = abstract_detail(&ev.detail, table, &mut mapping, &mut slot_counter);
        events.push(TemplateEvent {
            subject,
            operation: ev.operation.clone(),
            object: ObjectRef::Slot(object),
            relative_us: ev.time_us - base_time,
            detail_pattern,
        });
    }

    let outcomes: BTreeSet<Placeholder> =
        created.into_iter().filter(|p| !dead.contains(p)).collect();

    Ok(AttackPatternTemplate {
        ident: pattern.ident.clone(),
        events,
        prerequisites,
        outcomes,
        default_lapse_us: None,
    })
}

/// Rewrite registered entity values inside a detail string to placeholder
/// references. Longest values first so substrings do not shadow full values.
/// Detail-only entities get placeholders but never become prerequisites or
/// outcomes.
fn abstract_detail(
    detail: &str,
    table: &EntityDescriptorTable,
    mapping: &mut HashMap<(EntityKind, String), Placeholder>,
    slot_counter: &mut BTreeMap<CategoryDescriptor, u32>,
) -> String {
    if detail.is_empty() {
        return String::new();
    }
    let mut entries: Vec<(EntityKind, &str, &CategoryDescriptor)> = table.iter().collect();
    entries.sort_by(|a, b| b.1.len().cmp(&a.1.len()).then(a.1.cmp(b.1)).then(a.0.cmp(&b.0)));

    let mut out = detail.to_string();
    for (kind, value, descriptor) in entries {
        let haystack_has = if kind.case_insensitive() {
            out.to_ascii_lowercase().contains(&value.to_ascii_lowercase())
        } else {
            out.contains(value)
        };
        if !haystack_has {
            continue;
        }
        let key = (kind, entity_match_key(kind, value));
        let placeholder = mapping.entry(key).or_insert_with(|| {
            let slot = slot_counter.entry(descriptor.clone()).or_insert(0);
            let p = Placeholder::with_slot(descriptor.clone(), *slot);
            *slot += 1;
            p
        });
        out = replace_value(&out, value, &format!("{{{}}}", placeholder.token()), kind.case_insensitive());
    }
    out
}

fn replace_value(haystack: &str, needle: &str, replacement: &str, case_insensitive: bool) -> String {
    if !case_insensitive {
        return haystack.replace(needle, replacement);
    }
    let lower_h = haystack.to_ascii_lowercase();
    let lower_n = needle.to_ascii_lowercase();
    let mut out = String::with_capacity(haystack.len());
    let mut pos = 0;
    while let Some(found) = lower_h[pos..].find(&lower_n) {
        let at = pos + found;
        out.push_str(&haystack[pos..at]);
        out.push_str(replacement);
        pos = at + needle.len();
    }
    out.push_str(&haystack[pos..]);
    out
}

/// Placeholder references inside a detail pattern.
pub fn parse_detail_refs(detail: &str) -> Vec<Placeholder> {
    let mut refs = Vec::new();
    let mut rest = detail;
    while let Some(start) = rest.find('{') {
        let Some(end) = rest[start..].find('}') else { break };
        let token = &rest[start + 1..start + end];
        if let Ok(p) = parse_placeholder_token(token, Taxonomy::builtin()) {
            refs.push(p);
        }
        rest = &rest[start + end + 1..];
    }
    refs
}

// ---------------------------------------------------------------------------
// Text format
// ---------------------------------------------------------------------------

#[derive(Debug, Error)]
pub enum TemplateParseError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("missing or empty field: {field}")]
    Schema { field: &'static str },
    #[error("template is invalid: {}", format_violations(.0))]
    Invalid(Vec<Violation>),
}

fn format_violations(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

fn parse_placeholder_token(token: &str, taxonomy: &Taxonomy) -> Result<Placeholder, String> {
    let (pair, slot) = match token.rsplit_once('#') {
        Some((pair, slot_str)) => {
            let slot: u32 = slot_str.parse().map_err(|_| format!("bad slot in {token:?}"))?;
            (pair, slot)
        }
        None => (token, 0),
    };
    let descriptor = taxonomy
        .descriptor_from_token(pair)
        .map_err(|e| e.to_string())?;
    Ok(Placeholder::with_slot(descriptor, slot))
}

/// Split a line into whitespace-separated tokens with double-quote support;
/// returns the tokens and the remainder after `max_tokens` of them.
fn tokenize(line: &str, max_tokens: usize) -> (Vec<String>, String) {
    let mut tokens = Vec::new();
    let mut chars = line.char_indices().peekable();
    while tokens.len() < max_tokens {
        while let Some(&(_, c)) = chars.peek() {
            if c.is_whitespace() {
                chars.next();
            } else {
                break;
            }
        }
        let Some(&(start, first)) = chars.peek() else { break };
        let mut token = String::new();
        if first == '"' {
            chars.next();
            for (_, c) in chars.by_ref() {
                if c == '"' {
                    break;
                }
                token.push(c);
            }
        } else {
            let mut end = start;
            for (i, c) in chars.by_ref() {
                if c.is_whitespace() {
                    break;
                }
                end = i + c.len_utf8();
            }
            token.push_str(&line[start..end]);
        }
        tokens.push(token);
    }
    let rest: String = chars.map(|(_, c)| c).collect();
    (tokens, rest.trim().to_string())
}

fn quote_token(token: &str) -> String {
    if token.chars().any(char::is_whitespace) || token.is_empty() {
        format!("\"{token}\"")
    } else {
        token.to_string()
    }
}

fn parse_object_token(token: &str, taxonomy: &Taxonomy) -> Result<ObjectRef, String> {
    if let Some((kind_str, value)) = token.split_once(':') {
        if let Some(kind) = EntityKind::parse(kind_str) {
            if value.is_empty() {
                return Err(format!("literal {token:?} has an empty value"));
            }
            return Ok(ObjectRef::Literal(SystemEntity::new(kind, value)));
        }
    }
    parse_placeholder_token(token, taxonomy).map(ObjectRef::Slot)
}

fn object_token(object: &ObjectRef) -> String {
    match object {
        ObjectRef::Slot(p) => p.token(),
        ObjectRef::Literal(e) => format!("{}:{}", e.kind, e.value),
    }
}

/// Parse a template document. The result always passes
/// [`validate_template`]; structurally broken templates are rejected.
pub fn parse_template(text: &str, taxonomy: &Taxonomy) -> Result<AttackPatternTemplate, TemplateParseError> {
    #[derive(PartialEq)]
    enum Section {
        Header,
        Prerequisites,
        Events,
        Outcomes,
    }

    let mut stage: Option<Stage> = None;
    let mut technique: Option<String> = None;
    let mut ability: Option<String> = None;
    let mut lapse: Option<u64> = None;
    let mut prerequisites = BTreeSet::new();
    let mut outcomes = BTreeSet::new();
    let mut events: Vec<TemplateEvent> = Vec::new();
    let mut saw_events_section = false;
    let mut section = Section::Header;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let syntax = |message: String| TemplateParseError::Syntax { line: line_no, message };

        match line {
            "prerequisites:" => {
                section = Section::Prerequisites;
                continue;
            }
            "events:" => {
                section = Section::Events;
                saw_events_section = true;
                continue;
            }
            "outcomes:" => {
                section = Section::Outcomes;
                continue;
            }
            _ => {}
        }

        match section {
            Section::Header => {
                let (key, value) = line
                    .split_once(':')
                    .ok_or_else(|| syntax(format!("expected `key: value`, got {line:?}")))?;
                let value = value.trim();
                match key.trim() {
                    "stage" => {
                        stage = Some(
                            Stage::parse(value)
                                .ok_or_else(|| syntax(format!("unknown stage {value:?}")))?,
                        )
                    }
                    "technique" => technique = Some(value.to_string()),
                    "ability" => ability = Some(value.to_string()),
                    "lapse" => {
                        lapse = Some(
                            value
                                .parse()
                                .map_err(|_| syntax(format!("bad lapse value {value:?}")))?,
                        )
                    }
                    other => return Err(syntax(format!("unknown header key {other:?}"))),
                }
            }
            Section::Prerequisites => {
                prerequisites
                    .insert(parse_placeholder_token(line, taxonomy).map_err(syntax)?);
            }
            Section::Outcomes => {
                outcomes.insert(parse_placeholder_token(line, taxonomy).map_err(syntax)?);
            }
            Section::Events => {
                let (tokens, detail) = tokenize(line, 4);
                if tokens.len() < 4 {
                    return Err(syntax(
                        "expected: <rel_us> <subject> <operation> <object> [detail...]".into(),
                    ));
                }
                let relative_us: u64 = tokens[0]
                    .parse()
                    .map_err(|_| syntax(format!("bad relative time {:?}", tokens[0])))?;
                let subject = parse_placeholder_token(&tokens[1], taxonomy).map_err(syntax)?;
                if subject.descriptor.category.entity_kind() != EntityKind::Process {
                    return Err(syntax(format!(
                        "subject {} is not a process placeholder",
                        subject.token()
                    )));
                }
                let object = parse_object_token(&tokens[3], taxonomy).map_err(syntax)?;
                events.push(TemplateEvent {
                    subject,
                    operation: tokens[2].clone(),
                    object,
                    relative_us,
                    detail_pattern: detail,
                });
            }
        }
    }

    let stage = stage.ok_or(TemplateParseError::Schema { field: "stage" })?;
    let technique = technique.ok_or(TemplateParseError::Schema { field: "technique" })?;
    let ability = ability.ok_or(TemplateParseError::Schema { field: "ability" })?;
    if ability.is_empty() {
        return Err(TemplateParseError::Schema { field: "ability" });
    }
    if !saw_events_section || events.is_empty() {
        return Err(TemplateParseError::Schema { field: "events" });
    }

    let template = AttackPatternTemplate {
        ident: AttackIdentification::new(stage, technique, ability),
        events,
        prerequisites,
        outcomes,
        default_lapse_us: lapse,
    };
    let violations = validate_template(&template);
    if !violations.is_empty() {
        return Err(TemplateParseError::Invalid(violations));
    }
    Ok(template)
}

/// Canonical, deterministic rendering: fixed header order, sorted
/// prerequisite and outcome lists, events in order.
pub fn serialize_template(template: &AttackPatternTemplate) -> String {
    let mut out = String::new();
    out.push_str(&format!("stage: {}\n", template.ident.stage.full_name()));
    out.push_str(&format!("technique: {}\n", template.ident.technique_id));
    out.push_str(&format!("ability: {}\n", template.ident.ability_id));
    if let Some(lapse) = template.default_lapse_us {
        out.push_str(&format!("lapse: {lapse}\n"));
    }
    out.push_str("prerequisites:\n");
    for p in &template.prerequisites {
        out.push_str(&format!("  {}\n", p.token()));
    }
    out.push_str("events:\n");
    for ev in &template.events {
        let mut line = format!(
            "  {} {} {} {}",
            ev.relative_us,
            quote_token(&ev.subject.token()),
            quote_token(&ev.operation),
            quote_token(&object_token(&ev.object)),
        );
        if !ev.detail_pattern.is_empty() {
            line.push(' ');
            line.push_str(&ev.detail_pattern);
        }
        line.push('\n');
        out.push_str(&line);
    }
    out.push_str("outcomes:\n");
    for p in &template.outcomes {
        out.push_str(&format!("  {}\n", p.token()));
    }
    out
}

// ---------------------------------------------------------------------------
// Repository of shipped templates
// ---------------------------------------------------------------------------

/// A set of parsed templates indexed by ability id.
#[derive(Debug, Clone, Default)]
pub struct TemplateRepository {
    templates: BTreeMap<String, std::sync::Arc<AttackPatternTemplate>>,
}

#[derive(Debug, Error)]
pub enum RepositoryError {
    #[error("template {name}: {source}")]
    Parse {
        name: String,
        #[source]
        source: TemplateParseError,
    },
    #[error("duplicate ability id {ability}")]
    DuplicateAbility { ability: String },
}

impl TemplateRepository {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, template: AttackPatternTemplate) -> Result<(), RepositoryError> {
        let ability = template.ident.ability_id.clone();
        if self.templates.contains_key(&ability) {
            return Err(RepositoryError::DuplicateAbility { ability });
        }
        self.templates.insert(ability, std::sync::Arc::new(template));
        Ok(())
    }

    /// Parse and add named template documents.
    pub fn load_documents<'a>(
        &mut self,
        docs: impl IntoIterator<Item = (&'a str, &'a str)>,
        taxonomy: &Taxonomy,
    ) -> Result<(), RepositoryError> {
        for (name, text) in docs {
            let template = parse_template(text, taxonomy)
                .map_err(|source| RepositoryError::Parse { name: name.to_string(), source })?;
            self.insert(template)?;
        }
        Ok(())
    }

    pub fn get(&self, ability_id: &str) -> Option<&std::sync::Arc<AttackPatternTemplate>> {
        self.templates.get(ability_id)
    }

    /// Templates of a given stage, in deterministic (ability id) order.
    pub fn by_stage(&self, stage: Stage) -> Vec<&std::sync::Arc<AttackPatternTemplate>> {
        self.templates.values().filter(|t| t.ident.stage == stage).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = &std::sync::Arc<AttackPatternTemplate>> {
        self.templates.values()
    }

    pub fn len(&self) -> usize {
        self.templates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }
}
