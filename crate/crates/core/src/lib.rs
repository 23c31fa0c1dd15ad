//! Deterministic generation of labeled synthetic system-audit logs.
//!
//! The library composes three ingredients into one time-ordered,
//! Procmon-style event stream: background noise, benign activity recordings,
//! and multi-stage attack campaigns planned from a repository of
//! attack-pattern templates. Every malicious event carries a BIO2
//! stage/technique/ability label triple emitted into a sidecar file, and
//! every run is reproducible byte-for-byte from its configuration and seed.

pub mod artifact;
pub mod builtin;
pub mod composer;
pub mod grammar;
pub mod model;
pub mod planner;
pub mod taxonomy;
pub mod template;

pub use model::{
    compare_events, AttackIdentification, Category, CategoryDescriptor, EntityKind, Event, Label,
    Stage, SystemEntity,
};
pub use taxonomy::{EntityDescriptorTable, Taxonomy};
pub use template::{
    abstract_template, parse_template, serialize_template, validate_template,
    AttackPatternTemplate, LabeledAttackPattern, Placeholder, TemplateRepository,
};
