//! Descriptor taxonomy and the known-entity table.
//!
//! The taxonomy is the closed list of (category, descriptor) pairs every
//! placeholder and artifact pool must come from. A default copy ships
//! embedded in the binary and can be swapped for a user-supplied file.
//! The [`EntityDescriptorTable`] maps concrete entity values to their
//! descriptors and backs trace abstraction.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use thiserror::Error;

use crate::model::{entity_match_key, Category, CategoryDescriptor, EntityKind};

/// Embedded default taxonomy.
pub const BUILTIN_TAXONOMY: &str = include_str!("../assets/taxonomy.tsv");

#[derive(Debug, Error)]
pub enum TaxonomyError {
    #[error("taxonomy line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("taxonomy line {line}: duplicate pair {token}")]
    Duplicate { line: usize, token: String },
    #[error("unknown descriptor pair {token}")]
    UnknownPair { token: String },
    #[error("taxonomy is empty")]
    Empty,
}

/// The loaded descriptor taxonomy: which (category, descriptor) pairs exist
/// and which of them are faker-generated.
#[derive(Debug, Clone)]
pub struct Taxonomy {
    entries: BTreeMap<(Category, String), bool>,
}

/// Canonical descriptor spelling: lowercase, separators collapsed to `_`,
/// any parenthetical qualifier dropped ("Payload Copy" -> "payload_copy",
/// "ADS(Alternate data streams)" -> "ads").
pub fn canonical_descriptor(raw: &str) -> String {
    let cut = raw.split('(').next().unwrap_or(raw).trim();
    let mut out = String::with_capacity(cut.len());
    let mut last_sep = false;
    for ch in cut.chars() {
        if ch.is_alphanumeric() {
            out.extend(ch.to_lowercase());
            last_sep = false;
        } else if !last_sep && !out.is_empty() {
            out.push('_');
            last_sep = true;
        }
    }
    while out.ends_with('_') {
        out.pop();
    }
    out
}

impl Taxonomy {
    /// The embedded default taxonomy, parsed once.
    pub fn builtin() -> &'static Taxonomy {
        static BUILTIN: OnceLock<Taxonomy> = OnceLock::new();
        BUILTIN.get_or_init(|| Taxonomy::parse(BUILTIN_TAXONOMY).expect("embedded taxonomy parses"))
    }

    /// Parse a taxonomy document: one `category <TAB> descriptor <TAB> flag`
    /// row per line, `#` comments and blank lines ignored.
    pub fn parse(text: &str) -> Result<Taxonomy, TaxonomyError> {
        let mut entries = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let mut fields = trimmed.split('\t').map(str::trim);
            let (cat, desc, flag) = match (fields.next(), fields.next(), fields.next()) {
                (Some(c), Some(d), Some(f)) => (c, d, f),
                _ => {
                    return Err(TaxonomyError::Syntax {
                        line,
                        message: "expected: category<TAB>descriptor<TAB>flag".into(),
                    })
                }
            };
            let category = Category::parse(cat).ok_or_else(|| TaxonomyError::Syntax {
                line,
                message: format!("unknown category {cat:?}"),
            })?;
            let descriptor = canonical_descriptor(desc);
            if descriptor.is_empty() {
                return Err(TaxonomyError::Syntax { line, message: "empty descriptor".into() });
            }
            let faker = match flag {
                "*" => true,
                "-" => false,
                other => {
                    return Err(TaxonomyError::Syntax {
                        line,
                        message: format!("flag must be '*' or '-', got {other:?}"),
                    })
                }
            };
            if entries.insert((category, descriptor.clone()), faker).is_some() {
                return Err(TaxonomyError::Duplicate {
                    line,
                    token: format!("{category}.{descriptor}"),
                });
            }
        }
        if entries.is_empty() {
            return Err(TaxonomyError::Empty);
        }
        Ok(Taxonomy { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Build a validated descriptor for a (category, name) pair; rejects
    /// pairs outside the taxonomy.
    pub fn descriptor(&self, category: Category, name: &str) -> Result<CategoryDescriptor, TaxonomyError> {
        let descriptor = canonical_descriptor(name);
        match self.entries.get(&(category, descriptor.clone())) {
            Some(&faker) => Ok(CategoryDescriptor { category, descriptor, faker_generated: faker }),
            None => Err(TaxonomyError::UnknownPair { token: format!("{category}.{descriptor}") }),
        }
    }

    /// Parse a `category.descriptor` token ("process.browser").
    pub fn descriptor_from_token(&self, token: &str) -> Result<CategoryDescriptor, TaxonomyError> {
        let (cat, name) = token
            .split_once('.')
            .ok_or_else(|| TaxonomyError::UnknownPair { token: token.to_string() })?;
        let category = Category::parse(cat.trim())
            .ok_or_else(|| TaxonomyError::UnknownPair { token: token.to_string() })?;
        self.descriptor(category, name)
    }

    /// All pairs in deterministic order.
    pub fn descriptors(&self) -> impl Iterator<Item = CategoryDescriptor> + '_ {
        self.entries.iter().map(|((category, descriptor), &faker)| CategoryDescriptor {
            category: *category,
            descriptor: descriptor.clone(),
            faker_generated: faker,
        })
    }
}

#[derive(Debug, Error)]
pub enum EntityTableError {
    #[error("entity table line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("entity table line {line}: duplicate entry for ({kind}, {value})")]
    Duplicate { line: usize, kind: EntityKind, value: String },
    #[error(transparent)]
    Taxonomy(#[from] TaxonomyError),
}

/// Known system entities and their descriptors, keyed by (kind, value) with
/// Windows case rules applied to file and process values.
#[derive(Debug, Clone, Default)]
pub struct EntityDescriptorTable {
    entries: BTreeMap<(EntityKind, String), CategoryDescriptor>,
}

impl EntityDescriptorTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Parse a `kind <TAB> value <TAB> category.descriptor` document.
    pub fn parse(text: &str, taxonomy: &Taxonomy) -> Result<Self, EntityTableError> {
        let mut table = EntityDescriptorTable::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let mut fields = trimmed.split('\t').map(str::trim);
            let (kind, value, token) = match (fields.next(), fields.next(), fields.next()) {
                (Some(k), Some(v), Some(t)) => (k, v, t),
                _ => {
                    return Err(EntityTableError::Syntax {
                        line,
                        message: "expected: kind<TAB>value<TAB>category.descriptor".into(),
                    })
                }
            };
            let kind = EntityKind::parse(kind).ok_or_else(|| EntityTableError::Syntax {
                line,
                message: format!("unknown entity kind {kind:?}"),
            })?;
            if value.is_empty() {
                return Err(EntityTableError::Syntax { line, message: "empty value".into() });
            }
            let descriptor = taxonomy.descriptor_from_token(token)?;
            table.insert(kind, value, descriptor).map_err(|_| EntityTableError::Duplicate {
                line,
                kind,
                value: value.to_string(),
            })?;
        }
        Ok(table)
    }

    /// Register an entity; errors on duplicate (kind, value) keys.
    pub fn insert(
        &mut self,
        kind: EntityKind,
        value: &str,
        descriptor: CategoryDescriptor,
    ) -> Result<(), ()> {
        let key = (kind, entity_match_key(kind, value));
        if self.entries.contains_key(&key) {
            return Err(());
        }
        self.entries.insert(key, descriptor);
        Ok(())
    }

    /// Descriptor registered for (kind, value), if any. Lookup is
    /// case-insensitive for file paths and process names.
    pub fn lookup(&self, value: &str, kind: EntityKind) -> Option<&CategoryDescriptor> {
        self.entries.get(&(kind, entity_match_key(kind, value)))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// (kind, stored key, descriptor) triples in deterministic order.
    pub fn iter(&self) -> impl Iterator<Item = (EntityKind, &str, &CategoryDescriptor)> {
        self.entries.iter().map(|((kind, value), d)| (*kind, value.as_str(), d))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// The full expected pair list, spelled out so a drifting asset fails
    /// loudly. 34 pairs, 10 of them faker-backed; iteration order follows
    /// the category enum (file, network, cmdline, process, registry, system).
    const EXPECTED: &[(&str, bool)] = &[
        ("file.ads", false),
        ("file.exfiltration_folder", false),
        ("file.payload", false),
        ("file.payload_copy", false),
        ("file.phishing", false),
        ("file.recon", false),
        ("file.script", false),
        ("file.shortcut", false),
        ("network.c2", false),
        ("network.host_ip", true),
        ("network.host_machine", true),
        ("network.mail_server", false),
        ("network.payload_url", false),
        ("network.script_url", false),
        ("cmdline.command", false),
        ("cmdline.content", false),
        ("cmdline.message", false),
        ("process.browser", true),
        ("process.explorer", true),
        ("process.payload", false),
        ("process.phishing", false),
        ("registry.key", false),
        ("registry.subkey", false),
        ("system.firewall_port", true),
        ("system.firewall_rule", false),
        ("system.host", true),
        ("system.password", true),
        ("system.product", false),
        ("system.proxy_port", true),
        ("system.service", false),
        ("system.task", false),
        ("system.time", true),
        ("system.user", true),
        ("system.userdomain", false),
    ];

    #[test]
    fn builtin_taxonomy_matches_expected_pairs() {
        let tax = Taxonomy::builtin();
        let got: Vec<(String, bool)> =
            tax.descriptors().map(|d| (d.token(), d.faker_generated)).collect();
        let want: Vec<(String, bool)> =
            EXPECTED.iter().map(|(t, f)| (t.to_string(), *f)).collect();
        assert_eq!(got, want);
        assert_eq!(tax.len(), 34);
        assert_eq!(got.iter().filter(|(_, f)| *f).count(), 10);
    }

    #[test]
    fn unknown_pairs_are_rejected() {
        let tax = Taxonomy::builtin();
        assert!(tax.descriptor(Category::File, "banana").is_err());
        assert!(tax.descriptor_from_token("file.banana").is_err());
        assert!(tax.descriptor_from_token("fruit.payload").is_err());
    }

    #[test]
    fn descriptor_spelling_normalizes() {
        let tax = Taxonomy::builtin();
        assert_eq!(tax.descriptor(Category::File, "Payload Copy").unwrap().descriptor, "payload_copy");
        assert_eq!(
            tax.descriptor(Category::File, "ADS(Alter. data streams)").unwrap().descriptor,
            "ads"
        );
        assert_eq!(tax.descriptor(Category::Network, "Mail Server").unwrap().token(), "network.mail_server");
        assert!(tax.descriptor(Category::Process, "Browser").unwrap().faker_generated);
    }

    fn sample_table() -> EntityDescriptorTable {
        let tax = Taxonomy::builtin();
        let mut table = EntityDescriptorTable::new();
        table
            .insert(EntityKind::Process, "firefox.exe", tax.descriptor(Category::Process, "browser").unwrap())
            .unwrap();
        table
            .insert(EntityKind::File, "IOC_09_11.rar", tax.descriptor(Category::File, "phishing").unwrap())
            .unwrap();
        table
            .insert(
                EntityKind::NetworkSocket,
                "mail.victim.example:993",
                tax.descriptor(Category::Network, "mail_server").unwrap(),
            )
            .unwrap();
        table
    }

    #[test]
    fn lookup_finds_registered_descriptors() {
        let table = sample_table();
        assert_eq!(
            table.lookup("firefox.exe", EntityKind::Process).unwrap().token(),
            "process.browser"
        );
        assert_eq!(
            table.lookup("IOC_09_11.rar", EntityKind::File).unwrap().token(),
            "file.phishing"
        );
        assert!(table.lookup("nonexistent_entity_xyz", EntityKind::File).is_none());
    }

    #[test]
    fn lookup_case_rules_follow_entity_kind() {
        let table = sample_table();
        // Case-insensitive for files and processes.
        assert!(table.lookup("FIREFOX.EXE", EntityKind::Process).is_some());
        assert!(table.lookup("ioc_09_11.RAR", EntityKind::File).is_some());
        // Case-sensitive for sockets.
        assert!(table.lookup("mail.victim.example:993", EntityKind::NetworkSocket).is_some());
        assert!(table.lookup("MAIL.VICTIM.EXAMPLE:993", EntityKind::NetworkSocket).is_none());
    }

    #[test]
    fn duplicate_keys_are_rejected() {
        let tax = Taxonomy::builtin();
        let mut table = sample_table();
        let d = tax.descriptor(Category::Process, "payload").unwrap();
        assert!(table.insert(EntityKind::Process, "FireFox.exe", d).is_err());
    }
}
