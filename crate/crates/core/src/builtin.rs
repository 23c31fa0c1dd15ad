//! Embedded default assets: the template corpus, artifact corpus, known
//! entity table and sample benign/background recordings. Everything here can
//! be overridden from files at run time; the embedded copies make the
//! library usable with zero external inputs.

use crate::artifact::ArtifactCorpus;
use crate::taxonomy::{EntityDescriptorTable, Taxonomy};
use crate::template::TemplateRepository;

pub const CORPUS_TSV: &str = include_str!("../assets/corpus.tsv");
pub const ENTITIES_TSV: &str = include_str!("../assets/entities.tsv");
pub const BACKGROUND_CSV: &str = include_str!("../assets/background.csv");
pub const BENIGN_BROWSING_CSV: &str = include_str!("../assets/benign_browsing.csv");
pub const BENIGN_OFFICE_CSV: &str = include_str!("../assets/benign_office.csv");

macro_rules! tmpl {
    ($name:literal) => {
        ($name, include_str!(concat!("../assets/templates/", $name, ".tmpl")))
    };
}

/// All shipped attack-pattern template documents, by file stem.
pub const TEMPLATE_DOCS: &[(&str, &str)] = &[
    tmpl!("atm1"),
    tmpl!("buac"),
    tmpl!("df2"),
    tmpl!("dls"),
    tmpl!("dmt"),
    tmpl!("ews"),
    tmpl!("exf1"),
    tmpl!("fdd1"),
    tmpl!("hw"),
    tmpl!("itt3"),
    tmpl!("la1"),
    tmpl!("lg1"),
    tmpl!("mfe"),
    tmpl!("mr3"),
    tmpl!("mtos1"),
    tmpl!("nsd"),
    tmpl!("pa"),
    tmpl!("pei"),
    tmpl!("ps1"),
    tmpl!("ps2"),
    tmpl!("ras1"),
    tmpl!("rdp"),
    tmpl!("rk2"),
    tmpl!("rk3"),
    tmpl!("rk4"),
    tmpl!("sd1"),
    tmpl!("sid"),
    tmpl!("sm1"),
    tmpl!("smb1"),
    tmpl!("sncd3"),
    tmpl!("sncd6"),
    tmpl!("sncod1"),
    tmpl!("spl"),
    tmpl!("ssd3"),
    tmpl!("st1"),
    tmpl!("st2"),
    tmpl!("ud2"),
    tmpl!("wmi5"),
    tmpl!("wp"),
];

/// Parse the embedded template corpus.
pub fn repository() -> TemplateRepository {
    let mut repo = TemplateRepository::new();
    repo.load_documents(TEMPLATE_DOCS.iter().copied(), Taxonomy::builtin())
        .expect("embedded templates parse");
    repo
}

/// Parse the embedded artifact corpus.
pub fn corpus() -> ArtifactCorpus {
    let (corpus, diagnostics) =
        ArtifactCorpus::ingest(CORPUS_TSV, Taxonomy::builtin()).expect("embedded corpus parses");
    assert!(diagnostics.is_empty(), "embedded corpus has rejected rows: {diagnostics:?}");
    corpus
}

/// Parse the embedded known-entity table.
pub fn entity_table() -> EntityDescriptorTable {
    EntityDescriptorTable::parse(ENTITIES_TSV, Taxonomy::builtin())
        .expect("embedded entity table parses")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{op_info, ObjectEffect, Stage};
    use crate::template::{validate_template, ObjectRef, Placeholder};
    use std::collections::BTreeSet;

    #[test]
    fn all_templates_parse_and_validate() {
        let repo = repository();
        assert_eq!(repo.len(), TEMPLATE_DOCS.len());
        for template in repo.iter() {
            assert!(
                validate_template(template).is_empty(),
                "template {} has violations",
                template.ident.ability_id
            );
        }
    }

    #[test]
    fn every_stage_has_at_least_one_template() {
        let repo = repository();
        for stage in Stage::ALL {
            assert!(!repo.by_stage(stage).is_empty(), "no templates for {stage}");
        }
    }

    #[test]
    fn roundtrip_over_full_corpus() {
        // parse(serialize(t)) == t, and serialize is canonical bytes, for
        // every shipped document.
        let tax = Taxonomy::builtin();
        for (name, doc) in TEMPLATE_DOCS {
            let t = crate::template::parse_template(doc, tax)
                .unwrap_or_else(|e| panic!("{name}: {e}"));
            let s = crate::template::serialize_template(&t);
            let t2 = crate::template::parse_template(&s, tax).unwrap();
            assert_eq!(t, t2, "roundtrip mismatch for {name}");
            assert_eq!(s, crate::template::serialize_template(&t2));
        }
    }

    /// Declared prerequisites and outcomes must equal what trace abstraction
    /// would derive from the event list: prerequisites are exactly the
    /// placeholders whose first subject/object appearance consumes, and
    /// outcomes are exactly the created-and-not-deleted placeholders. This
    /// keeps instantiate-then-abstract a fixed point over the corpus.
    #[test]
    fn declared_sets_match_derived_sets() {
        let repo = repository();
        for template in repo.iter() {
            let name = &template.ident.ability_id;
            let mut seen: BTreeSet<Placeholder> = BTreeSet::new();
            let mut derived_prereqs: BTreeSet<Placeholder> = BTreeSet::new();
            let mut created: BTreeSet<Placeholder> = BTreeSet::new();
            let mut dead: BTreeSet<Placeholder> = BTreeSet::new();
            for ev in &template.events {
                if seen.insert(ev.subject.clone()) {
                    derived_prereqs.insert(ev.subject.clone());
                }
                if let ObjectRef::Slot(p) = &ev.object {
                    let effect =
                        op_info(&ev.operation).map(|o| o.effect).unwrap_or(ObjectEffect::Consumes);
                    let first = seen.insert(p.clone());
                    match effect {
                        ObjectEffect::Creates => {
                            created.insert(p.clone());
                            dead.remove(p);
                        }
                        ObjectEffect::Consumes => {
                            if first {
                                derived_prereqs.insert(p.clone());
                            }
                        }
                        ObjectEffect::Deletes => {
                            if first {
                                derived_prereqs.insert(p.clone());
                            }
                            dead.insert(p.clone());
                        }
                    }
                }
                if op_info(&ev.operation).map(|o| o.ends_subject).unwrap_or(false) {
                    dead.insert(ev.subject.clone());
                }
            }
            let derived_outcomes: BTreeSet<Placeholder> =
                created.difference(&dead).cloned().collect();
            assert_eq!(
                template.prerequisites, derived_prereqs,
                "{name}: declared prerequisites diverge from event roles"
            );
            assert_eq!(
                template.outcomes, derived_outcomes,
                "{name}: declared outcomes diverge from liveness"
            );
        }
    }

    /// Slots must be dense per descriptor in first-appearance order, or
    /// abstraction would renumber them.
    #[test]
    fn slots_are_dense_in_first_appearance_order() {
        let repo = repository();
        for template in repo.iter() {
            let mut next: std::collections::BTreeMap<String, u32> = Default::default();
            let mut assigned: BTreeSet<Placeholder> = BTreeSet::new();
            for p in template.referenced_placeholders() {
                if assigned.insert(p.clone()) {
                    let counter = next.entry(p.descriptor.token()).or_insert(0);
                    assert_eq!(
                        p.slot, *counter,
                        "{}: slot {} of {} out of order",
                        template.ident.ability_id,
                        p.slot,
                        p.descriptor.token()
                    );
                    *counter += 1;
                }
            }
        }
    }

    #[test]
    fn embedded_corpus_and_entities_load() {
        let corpus = corpus();
        let tax = Taxonomy::builtin();
        let payload = tax.descriptor_from_token("file.payload").unwrap();
        assert!(corpus
            .pool_values(&payload)
            .contains(&"twainResolver.lnk"));
        let table = entity_table();
        assert_eq!(
            table.lookup("firefox.exe", crate::model::EntityKind::Process).unwrap().token(),
            "process.browser"
        );
        assert_eq!(
            table.lookup("IOC_09_11.rar", crate::model::EntityKind::File).unwrap().token(),
            "file.phishing"
        );
    }

    #[test]
    fn benign_assets_load() {
        for csv in [BACKGROUND_CSV, BENIGN_BROWSING_CSV, BENIGN_OFFICE_CSV] {
            let log = crate::composer::load_benign_log(csv.as_bytes(), 0, 0).unwrap();
            assert!(log.events.len() > 100);
            assert!(log.length_us > 0);
        }
    }
}
