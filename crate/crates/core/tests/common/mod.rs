#![allow(dead_code)]

use std::collections::BTreeSet;

use chronos_core::corpus::{Attestation, Corpus, IndividualRecord, KinAssertion, NameEntry, Relation};

/// One record: kin as `(relation, target, doc)`, attestations as `(doc, lines)`.
pub fn record(local_index: u32, kin: &[(Relation, &str, Option<&str>)], atts: &[(&str, &[u32])]) -> IndividualRecord {
    IndividualRecord {
        local_index,
        kin: kin
            .iter()
            .map(|&(relation, target, doc)| KinAssertion {
                relation,
                target: target.to_owned(),
                doc: doc.map(str::to_owned),
            })
            .collect(),
        attestations: atts
            .iter()
            .map(|&(doc, lines)| Attestation { doc: doc.to_owned(), lines: lines.to_vec() })
            .collect(),
        roles: BTreeSet::new(),
    }
}

pub fn entry(name: &str, individuals: Vec<IndividualRecord>) -> NameEntry {
    NameEntry {
        name_key: name.to_owned(),
        spellings: vec![name.to_owned()],
        individuals,
    }
}

pub fn corpus(entries: Vec<NameEntry>) -> Corpus {
    Corpus::new(entries, 10).expect("valid fixture")
}
