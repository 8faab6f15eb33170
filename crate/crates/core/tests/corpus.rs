use std::collections::BTreeSet;

use chronos_core::corpus::{
    attestation_pairs, parse_corpus, serialize_corpus, Attestation, Corpus, IndividualRecord, KinAssertion, NameEntry,
    RecordRef, Relation, Role,
};
use proptest::prelude::*;

const EXAMPLE: &str = include_str!("fixtures/hamattar_iluia.jsonl");

fn att(doc: &str, lines: &[u32]) -> Attestation {
    Attestation { doc: doc.into(), lines: lines.to_vec() }
}

#[test]
fn example_entry_is_parsed_in_full() {
    let c = parse_corpus(EXAMPLE, 10).unwrap();
    let iluia = c.entry("ILUIA").unwrap();
    assert_eq!(iluia.spellings, ["Ilu-ia", "I-lu-ia"]);
    assert_eq!(iluia.individuals.len(), 7);
    let first = &iluia.individuals[0];
    assert_eq!(
        first.kin,
        [KinAssertion { relation: Relation::SonOf, target: "Hu-a-ma-at-ta-ar".into(), doc: Some("JEN 208".into()) }]
    );
    assert_eq!(
        first.attestations,
        [att("JEN 208", &[1, 8, 11, 13, 14]), att("JEN 369", &[3, 10]), att("JENu 414", &[])]
    );
    assert!(first.roles.contains(&Role::Contractor));
    assert!(iluia.individuals[1].roles.contains(&Role::Scribe));
    assert!(!iluia.individuals[2].roles.contains(&Role::Contractor));

    let union: BTreeSet<String> = c.records().flat_map(|(_, r)| r.documents().map(str::to_owned).collect::<Vec<_>>()).collect();
    assert_eq!(c.documents, union);
    assert_eq!(c.documents.len(), 16);
}

#[test]
fn example_round_trips() {
    let c = parse_corpus(EXAMPLE, 10).unwrap();
    let text = serialize_corpus(&c);
    let again = parse_corpus(&text, 10).unwrap();
    assert_eq!(again, c);
    assert_eq!(serialize_corpus(&again), text);
}

#[test]
fn example_attestation_pairs() {
    let c = parse_corpus(EXAMPLE, 10).unwrap();
    let pairs = attestation_pairs(&c);
    assert_eq!(pairs.len(), 3 + 3 + 2 + 1 + 7 + 1 + 1 + 2);
    let first = RecordRef { name_key: "ILUIA".into(), local_index: 1 };
    let docs: Vec<&str> = pairs.iter().filter(|(r, _)| *r == first).map(|(_, d)| d.as_str()).collect();
    assert_eq!(docs, ["JEN 208", "JEN 369", "JENu 414"]);
}

#[test]
fn kin_without_attestations_gives_no_pairs() {
    let rec = IndividualRecord {
        local_index: 1,
        kin: vec![KinAssertion { relation: Relation::FatherOf, target: "B".into(), doc: None }],
        attestations: Vec::new(),
        roles: BTreeSet::new(),
    };
    let c = Corpus::new(vec![NameEntry { name_key: "A".into(), spellings: Vec::new(), individuals: vec![rec] }], 10).unwrap();
    assert!(attestation_pairs(&c).is_empty());
    assert!(c.documents.is_empty());
}

const DOCS: [&str; 6] = ["JEN 1", "JEN 2", "JEN 10", "HSS IX 7", "JENu 414", "D"];

fn record_strategy() -> impl Strategy<Value = (Vec<(usize, usize, Option<usize>)>, Vec<(usize, Vec<u32>)>, Vec<bool>)> {
    (
        prop::collection::vec((0..5usize, 0..4usize, prop::option::of(0..DOCS.len())), 0..3),
        prop::collection::vec((0..DOCS.len(), prop::collection::vec(1..60u32, 0..4)), 0..4),
        prop::collection::vec(any::<bool>(), 3),
    )
}

fn corpus_strategy() -> impl Strategy<Value = Corpus> {
    prop::collection::vec((prop::collection::vec(record_strategy(), 1..4), 0..3usize), 0..5).prop_map(|entries| {
        let entries = entries
            .into_iter()
            .enumerate()
            .map(|(e, (records, spellings))| NameEntry {
                name_key: format!("N{e}"),
                spellings: (0..spellings).map(|s| format!("n{e}-{s}")).collect(),
                individuals: records
                    .into_iter()
                    .enumerate()
                    .map(|(i, (kin, atts, roles))| {
                        let mut attestations: Vec<Attestation> =
                            atts.into_iter().map(|(d, lines)| Attestation { doc: DOCS[d].into(), lines }).collect();
                        if kin.is_empty() && attestations.is_empty() {
                            attestations.push(att("D", &[]));
                        }
                        IndividualRecord {
                            local_index: 2 * i as u32 + 1,
                            kin: kin
                                .into_iter()
                                .map(|(rel, t, d)| KinAssertion {
                                    relation: Relation::ALL[rel],
                                    target: format!("n{t}-0"),
                                    doc: d.map(|d| DOCS[d].into()),
                                })
                                .collect(),
                            attestations,
                            roles: [Role::Contractor, Role::Scribe, Role::Witness]
                                .into_iter()
                                .zip(roles)
                                .filter_map(|(r, keep)| keep.then_some(r))
                                .collect(),
                        }
                    })
                    .collect(),
            })
            .collect();
        Corpus::new(entries, 10).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn random_corpora_round_trip(c in corpus_strategy()) {
        let text = serialize_corpus(&c);
        let again = parse_corpus(&text, 10).unwrap();
        prop_assert_eq!(&again, &c);
        prop_assert_eq!(serialize_corpus(&again), text);

        let union: BTreeSet<String> = c.records().flat_map(|(_, r)| r.documents().map(str::to_owned).collect::<Vec<_>>()).collect();
        prop_assert_eq!(&c.documents, &union);

        let mut expected = Vec::new();
        for (r, rec) in c.records() {
            let docs: BTreeSet<&str> = rec.documents().collect();
            expected.extend(docs.into_iter().map(|d| (r.clone(), d.to_owned())));
        }
        let mut got = attestation_pairs(&c);
        expected.sort();
        got.sort();
        prop_assert_eq!(got, expected);
    }
}
