mod common;

use std::collections::BTreeMap;

use chronos_core::chronology::{
    build_qp, canonical_solve, constraint_violations, estimate_chronology, pin_document, sample_lifespans,
    ChronologyParams, LifespanPrior,
};
use chronos_core::corpus::{Corpus, Relation};
use chronos_core::identity::{resolve_identities, IdentityConfig, PersonRegistry};
use chronos_qp::{enumerate_active_set_oracle, Status};
use common::{corpus, entry, record};

fn params(anchor: &str) -> ChronologyParams {
    ChronologyParams {
        anchor_doc: anchor.to_owned(),
        ..ChronologyParams::default()
    }
}

fn resolve(c: &Corpus) -> PersonRegistry {
    resolve_identities(c, &IdentityConfig::default())
}

fn single_person() -> Corpus {
    corpus(vec![entry("A", vec![record(1, &[], &[("D1", &[20])])])])
}

fn two_documents() -> Corpus {
    corpus(vec![entry("A", vec![record(1, &[], &[("D1", &[20]), ("D2", &[20])])])])
}

#[test]
fn single_person_centres_lifespan_on_anchor() {
    let c = single_person();
    let r = resolve(&c);
    let prior = LifespanPrior { mu: vec![40.0] };
    let p = build_qp(&r, &c, &prior, &params("D1")).unwrap();
    assert_eq!(p.qp.n(), 3);
    assert_eq!(p.qp.m(), 3);
    let t = canonical_solve(&p).unwrap();
    assert_eq!(t.status, "optimal");
    assert!((t.birth[0] - 80.0).abs() < 1e-4, "{}", t.birth[0]);
    assert!((t.death[0] - 120.0).abs() < 1e-4, "{}", t.death[0]);
    assert!(t.lifespan_objective < 1e-8);
    assert_eq!(t.publication[0], 100.0);

    let exact = enumerate_active_set_oracle(&p.qp).unwrap();
    assert!((exact.x[0] - 80.0).abs() < 1e-6 && (exact.x[1] - 120.0).abs() < 1e-6);
}

#[test]
fn second_pin_forces_long_life() {
    let c = two_documents();
    let r = resolve(&c);
    let prior = LifespanPrior { mu: vec![40.0] };
    let mut p = build_qp(&r, &c, &prior, &params("D1")).unwrap();
    pin_document(&mut p, "D2", 160.0).unwrap();
    let t = canonical_solve(&p).unwrap();
    assert!((t.lifespan_objective - 900.0).abs() < 1e-4, "{}", t.lifespan_objective);
    assert!(t.birth[0] <= 90.0 + 1e-6 && t.death[0] >= 160.0 - 1e-6);

    let exact = enumerate_active_set_oracle(&p.qp).unwrap();
    let lifespan = exact.x[1] - exact.x[0];
    assert!(((lifespan - 40.0).powi(2) - 900.0).abs() < 1e-4);
}

#[test]
fn isolated_person_keeps_prior_and_is_unanchored() {
    let c = corpus(vec![
        entry("A", vec![record(1, &[], &[("D1", &[3])])]),
        entry("B", vec![record(1, &[(Relation::SonOf, "Nobody", None)], &[])]),
    ]);
    let r = resolve(&c);
    let prior = LifespanPrior { mu: vec![30.0, 47.0] };
    let t = canonical_solve(&build_qp(&r, &c, &prior, &params("D1")).unwrap()).unwrap();
    assert!((t.death[1] - t.birth[1] - 47.0).abs() < 1e-6);
    assert_eq!(t.person_anchored, vec![true, false]);
    assert_eq!(t.document_anchored, vec![true]);
}

#[test]
fn empty_corpus_with_one_document_has_one_row() {
    let c = single_person();
    let r = PersonRegistry { persons: Vec::new(), ..resolve(&c) };
    let p = build_qp(&r, &c, &LifespanPrior { mu: Vec::new() }, &params("D1")).unwrap();
    assert_eq!((p.qp.n(), p.qp.m()), (1, 1));
}

#[test]
fn unknown_anchor_is_an_error() {
    let c = single_person();
    let r = resolve(&c);
    assert!(build_qp(&r, &c, &LifespanPrior { mu: vec![40.0] }, &params("nowhere")).is_err());
}

fn family() -> Corpus {
    corpus(vec![
        entry("F", vec![record(1, &[(Relation::FatherOf, "S", Some("D1"))], &[("D1", &[2]), ("D3", &[5])])]),
        entry("S", vec![record(1, &[(Relation::SonOf, "F", Some("D1"))], &[("D1", &[1]), ("D2", &[4])])]),
        entry("W", vec![record(1, &[], &[("D2", &[30]), ("D3", &[31])])]),
    ])
}

#[test]
fn family_matches_active_set_enumeration() {
    let c = family();
    let r = resolve(&c);
    assert_eq!(r.parent_link_count(), 1);
    for seed in 0..5 {
        let prior = sample_lifespans(r.len(), (20.0, 60.0), seed);
        let p = build_qp(&r, &c, &prior, &params("D2")).unwrap();
        assert_eq!(p.qp.n(), 2 * 3 + 3);
        assert_eq!(p.qp.m(), 2 + 2 * 6 + 1);
        let t = canonical_solve(&p).unwrap();
        let exact = enumerate_active_set_oracle(&p.qp).unwrap();
        assert_eq!(exact.status, Status::Optimal);
        let x: Vec<f64> = t.birth.iter().chain(&t.death).chain(&t.publication).copied().collect();
        for (a, b) in x.iter().zip(&exact.x) {
            assert!((a - b).abs() < 1e-4, "seed {seed}: {a} vs {b}");
        }
        assert!(t.residuals.max() <= 1e-6);
        let years: BTreeMap<String, f64> = t.documents.iter().cloned().zip(t.publication.iter().copied()).collect();
        let v = constraint_violations(&r, &p.params, &t.birth, &t.death, &years);
        assert!(v.max() <= 1e-6, "{v:?}");
        assert!(t.birth[1] - t.birth[0] >= 15.0 - 1e-6);
    }
}

#[test]
fn ensemble_of_one_equals_single_solve() {
    let c = family();
    let r = resolve(&c);
    let prm = ChronologyParams { runs: 1, seed: 11, ..params("D2") };
    let e = estimate_chronology(&r, &c, &prm).unwrap();
    assert_eq!(e.timelines.len(), 1);
    let prior = sample_lifespans(r.len(), prm.lifespan_interval, 11);
    let t = canonical_solve(&build_qp(&r, &c, &prior, &prm).unwrap()).unwrap();
    assert_eq!(e.timelines[0], t);
    assert_eq!(e.birth[0].min, e.birth[0].max);
}

#[test]
fn ensemble_runs_are_ordered_by_seed() {
    let c = family();
    let r = resolve(&c);
    let prm = ChronologyParams { runs: 4, seed: 3, ..params("D2") };
    let e = estimate_chronology(&r, &c, &prm).unwrap();
    assert_eq!(e.timelines.len(), 4);
    assert!(e.failures.is_empty());
    for (k, t) in e.timelines.iter().enumerate() {
        let prior = sample_lifespans(r.len(), prm.lifespan_interval, 3 + k as u64);
        assert_eq!(*t, canonical_solve(&build_qp(&r, &c, &prior, &prm).unwrap()).unwrap());
    }
    for (j, s) in e.death.iter().enumerate() {
        assert!(s.min <= s.mean && s.mean <= s.max, "person {j}");
    }
}

#[test]
fn lifespan_sample_moments() {
    let p = sample_lifespans(100_000, (20.0, 60.0), 1);
    let mean = p.mu.iter().sum::<f64>() / p.mu.len() as f64;
    assert!((mean - 40.0).abs() < 0.2, "{mean}");
    assert!(p.mu.iter().all(|&m| (20.0..=60.0).contains(&m)));
}
