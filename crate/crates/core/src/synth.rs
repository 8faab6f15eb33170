//! Synthetic societies with known years, for end-to-end testing.
//!
//! Document years are drawn from a logistic law first. Families are then
//! grown generation by generation and every person whose adult life holds at
//! least one document year is kept and attested there. Identity stress comes
//! from planted duplicate records (found by R1 or R2) and from same-named
//! strangers sharing exactly two documents.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chronology::ChronologyEnsemble;
use crate::corpus::{Attestation, Corpus, IndividualRecord, KinAssertion, NameEntry, RecordRef, Relation};
use crate::growth::{logistic_quantile, LogisticFit};
use crate::identity::{PersonRegistry, Rule};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("only {kept} of {wanted} persons could be attested after {families} families")]
    Infeasible { kept: usize, wanted: usize, families: usize },
    #[error("record {0} is not in the ground truth")]
    UnknownRecord(String),
    #[error("document {0} is not in the ground truth")]
    UnknownDocument(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    /// Persons to emit.
    pub persons: usize,
    /// Upper bound on families grown to reach `persons`.
    pub n_families: usize,
    pub generations_per_family: usize,
    pub persons_per_generation: usize,
    pub n_documents: usize,
    /// Location and scale of the publication-year law.
    pub mu: f64,
    pub beta: f64,
    pub lifespan: (f64, f64),
    pub g_f: f64,
    pub g_m: f64,
    pub g_p: f64,
    /// A child is born between `g_f` and `g_f + father_age_spread` years after
    /// its father.
    pub father_age_spread: f64,
    /// Founder births, relative to `mu`.
    pub founder_births: (f64, f64),
    /// Persons whose adult life covers fewer documents are left out.
    pub min_window_documents: usize,
    /// Each document names at least this many adults, plus an
    /// exponentially distributed number with the given mean.
    pub min_participants: usize,
    pub mean_extra_participants: f64,
    pub female_rate: f64,
    pub mother_rate: f64,
    /// Share of persons given a second, duplicate record.
    pub duplicate_rate: f64,
    /// Same-named distinct persons sharing exactly two documents.
    pub near_miss_pairs: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            persons: 500,
            n_families: 1000,
            generations_per_family: 6,
            persons_per_generation: 3,
            n_documents: 100,
            mu: 100.0,
            beta: 8.0,
            lifespan: (25.0, 40.0),
            g_f: 15.0,
            g_m: 20.0,
            g_p: 10.0,
            father_age_spread: 0.0,
            founder_births: (-80.0, -10.0),
            min_window_documents: 6,
            min_participants: 5,
            mean_extra_participants: 10.0,
            female_rate: 0.2,
            mother_rate: 0.5,
            duplicate_rate: 0.1,
            near_miss_pairs: 5,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::InvalidConfig(m.to_owned()));
        if self.persons == 0 || self.n_families == 0 || self.n_documents == 0 {
            return bad("counts must be positive");
        }
        if self.generations_per_family == 0 || self.persons_per_generation == 0 {
            return bad("family shape must be positive");
        }
        if !(self.beta > 0.0) || !self.mu.is_finite() {
            return bad("publication law needs finite mu and beta > 0");
        }
        let (lo, hi) = self.lifespan;
        if !(lo <= hi) || lo < self.g_p || lo < self.g_f {
            return bad("lifespan interval must be ordered and exceed g_f and g_p");
        }
        if self.min_window_documents == 0 {
            return bad("min window documents must be positive");
        }
        if !(self.mean_extra_participants >= 0.0) {
            return bad("mean extra participants must be nonnegative");
        }
        if self.founder_births.0 > self.founder_births.1 || self.father_age_spread < 0.0 {
            return bad("empty birth window");
        }
        for r in [self.female_rate, self.mother_rate, self.duplicate_rate] {
            if !(0.0..=1.0).contains(&r) {
                return bad("rates must lie in [0, 1]");
            }
        }
        Ok(())
    }
}

/// A planted second record of one person.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlantedDuplicate {
    pub original: RecordRef,
    pub duplicate: RecordRef,
    pub rule: Rule,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruePerson {
    pub name_key: String,
    pub birth: f64,
    pub death: f64,
    pub father: Option<usize>,
    pub mother: Option<usize>,
    pub records: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    /// Location and scale of the publication-year law.
    pub law: (f64, f64),
    pub persons: Vec<TruePerson>,
    pub publication: BTreeMap<String, f64>,
    pub duplicates: Vec<PlantedDuplicate>,
    pub near_misses: Vec<(RecordRef, RecordRef)>,
}

impl GroundTruth {
    /// True person of every record.
    pub fn record_owner(&self) -> BTreeMap<RecordRef, usize> {
        let mut out = BTreeMap::new();
        for (i, p) in self.persons.iter().enumerate() {
            for &l in &p.records {
                out.insert(RecordRef { name_key: p.name_key.clone(), local_index: l }, i);
            }
        }
        out
    }
}

const SYLLABLES: [&str; 16] = [
    "a", "ba", "ku", "ta", "ni", "ri", "zu", "hu", "la", "pi", "se", "tu", "ma", "na", "ki", "we",
];

fn name_of(mut k: usize) -> (String, String) {
    let mut parts = Vec::new();
    for _ in 0..3 {
        parts.push(SYLLABLES[k % SYLLABLES.len()]);
        k /= SYLLABLES.len();
    }
    while k > 0 {
        parts.push(SYLLABLES[k % SYLLABLES.len()]);
        k /= SYLLABLES.len();
    }
    let key = parts.concat().to_uppercase();
    let mut spelling = parts.join("-");
    spelling[..1].make_ascii_uppercase();
    (key, spelling)
}

struct Draft {
    birth: f64,
    death: f64,
    female: bool,
    father: Option<usize>,
    mother: Option<usize>,
}

/// Grows one family; indices are local to the family.
fn grow_family(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Vec<Draft> {
    let (lo, hi) = cfg.lifespan;
    let life = |rng: &mut ChaCha8Rng| if lo < hi { rng.random_range(lo..=hi) } else { lo };
    let mut out: Vec<Draft> = Vec::new();
    let mut previous: Vec<usize> = Vec::new();
    for g in 0..cfg.generations_per_family {
        let mut current = Vec::new();
        for k in 0..cfg.persons_per_generation {
            let female = k > 0 && rng.random_bool(cfg.female_rate);
            let (birth, father) = if g == 0 {
                (cfg.mu + rng.random_range(cfg.founder_births.0..=cfg.founder_births.1), None)
            } else {
                let fathers: Vec<usize> = previous.iter().copied().filter(|&i| !out[i].female).collect();
                let f = *fathers.choose(rng).expect("first of each generation is male");
                let room = (out[f].death - out[f].birth - cfg.g_f).min(cfg.father_age_spread).max(0.0);
                (out[f].birth + cfg.g_f + rng.random_range(0.0..=room), Some(f))
            };
            let mother = if g > 0 && rng.random_bool(cfg.mother_rate) {
                let fits: Vec<usize> = previous
                    .iter()
                    .copied()
                    .filter(|&i| out[i].female && out[i].birth + cfg.g_m <= birth && out[i].death >= birth)
                    .collect();
                fits.choose(rng).copied()
            } else {
                None
            };
            let death = birth + life(rng);
            current.push(out.len());
            out.push(Draft { birth, death, female, father, mother });
        }
        previous = current;
    }
    out
}

/// Documents whose year lies in the adult life of `p`, as indices into the
/// year-sorted document list.
fn window(years: &[f64], birth: f64, death: f64, g_p: f64) -> std::ops::Range<usize> {
    let start = years.partition_point(|&y| y < birth + g_p);
    let end = years.partition_point(|&y| y <= death);
    start..end.max(start)
}

pub fn generate_society(cfg: &SynthConfig) -> Result<(Corpus, GroundTruth), SynthError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut years: Vec<f64> = (0..cfg.n_documents)
        .map(|_| logistic_quantile(rng.random_range(f64::EPSILON..1.0), cfg.mu, cfg.beta))
        .collect();
    years.sort_by(f64::total_cmp);

    // Families are grown until enough persons have an adult life inside the
    // document period. Each document then draws its participants from the
    // persons alive and adult at its date.
    let mut people: Vec<Draft> = Vec::new();
    let mut families = 0;
    while people.len() < cfg.persons {
        if families == cfg.n_families {
            return Err(SynthError::Infeasible { kept: people.len(), wanted: cfg.persons, families });
        }
        families += 1;
        let drafts = grow_family(cfg, &mut rng);
        let mut global: Vec<Option<usize>> = vec![None; drafts.len()];
        for (k, d) in drafts.iter().enumerate() {
            if window(&years, d.birth, d.death, cfg.g_p).len() < cfg.min_window_documents {
                continue;
            }
            global[k] = Some(people.len());
            people.push(Draft { father: d.father.and_then(|f| global[f]), mother: d.mother.and_then(|m| global[m]), ..*d });
        }
    }
    people.truncate(cfg.persons);
    let n = people.len();
    let windows: Vec<std::ops::Range<usize>> =
        people.iter().map(|p| window(&years, p.birth, p.death, cfg.g_p)).collect();

    let mut docs: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    let mut load = vec![0usize; years.len()];
    for k in 0..years.len() {
        let size = cfg.min_participants
            + (-cfg.mean_extra_participants * rng.random_range(f64::EPSILON..1.0).ln()) as usize;
        let eligible: Vec<usize> = (0..n).filter(|&i| windows[i].contains(&k)).collect();
        for &i in eligible.choose_multiple(&mut rng, size) {
            docs[i].insert(k);
            load[k] += 1;
        }
    }
    // Persons left out join the least crowded document of their adult life.
    for (i, w) in windows.iter().enumerate() {
        if docs[i].is_empty() {
            let least = w.clone().map(|k| load[k]).min().expect("window is not empty");
            let open: Vec<usize> = w.clone().filter(|&k| load[k] == least).collect();
            let k = *open.choose(&mut rng).expect("window is not empty");
            load[k] += 1;
            docs[i].insert(k);
        }
    }

    let mut kin_doc: BTreeMap<(usize, usize), Option<usize>> = BTreeMap::new();
    for (i, p) in people.iter().enumerate() {
        for parent in p.father.into_iter().chain(p.mother) {
            let (a, b) = (&windows[i], &windows[parent]);
            let shared = a.start.max(b.start)..a.end.min(b.end);
            let known: Vec<usize> = docs[i].union(&docs[parent]).copied().filter(|k| shared.contains(k)).collect();
            let doc = match known.choose(&mut rng) {
                Some(&k) => Some(k),
                None => (!shared.is_empty()).then(|| rng.random_range(shared)),
            };
            if let Some(d) = doc {
                docs[i].insert(d);
                docs[parent].insert(d);
            }
            kin_doc.insert((i, parent), doc);
        }
    }
    let has_kin: Vec<bool> = {
        let mut v = vec![false; n];
        for &(c, p) in kin_doc.keys() {
            v[c] = true;
            v[p] = true;
        }
        v
    };

    // Near misses: kin-free strangers made to share exactly two documents.
    let mut alias: Vec<usize> = (0..n).collect();
    let mut in_pair = vec![false; n];
    let mut loners: Vec<usize> = (0..n).filter(|&i| !has_kin[i]).collect();
    loners.shuffle(&mut rng);
    let mut near = Vec::new();
    'outer: for (x, &p) in loners.iter().enumerate() {
        if near.len() == cfg.near_miss_pairs {
            break;
        }
        if in_pair[p] {
            continue;
        }
        for &q in &loners[x + 1..] {
            if in_pair[q] {
                continue;
            }
            let (wp, wq) = (&windows[p], &windows[q]);
            let shared: Vec<usize> = (wp.start.max(wq.start)..wp.end.min(wq.end)).collect();
            if shared.len() < 2 {
                continue;
            }
            let pick: Vec<usize> = shared.choose_multiple(&mut rng, 2).copied().collect();
            docs[p].extend(&pick);
            docs[q].extend(&pick);
            let extra: Vec<usize> = docs[q].intersection(&docs[p]).copied().filter(|d| !pick.contains(d)).collect();
            for d in extra {
                docs[q].remove(&d);
            }
            alias[q] = p;
            in_pair[p] = true;
            in_pair[q] = true;
            near.push((p, q));
            continue 'outer;
        }
    }

    // Names: one per person, shared by near-miss partners.
    let mut name_index = 0;
    let mut names: Vec<(String, String)> = vec![(String::new(), String::new()); n];
    for i in 0..n {
        if alias[i] == i {
            names[i] = name_of(name_index);
            name_index += 1;
        }
    }
    for i in 0..n {
        if alias[i] != i {
            names[i] = names[alias[i]].clone();
        }
    }

    // Lines: participants of each document in person order.
    let doc_ids: Vec<String> = (0..years.len()).map(|k| format!("T {:03}", k + 1)).collect();
    let mut line: BTreeMap<(usize, usize), u32> = BTreeMap::new();
    let mut participants: Vec<Vec<usize>> = vec![Vec::new(); years.len()];
    for (i, ds) in docs.iter().enumerate() {
        for &d in ds {
            participants[d].push(i);
        }
    }
    for (d, ps) in participants.iter().enumerate() {
        for (slot, &i) in ps.iter().enumerate() {
            line.insert((i, d), 2 * slot as u32 + 1);
        }
    }

    let mut entries: BTreeMap<String, NameEntry> = BTreeMap::new();
    let mut truth_persons = Vec::with_capacity(n);
    for i in 0..n {
        let p = &people[i];
        let mut kin = Vec::new();
        for (parent, rel) in [(p.father, Relation::SonOf), (p.mother, Relation::SonOf)] {
            if let Some(par) = parent {
                let relation = if people[i].female { Relation::DaughterOf } else { rel };
                kin.push(KinAssertion {
                    relation,
                    target: names[par].1.clone(),
                    doc: kin_doc[&(i, par)].map(|d| doc_ids[d].clone()),
                });
            }
        }
        for (c, child) in people.iter().enumerate() {
            for par in child.father.into_iter().chain(child.mother) {
                if par == i {
                    kin.push(KinAssertion {
                        relation: if p.female { Relation::MotherOf } else { Relation::FatherOf },
                        target: names[c].1.clone(),
                        doc: kin_doc[&(c, i)].map(|d| doc_ids[d].clone()),
                    });
                }
            }
        }
        let attestations: Vec<Attestation> = docs[i]
            .iter()
            .map(|&d| Attestation { doc: doc_ids[d].clone(), lines: vec![line[&(i, d)]] })
            .collect();
        let entry = entries.entry(names[i].0.clone()).or_insert_with(|| NameEntry {
            name_key: names[i].0.clone(),
            spellings: vec![names[i].1.clone()],
            individuals: Vec::new(),
        });
        let local_index = entry.individuals.len() as u32 + 1;
        entry.individuals.push(IndividualRecord { local_index, kin, attestations, roles: BTreeSet::new() });
        truth_persons.push(TruePerson {
            name_key: names[i].0.clone(),
            birth: p.birth,
            death: p.death,
            father: p.father,
            mother: p.mother,
            records: vec![local_index],
        });
    }

    // Duplicate records: R2 copies cite three documents without lines, R1
    // copies repeat one line.
    let mut duplicates = Vec::new();
    for i in 0..n {
        if in_pair[i] || !rng.random_bool(cfg.duplicate_rate) {
            continue;
        }
        let own: Vec<usize> = docs[i].iter().copied().collect();
        let want_r2 = own.len() >= 3 && rng.random_bool(0.5);
        let attestations: Vec<Attestation> = if want_r2 {
            own.choose_multiple(&mut rng, 3)
                .map(|&d| Attestation { doc: doc_ids[d].clone(), lines: Vec::new() })
                .collect()
        } else {
            let d = *own.choose(&mut rng).expect("attested");
            vec![Attestation { doc: doc_ids[d].clone(), lines: vec![line[&(i, d)]] }]
        };
        let entry = entries.get_mut(&names[i].0).expect("entry exists");
        let local_index = entry.individuals.len() as u32 + 1;
        entry.individuals.push(IndividualRecord { local_index, kin: Vec::new(), attestations, roles: BTreeSet::new() });
        duplicates.push(PlantedDuplicate {
            original: RecordRef { name_key: names[i].0.clone(), local_index: truth_persons[i].records[0] },
            duplicate: RecordRef { name_key: names[i].0.clone(), local_index },
            rule: if want_r2 { Rule::R2 } else { Rule::R1 },
        });
        truth_persons[i].records.push(local_index);
    }

    let near_misses = near
        .iter()
        .map(|&(p, q)| {
            let r = |i: usize| RecordRef { name_key: names[i].0.clone(), local_index: truth_persons[i].records[0] };
            (r(p), r(q))
        })
        .collect();
    let used: BTreeSet<usize> = docs.iter().flatten().copied().collect();
    let publication = used.into_iter().map(|d| (doc_ids[d].clone(), years[d])).collect();
    let corpus = Corpus::new(entries.into_values().collect(), crate::corpus::DEFAULT_CONTRACTOR_LINES)
        .map_err(|e| SynthError::InvalidConfig(format!("generated corpus is invalid: {e}")))?;
    Ok((
        corpus,
        GroundTruth { law: (cfg.mu, cfg.beta), persons: truth_persons, publication, duplicates, near_misses },
    ))
}

/// Per-person years of the truth laid out on the registry's person ids, for
/// persons whose records all belong to one true person.
pub fn truth_on_registry(r: &PersonRegistry, truth: &GroundTruth) -> Result<Vec<Option<(f64, f64)>>, SynthError> {
    let owner = truth.record_owner();
    r.persons
        .iter()
        .map(|p| {
            let mut ids = BTreeSet::new();
            for &l in &p.records {
                let rr = RecordRef { name_key: p.name_key.clone(), local_index: l };
                ids.insert(*owner.get(&rr).ok_or_else(|| SynthError::UnknownRecord(rr.to_string()))?);
            }
            Ok((ids.len() == 1).then(|| {
                let t = &truth.persons[*ids.first().unwrap()];
                (t.birth, t.death)
            }))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryMetrics {
    /// Over pairs of records put in one person.
    pub identity_precision: f64,
    pub identity_recall: f64,
    pub planted_recall_r1: f64,
    pub planted_recall_r2: f64,
    pub near_misses_merged: usize,
    /// Mean absolute errors against the truth shifted so the anchor
    /// document matches, over anchored quantities (ensemble means).
    pub mae_publication: f64,
    pub mae_birth: f64,
    pub mae_death: f64,
    pub anchored_documents: usize,
    /// Estimated location minus the aligned true location, when a fit is
    /// given.
    pub mu_error: Option<f64>,
    pub beta_error: Option<f64>,
}

fn pairs_of(groups: impl Iterator<Item = Vec<RecordRef>>) -> BTreeSet<(RecordRef, RecordRef)> {
    let mut out = BTreeSet::new();
    for g in groups {
        for (x, a) in g.iter().enumerate() {
            for b in &g[x + 1..] {
                out.insert((a.clone().min(b.clone()), a.clone().max(b.clone())));
            }
        }
    }
    out
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 { 1.0 } else { num as f64 / den as f64 }
}

pub fn evaluate_recovery(
    estimate: &ChronologyEnsemble,
    r: &PersonRegistry,
    truth: &GroundTruth,
    anchor_doc: &str,
    fit: Option<&LogisticFit>,
) -> Result<RecoveryMetrics, SynthError> {
    let predicted = pairs_of(r.persons.iter().map(|p| {
        p.records
            .iter()
            .map(|&l| RecordRef { name_key: p.name_key.clone(), local_index: l })
            .collect()
    }));
    let actual = pairs_of(truth.persons.iter().map(|p| {
        p.records
            .iter()
            .map(|&l| RecordRef { name_key: p.name_key.clone(), local_index: l })
            .collect()
    }));
    let hits = predicted.intersection(&actual).count();
    let recall_of = |rule: Rule| {
        let planted: Vec<&PlantedDuplicate> = truth.duplicates.iter().filter(|d| d.rule == rule).collect();
        let found = planted
            .iter()
            .filter(|d| r.person_of(&d.original).is_some() && r.person_of(&d.original) == r.person_of(&d.duplicate))
            .count();
        ratio(found, planted.len())
    };
    let near_misses_merged = truth
        .near_misses
        .iter()
        .filter(|(a, b)| r.person_of(a).is_some() && r.person_of(a) == r.person_of(b))
        .count();

    let first = &estimate.timelines[0];
    let anchor_true = *truth
        .publication
        .get(anchor_doc)
        .ok_or_else(|| SynthError::UnknownDocument(anchor_doc.to_owned()))?;
    let anchor_est = first
        .publication_of(anchor_doc)
        .ok_or_else(|| SynthError::UnknownDocument(anchor_doc.to_owned()))?;
    let shift = anchor_est - anchor_true;

    let mut pub_err = Vec::new();
    for (k, doc) in first.documents.iter().enumerate() {
        if !first.document_anchored[k] || doc == anchor_doc {
            continue;
        }
        let t = *truth.publication.get(doc).ok_or_else(|| SynthError::UnknownDocument(doc.clone()))?;
        pub_err.push((estimate.publication[k].mean - (t + shift)).abs());
    }
    let years = truth_on_registry(r, truth)?;
    let (mut b_err, mut d_err) = (Vec::new(), Vec::new());
    for (i, y) in years.iter().enumerate() {
        if let (Some((b, d)), true) = (y, first.person_anchored[i]) {
            b_err.push((estimate.birth[i].mean - (b + shift)).abs());
            d_err.push((estimate.death[i].mean - (d + shift)).abs());
        }
    }
    let mean = |v: &[f64]| if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 };
    let (mu_error, beta_error) = match fit {
        Some(f) => {
            // The generating law in estimated coordinates.
            let true_mu = truth.law.0 + shift;
            (Some(f.mu - true_mu), Some(f.beta - truth.law.1))
        }
        None => (None, None),
    };
    Ok(RecoveryMetrics {
        identity_precision: ratio(hits, predicted.len()),
        identity_recall: ratio(hits, actual.len()),
        planted_recall_r1: recall_of(Rule::R1),
        planted_recall_r2: recall_of(Rule::R2),
        near_misses_merged,
        mae_publication: mean(&pub_err),
        mae_birth: mean(&b_err),
        mae_death: mean(&d_err),
        anchored_documents: pub_err.len() + 1,
        mu_error,
        beta_error,
    })
}
