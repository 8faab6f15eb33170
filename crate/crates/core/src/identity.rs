//! Rule-based identity resolution of same-named individual records.
//!
//! Two records with the same name are the same person when they share a line
//! of a document (R1) or at least three documents (R2), provided the merged
//! kinship statements do not contradict each other. Rules are applied to a
//! fixpoint in a fixed order, then kinship statements are bound to concrete
//! persons to give father and mother links.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Attestation, Corpus, IndividualRecord, KinAssertion, NameEntry, RecordRef, Relation, Role};

pub type PersonId = usize;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IdentityConfig {
    /// Shared documents required by R2.
    pub r2_threshold: usize,
}

impl Default for IdentityConfig {
    fn default() -> Self {
        IdentityConfig { r2_threshold: 3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Rule {
    R1,
    R2,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Evidence {
    SharedLine { doc: String, line: u32 },
    SharedDocuments { docs: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Decision {
    Merge(Evidence),
    NoMerge(String),
}

impl Decision {
    pub fn is_merge(&self) -> bool {
        matches!(self, Decision::Merge(_))
    }
}

/// Two same-named records with the evidence they share.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidatePair {
    pub a: RecordRef,
    pub b: RecordRef,
    pub shared_docs: Vec<String>,
    pub shared_lines: Vec<(String, u32)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MergeRecord {
    pub name_key: String,
    /// Local indices of the two records whose groups were joined.
    pub left: u32,
    pub right: u32,
    pub rule: Rule,
    pub evidence: Evidence,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParentKind {
    Father,
    Mother,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Person {
    pub id: PersonId,
    pub name_key: String,
    /// Local indices of the merged records, ascending.
    pub records: Vec<u32>,
    pub father: Option<PersonId>,
    pub mother: Option<PersonId>,
    pub documents: BTreeSet<String>,
    pub attestations: Vec<Attestation>,
    pub kin: Vec<KinAssertion>,
    pub roles: BTreeSet<Role>,
}

impl Person {
    pub fn parents(&self) -> impl Iterator<Item = (ParentKind, PersonId)> {
        self.father
            .map(|f| (ParentKind::Father, f))
            .into_iter()
            .chain(self.mother.map(|m| (ParentKind::Mother, m)))
    }
}

/// A kinship statement that could not be turned into a link.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnboundLink {
    pub person: PersonId,
    pub relation: Relation,
    pub target: String,
    pub doc: Option<String>,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersonRegistry {
    pub config: IdentityConfig,
    pub persons: Vec<Person>,
    pub merges: Vec<MergeRecord>,
    pub unbound: Vec<UnboundLink>,
    /// Record pairs whose same-person status flips when the scan order is
    /// reversed.
    pub order_sensitive: Vec<(RecordRef, RecordRef)>,
    pub spellings: BTreeMap<String, Vec<String>>,
}

impl PersonRegistry {
    pub fn len(&self) -> usize {
        self.persons.len()
    }

    pub fn is_empty(&self) -> bool {
        self.persons.is_empty()
    }

    pub fn person_of(&self, r: &RecordRef) -> Option<PersonId> {
        self.persons
            .iter()
            .find(|p| p.name_key == r.name_key && p.records.contains(&r.local_index))
            .map(|p| p.id)
    }

    pub fn parent_link_count(&self) -> usize {
        self.persons.iter().map(|p| p.parents().count()).sum()
    }

    /// All (parent, child, kind) links, ordered by child then kind.
    pub fn parent_links(&self) -> Vec<(PersonId, PersonId, ParentKind)> {
        self.persons
            .iter()
            .flat_map(|p| p.parents().map(move |(k, par)| (par, p.id, k)))
            .collect()
    }

    pub fn attestation_pair_count(&self) -> usize {
        self.persons.iter().map(|p| p.documents.len()).sum()
    }

    /// Persons attested in each document.
    pub fn document_index(&self) -> BTreeMap<&str, Vec<PersonId>> {
        let mut index: BTreeMap<&str, Vec<PersonId>> = BTreeMap::new();
        for p in &self.persons {
            for d in &p.documents {
                index.entry(d.as_str()).or_default().push(p.id);
            }
        }
        index
    }

    /// True when `a` is a strict ancestor of `b` through parent links.
    pub fn is_ancestor(&self, a: PersonId, b: PersonId) -> bool {
        is_ancestor(&self.persons, a, b)
    }

    /// Re-expresses the registry as a corpus with one record per person.
    pub fn to_corpus(&self) -> Corpus {
        let mut entries: Vec<NameEntry> = Vec::new();
        for p in &self.persons {
            if entries.last().is_none_or(|e| e.name_key != p.name_key) {
                entries.push(NameEntry {
                    name_key: p.name_key.clone(),
                    spellings: self.spellings.get(&p.name_key).cloned().unwrap_or_default(),
                    individuals: Vec::new(),
                });
            }
            let entry = entries.last_mut().expect("just pushed");
            entry.individuals.push(IndividualRecord {
                local_index: entry.individuals.len() as u32 + 1,
                kin: p.kin.clone(),
                attestations: p.attestations.clone(),
                roles: p.roles.clone(),
            });
        }
        let documents = self.persons.iter().flat_map(|p| p.documents.iter().cloned()).collect();
        Corpus { entries, documents }
    }
}

fn is_ancestor(persons: &[Person], a: PersonId, b: PersonId) -> bool {
    let mut stack: Vec<PersonId> = persons[b].parents().map(|(_, p)| p).collect();
    let mut seen = BTreeSet::new();
    while let Some(x) = stack.pop() {
        if x == a {
            return true;
        }
        if seen.insert(x) {
            stack.extend(persons[x].parents().map(|(_, p)| p));
        }
    }
    false
}

/// Name-level summary of one record or a merged group of records.
#[derive(Debug, Clone, Default)]
struct Profile {
    lines: BTreeMap<String, BTreeSet<u32>>,
    fathers: BTreeSet<String>,
    mothers: BTreeSet<String>,
    children: BTreeSet<String>,
    grandchildren: BTreeSet<String>,
    is_father: bool,
    is_mother: bool,
}

/// Resolves a kin target spelling to a name key, or keeps the spelling when
/// it is unknown or ambiguous.
fn target_key(index: &BTreeMap<&str, BTreeSet<&str>>, spelling: &str) -> String {
    match index.get(spelling) {
        Some(keys) if keys.len() == 1 => (*keys.iter().next().unwrap()).to_owned(),
        _ => format!("?{spelling}"),
    }
}

/// Spelling lookup plus the name keys known to belong to mothers.
struct Names<'c> {
    index: BTreeMap<&'c str, BTreeSet<&'c str>>,
    mothers: BTreeSet<&'c str>,
}

impl<'c> Names<'c> {
    fn of(c: &'c Corpus) -> Self {
        let mothers = c
            .entries
            .iter()
            .filter(|e| e.individuals.iter().any(|i| i.kin.iter().any(|k| k.relation == Relation::MotherOf)))
            .map(|e| e.name_key.as_str())
            .collect();
        Names { index: c.spelling_index(), mothers }
    }
}

impl Profile {
    fn of(record: &IndividualRecord, names: &Names) -> Self {
        let mut p = Profile::default();
        for a in &record.attestations {
            p.lines.entry(a.doc.clone()).or_default().extend(&a.lines);
        }
        for k in &record.kin {
            let key = target_key(&names.index, &k.target);
            match k.relation {
                Relation::SonOf | Relation::DaughterOf => {
                    if names.mothers.contains(key.as_str()) {
                        p.mothers.insert(key);
                    } else {
                        p.fathers.insert(key);
                    }
                }
                Relation::FatherOf => {
                    p.is_father = true;
                    p.children.insert(key);
                }
                Relation::MotherOf => {
                    p.is_mother = true;
                    p.children.insert(key);
                }
                Relation::GrandfatherOf => {
                    p.grandchildren.insert(key);
                }
            }
        }
        p
    }

    fn merged(&self, other: &Profile) -> Profile {
        let mut p = self.clone();
        for (d, ls) in &other.lines {
            p.lines.entry(d.clone()).or_default().extend(ls);
        }
        p.fathers.extend(other.fathers.iter().cloned());
        p.mothers.extend(other.mothers.iter().cloned());
        p.children.extend(other.children.iter().cloned());
        p.grandchildren.extend(other.grandchildren.iter().cloned());
        p.is_father |= other.is_father;
        p.is_mother |= other.is_mother;
        p
    }

    /// Why treating the profile as one person is contradictory, if it is.
    fn contradiction(&self) -> Option<String> {
        for (set, what) in [(&self.fathers, "fathers"), (&self.mothers, "mothers")] {
            if set.len() > 1 {
                let names: Vec<&str> = set.iter().map(String::as_str).collect();
                return Some(format!("two distinct {what}: {}", names.join(", ")));
            }
        }
        if self.is_father && self.is_mother {
            return Some("both father and mother of others".into());
        }
        let below: BTreeSet<&String> = self.children.iter().chain(&self.grandchildren).collect();
        if let Some(n) = self.fathers.iter().chain(&self.mothers).find(|n| below.contains(n)) {
            return Some(format!("{n} would be both ancestor and descendant"));
        }
        None
    }

    fn shared_docs(&self, other: &Profile) -> Vec<String> {
        self.lines.keys().filter(|d| other.lines.contains_key(*d)).cloned().collect()
    }

    fn first_shared_line(&self, other: &Profile) -> Option<(String, u32)> {
        self.lines.iter().find_map(|(d, ls)| {
            let theirs = other.lines.get(d)?;
            ls.intersection(theirs).next().map(|&l| (d.clone(), l))
        })
    }
}

fn decide_r1(a: &Profile, b: &Profile) -> Decision {
    let Some((doc, line)) = a.first_shared_line(b) else {
        return Decision::NoMerge("no shared line".into());
    };
    match a.merged(b).contradiction() {
        Some(why) => Decision::NoMerge(why),
        None => Decision::Merge(Evidence::SharedLine { doc, line }),
    }
}

fn decide_r2(a: &Profile, b: &Profile, threshold: usize) -> Decision {
    let docs = a.shared_docs(b);
    if docs.len() < threshold {
        return Decision::NoMerge(format!("{} shared documents", docs.len()));
    }
    match a.merged(b).contradiction() {
        Some(why) => Decision::NoMerge(why),
        None => Decision::Merge(Evidence::SharedDocuments { docs }),
    }
}

fn lookup<'c>(c: &'c Corpus, r: &RecordRef) -> &'c IndividualRecord {
    c.record(r).unwrap_or_else(|| panic!("record {r} not in corpus"))
}

/// Applies R1 to two records of the same name.
pub fn rule_r1(pair: &CandidatePair, c: &Corpus) -> Decision {
    let names = Names::of(c);
    decide_r1(&Profile::of(lookup(c, &pair.a), &names), &Profile::of(lookup(c, &pair.b), &names))
}

/// Applies R2 with the given shared-document threshold.
pub fn rule_r2(pair: &CandidatePair, c: &Corpus, threshold: usize) -> Decision {
    let names = Names::of(c);
    decide_r2(
        &Profile::of(lookup(c, &pair.a), &names),
        &Profile::of(lookup(c, &pair.b), &names),
        threshold,
    )
}

/// All same-name record pairs, ordered by name key then local index pair.
pub fn candidate_pairs(c: &Corpus) -> Vec<CandidatePair> {
    let names = Names::of(c);
    let mut entries: Vec<&NameEntry> = c.entries.iter().collect();
    entries.sort_by(|a, b| a.name_key.cmp(&b.name_key));
    let mut out = Vec::new();
    for e in entries {
        let mut inds: Vec<&IndividualRecord> = e.individuals.iter().collect();
        inds.sort_by_key(|i| i.local_index);
        let profiles: Vec<Profile> = inds.iter().map(|i| Profile::of(i, &names)).collect();
        for i in 0..inds.len() {
            for j in i + 1..inds.len() {
                let (pa, pb) = (&profiles[i], &profiles[j]);
                let shared_lines = pa
                    .lines
                    .iter()
                    .flat_map(|(d, ls)| {
                        let theirs = pb.lines.get(d);
                        ls.iter()
                            .filter(move |l| theirs.is_some_and(|t| t.contains(l)))
                            .map(move |&l| (d.clone(), l))
                    })
                    .collect();
                out.push(CandidatePair {
                    a: RecordRef { name_key: e.name_key.clone(), local_index: inds[i].local_index },
                    b: RecordRef { name_key: e.name_key.clone(), local_index: inds[j].local_index },
                    shared_docs: pa.shared_docs(pb),
                    shared_lines,
                });
            }
        }
    }
    out
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind((0..n).collect())
    }

    fn find(&mut self, x: usize) -> usize {
        let mut r = x;
        while self.0[r] != r {
            r = self.0[r];
        }
        let mut y = x;
        while self.0[y] != r {
            let next = self.0[y];
            self.0[y] = r;
            y = next;
        }
        r
    }

    /// Joins the two sets under the smaller root.
    fn union(&mut self, a: usize, b: usize) -> usize {
        let (ra, rb) = (self.find(a), self.find(b));
        let (keep, drop) = (ra.min(rb), ra.max(rb));
        self.0[drop] = keep;
        keep
    }
}

struct EntryResolution {
    /// Groups of positions into the sorted individuals, each ascending.
    groups: Vec<Vec<usize>>,
    merges: Vec<MergeRecord>,
    same: Vec<Vec<bool>>,
}

fn fixpoint(
    name_key: &str,
    inds: &[&IndividualRecord],
    profiles: &[Profile],
    cfg: &IdentityConfig,
    reversed: bool,
) -> EntryResolution {
    let n = inds.len();
    let mut pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    if reversed {
        pairs.reverse();
    }
    let mut uf = UnionFind::new(n);
    let mut group: Vec<Option<Profile>> = profiles.iter().cloned().map(Some).collect();
    let mut merges = Vec::new();
    loop {
        let mut changed = false;
        for &(i, j) in &pairs {
            let (ri, rj) = (uf.find(i), uf.find(j));
            if ri == rj {
                continue;
            }
            let (pa, pb) = (group[ri].as_ref().unwrap(), group[rj].as_ref().unwrap());
            let (rule, decision) = match decide_r1(pa, pb) {
                Decision::Merge(e) => (Rule::R1, Decision::Merge(e)),
                Decision::NoMerge(_) => (Rule::R2, decide_r2(pa, pb, cfg.r2_threshold)),
            };
            if let Decision::Merge(evidence) = decision {
                let merged = pa.merged(pb);
                let root = uf.union(ri, rj);
                group[ri] = None;
                group[rj] = None;
                group[root] = Some(merged);
                merges.push(MergeRecord {
                    name_key: name_key.to_owned(),
                    left: inds[i].local_index,
                    right: inds[j].local_index,
                    rule,
                    evidence,
                });
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    let mut by_root: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..n {
        by_root.entry(uf.find(i)).or_default().push(i);
    }
    let same = (0..n).map(|i| (0..n).map(|j| uf.find(i) == uf.find(j)).collect()).collect();
    EntryResolution { groups: by_root.into_values().collect(), merges, same }
}

struct ResolvedEntry<'c> {
    entry: &'c NameEntry,
    inds: Vec<&'c IndividualRecord>,
    forward: EntryResolution,
    order_sensitive: Vec<(RecordRef, RecordRef)>,
}

fn resolve_entry<'c>(
    entry: &'c NameEntry,
    names: &Names,
    cfg: &IdentityConfig,
) -> ResolvedEntry<'c> {
    let mut inds: Vec<&IndividualRecord> = entry.individuals.iter().collect();
    inds.sort_by_key(|i| i.local_index);
    let profiles: Vec<Profile> = inds.iter().map(|i| Profile::of(i, names)).collect();
    let forward = fixpoint(&entry.name_key, &inds, &profiles, cfg, false);
    let backward = fixpoint(&entry.name_key, &inds, &profiles, cfg, true);
    let mut order_sensitive = Vec::new();
    for i in 0..inds.len() {
        for j in i + 1..inds.len() {
            if forward.same[i][j] != backward.same[i][j] {
                order_sensitive.push((
                    RecordRef { name_key: entry.name_key.clone(), local_index: inds[i].local_index },
                    RecordRef { name_key: entry.name_key.clone(), local_index: inds[j].local_index },
                ));
            }
        }
    }
    ResolvedEntry { entry, inds, forward, order_sensitive }
}

fn merge_attestations(records: &[&IndividualRecord]) -> Vec<Attestation> {
    let mut map: BTreeMap<String, BTreeSet<u32>> = BTreeMap::new();
    for r in records {
        for a in &r.attestations {
            map.entry(a.doc.clone()).or_default().extend(&a.lines);
        }
    }
    map.into_iter()
        .map(|(doc, lines)| Attestation { doc, lines: lines.into_iter().collect() })
        .collect()
}

fn merge_kin(records: &[&IndividualRecord]) -> Vec<KinAssertion> {
    let mut out: Vec<KinAssertion> = Vec::new();
    for r in records {
        for k in &r.kin {
            if !out.contains(k) {
                out.push(k.clone());
            }
        }
    }
    out
}

/// Applies R1 and R2 to a fixpoint per name, then binds kinship statements
/// to persons.
pub fn resolve_identities(c: &Corpus, cfg: &IdentityConfig) -> PersonRegistry {
    let names = Names::of(c);
    let mut entries: Vec<&NameEntry> = c.entries.iter().collect();
    entries.sort_by(|a, b| a.name_key.cmp(&b.name_key));
    let resolved: Vec<ResolvedEntry> = entries
        .par_iter()
        .map(|e| resolve_entry(e, &names, cfg))
        .collect();

    let mut persons = Vec::new();
    let mut merges = Vec::new();
    let mut order_sensitive = Vec::new();
    let mut spellings = BTreeMap::new();
    for r in resolved {
        spellings.insert(r.entry.name_key.clone(), r.entry.spellings.clone());
        for g in &r.forward.groups {
            let records: Vec<&IndividualRecord> = g.iter().map(|&i| r.inds[i]).collect();
            let attestations = merge_attestations(&records);
            persons.push(Person {
                id: persons.len(),
                name_key: r.entry.name_key.clone(),
                records: records.iter().map(|x| x.local_index).collect(),
                father: None,
                mother: None,
                documents: attestations.iter().map(|a| a.doc.clone()).collect(),
                attestations,
                kin: merge_kin(&records),
                roles: records.iter().flat_map(|x| x.roles.iter().copied()).collect(),
            });
        }
        merges.extend(r.forward.merges);
        order_sensitive.extend(r.order_sensitive);
    }

    let unbound = bind_kin(&mut persons, &names.index);
    PersonRegistry {
        config: cfg.clone(),
        persons,
        merges,
        unbound,
        order_sensitive,
        spellings,
    }
}

/// Turns kinship statements into father and mother links. A target is bound
/// to the unique person of that name attested in the statement's document
/// (or, without a document, sharing any document with the subject); when
/// nobody of that name is co-attested and the name has exactly one person,
/// that person is used.
fn bind_kin(persons: &mut [Person], index: &BTreeMap<&str, BTreeSet<&str>>) -> Vec<UnboundLink> {
    let mut by_name: BTreeMap<String, Vec<PersonId>> = BTreeMap::new();
    let mut by_doc: BTreeMap<String, Vec<PersonId>> = BTreeMap::new();
    for p in persons.iter() {
        by_name.entry(p.name_key.clone()).or_default().push(p.id);
        for d in &p.documents {
            by_doc.entry(d.clone()).or_default().push(p.id);
        }
    }
    let known_mothers: BTreeSet<PersonId> = persons
        .iter()
        .filter(|p| p.kin.iter().any(|k| k.relation == Relation::MotherOf))
        .map(|p| p.id)
        .collect();

    let mut unbound = Vec::new();
    for pid in 0..persons.len() {
        let kin = persons[pid].kin.clone();
        for k in kin {
            let mut fail = |reason: String| {
                unbound.push(UnboundLink {
                    person: pid,
                    relation: k.relation,
                    target: k.target.clone(),
                    doc: k.doc.clone(),
                    reason,
                })
            };
            if k.relation == Relation::GrandfatherOf {
                continue;
            }
            let Some(names) = index.get(k.target.as_str()) else {
                fail("unknown name".into());
                continue;
            };
            let named: BTreeSet<PersonId> = names
                .iter()
                .flat_map(|n| by_name.get(*n).into_iter().flatten().copied())
                .filter(|&q| q != pid)
                .collect();
            let co_attested: Vec<PersonId> = match &k.doc {
                Some(d) => by_doc
                    .get(d)
                    .into_iter()
                    .flatten()
                    .copied()
                    .filter(|q| named.contains(q))
                    .collect(),
                None => named
                    .iter()
                    .copied()
                    .filter(|&q| !persons[q].documents.is_disjoint(&persons[pid].documents))
                    .collect(),
            };
            let target = match (co_attested.len(), named.len()) {
                (1, _) => co_attested[0],
                (0, 1) => *named.iter().next().unwrap(),
                (0, _) => {
                    fail(format!("{} candidates, none co-attested", named.len()));
                    continue;
                }
                (n, _) => {
                    fail(format!("{n} co-attested candidates"));
                    continue;
                }
            };
            let (parent, child, kind) = match k.relation {
                Relation::SonOf | Relation::DaughterOf => {
                    let kind = if known_mothers.contains(&target) { ParentKind::Mother } else { ParentKind::Father };
                    (target, pid, kind)
                }
                Relation::FatherOf => (pid, target, ParentKind::Father),
                Relation::MotherOf => (pid, target, ParentKind::Mother),
                Relation::GrandfatherOf => unreachable!(),
            };
            let slot = match kind {
                ParentKind::Father => persons[child].father,
                ParentKind::Mother => persons[child].mother,
            };
            match slot {
                Some(existing) if existing == parent => {}
                Some(existing) => fail(format!("child already linked to person {existing}")),
                None if is_ancestor(persons, child, parent) => fail("link would create a cycle".into()),
                None => match kind {
                    ParentKind::Father => persons[child].father = Some(parent),
                    ParentKind::Mother => persons[child].mother = Some(parent),
                },
            }
        }
    }
    unbound
}
