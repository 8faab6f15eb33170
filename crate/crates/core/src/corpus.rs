//! The name-index corpus: entries, individual records, kinship assertions and
//! document attestations, with a JSON-lines reader and writer.
//!
//! ```text
//! {"format":"chronos-corpus","version":1}
//! {"name_key":"ILUIA","spellings":["Ilu-ia","I-lu-ia"],"individuals":[...]}
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const FORMAT: &str = "chronos-corpus";
pub const VERSION: u32 = 1;
pub const DEFAULT_CONTRACTOR_LINES: u32 = 10;

#[derive(Debug, Error, PartialEq)]
pub enum CorpusError {
    #[error("line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("line {line}: missing or unsupported header ({message})")]
    Header { line: usize, message: String },
    #[error("line {line}: unknown relation code `{code}`")]
    UnknownRelation { line: usize, code: String },
    #[error("line {line}: unknown role `{role}`")]
    UnknownRole { line: usize, role: String },
    #[error("line {line}: duplicate local_index {local_index} in entry {name_key}")]
    DuplicateLocalIndex { line: usize, name_key: String, local_index: u32 },
    #[error("line {line}: duplicate name_key {name_key}")]
    DuplicateNameKey { line: usize, name_key: String },
    #[error("line {line}: {message}")]
    Invalid { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    SonOf,
    DaughterOf,
    FatherOf,
    MotherOf,
    GrandfatherOf,
}

impl Relation {
    pub const ALL: [Relation; 5] = [
        Relation::SonOf,
        Relation::DaughterOf,
        Relation::FatherOf,
        Relation::MotherOf,
        Relation::GrandfatherOf,
    ];

    pub fn code(self) -> &'static str {
        match self {
            Relation::SonOf => "son_of",
            Relation::DaughterOf => "daughter_of",
            Relation::FatherOf => "father_of",
            Relation::MotherOf => "mother_of",
            Relation::GrandfatherOf => "grandfather_of",
        }
    }

    pub fn from_code(code: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|r| r.code() == code)
    }

    /// The target is a parent of the subject.
    pub fn names_parent(self) -> bool {
        matches!(self, Relation::SonOf | Relation::DaughterOf)
    }

    /// The target is a child of the subject.
    pub fn names_child(self) -> bool {
        matches!(self, Relation::FatherOf | Relation::MotherOf)
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Contractor,
    Scribe,
    Witness,
}

impl Role {
    pub fn code(self) -> &'static str {
        match self {
            Role::Contractor => "contractor",
            Role::Scribe => "scribe",
            Role::Witness => "witness",
        }
    }

    pub fn from_code(code: &str) -> Option<Self> {
        [Role::Contractor, Role::Scribe, Role::Witness]
            .into_iter()
            .find(|r| r.code() == code)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct KinAssertion {
    pub relation: Relation,
    /// Spelling of the related name as written in the index.
    pub target: String,
    pub doc: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Attestation {
    pub doc: String,
    /// Sorted and duplicate free; empty when only the document is cited.
    pub lines: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndividualRecord {
    pub local_index: u32,
    pub kin: Vec<KinAssertion>,
    pub attestations: Vec<Attestation>,
    pub roles: BTreeSet<Role>,
}

impl IndividualRecord {
    pub fn documents(&self) -> impl Iterator<Item = &str> {
        self.attestations.iter().map(|a| a.doc.as_str())
    }

    pub fn min_line(&self) -> Option<u32> {
        self.attestations.iter().flat_map(|a| a.lines.first().copied()).min()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NameEntry {
    pub name_key: String,
    pub spellings: Vec<String>,
    pub individuals: Vec<IndividualRecord>,
}

/// Identifies one individual record: a name and its numbered sub-entry.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RecordRef {
    pub name_key: String,
    pub local_index: u32,
}

impl fmt::Display for RecordRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {})", self.name_key, self.local_index)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Corpus {
    pub entries: Vec<NameEntry>,
    pub documents: BTreeSet<String>,
}

fn canonical_attestations(attestations: Vec<Attestation>) -> Vec<Attestation> {
    let mut out: Vec<Attestation> = Vec::with_capacity(attestations.len());
    for a in attestations {
        match out.iter_mut().find(|o| o.doc == a.doc) {
            Some(o) => o.lines.extend(a.lines),
            None => out.push(a),
        }
    }
    for a in &mut out {
        a.lines.sort_unstable();
        a.lines.dedup();
    }
    out
}

impl Corpus {
    /// Builds a corpus from entries, canonicalizing line sets, inferring the
    /// contractor role and checking the structural invariants.
    pub fn new(entries: Vec<NameEntry>, contractor_lines: u32) -> Result<Self, CorpusError> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::with_capacity(entries.len());
        for (k, mut entry) in entries.into_iter().enumerate() {
            let line = k + 2;
            validate_entry(&entry, line)?;
            if !seen.insert(entry.name_key.clone()) {
                return Err(CorpusError::DuplicateNameKey { line, name_key: entry.name_key });
            }
            for ind in &mut entry.individuals {
                ind.attestations = canonical_attestations(std::mem::take(&mut ind.attestations));
                if ind.min_line().is_some_and(|l| l <= contractor_lines) {
                    ind.roles.insert(Role::Contractor);
                }
            }
            out.push(entry);
        }
        let documents = out
            .iter()
            .flat_map(|e| &e.individuals)
            .flat_map(|i| i.documents().map(str::to_owned))
            .collect();
        Ok(Corpus { entries: out, documents })
    }

    pub fn entry(&self, name_key: &str) -> Option<&NameEntry> {
        self.entries.iter().find(|e| e.name_key == name_key)
    }

    pub fn record(&self, r: &RecordRef) -> Option<&IndividualRecord> {
        self.entry(&r.name_key)?
            .individuals
            .iter()
            .find(|i| i.local_index == r.local_index)
    }

    pub fn records(&self) -> impl Iterator<Item = (RecordRef, &IndividualRecord)> {
        self.entries.iter().flat_map(|e| {
            e.individuals.iter().map(move |i| {
                (
                    RecordRef { name_key: e.name_key.clone(), local_index: i.local_index },
                    i,
                )
            })
        })
    }

    pub fn record_count(&self) -> usize {
        self.entries.iter().map(|e| e.individuals.len()).sum()
    }

    /// Maps every spelling, and every name key itself, to the name keys that
    /// carry it.
    pub fn spelling_index(&self) -> BTreeMap<&str, BTreeSet<&str>> {
        let mut index: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
        for e in &self.entries {
            index.entry(e.name_key.as_str()).or_default().insert(&e.name_key);
            for s in &e.spellings {
                index.entry(s.as_str()).or_default().insert(&e.name_key);
            }
        }
        index
    }
}

fn invalid(line: usize, message: impl Into<String>) -> CorpusError {
    CorpusError::Invalid { line, message: message.into() }
}

fn validate_entry(entry: &NameEntry, line: usize) -> Result<(), CorpusError> {
    if entry.name_key.is_empty() {
        return Err(invalid(line, "empty name_key"));
    }
    if entry.individuals.is_empty() {
        return Err(invalid(line, format!("entry {} has no individuals", entry.name_key)));
    }
    let distinct: BTreeSet<&String> = entry.spellings.iter().collect();
    if distinct.len() != entry.spellings.len() {
        return Err(invalid(line, format!("entry {} repeats a spelling", entry.name_key)));
    }
    let mut indices = BTreeSet::new();
    for ind in &entry.individuals {
        if ind.local_index == 0 {
            return Err(invalid(line, format!("entry {}: local_index must be positive", entry.name_key)));
        }
        if !indices.insert(ind.local_index) {
            return Err(CorpusError::DuplicateLocalIndex {
                line,
                name_key: entry.name_key.clone(),
                local_index: ind.local_index,
            });
        }
        if ind.attestations.is_empty() && ind.kin.is_empty() {
            return Err(invalid(
                line,
                format!("{} {}) has neither attestations nor kin", entry.name_key, ind.local_index),
            ));
        }
        for a in &ind.attestations {
            if a.doc.is_empty() {
                return Err(invalid(line, "empty document id"));
            }
            if a.lines.contains(&0) {
                return Err(invalid(line, format!("line numbers in {} must be positive", a.doc)));
            }
        }
        for k in &ind.kin {
            if k.target.is_empty() {
                return Err(invalid(line, "empty kin target"));
            }
            if k.doc.as_deref() == Some("") {
                return Err(invalid(line, "empty kin document id"));
            }
        }
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format: String,
    version: u32,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireEntry {
    name_key: String,
    spellings: Vec<String>,
    individuals: Vec<WireIndividual>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireIndividual {
    local_index: i64,
    kin: Vec<WireKin>,
    attestations: Vec<WireAttestation>,
    roles: Vec<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireKin {
    relation: String,
    target: String,
    doc: Option<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireAttestation {
    doc: String,
    lines: Vec<i64>,
}

fn syntax(line: usize, e: serde_json::Error) -> CorpusError {
    CorpusError::Syntax { line, column: e.column(), message: e.to_string() }
}

fn from_wire(w: WireEntry, line: usize) -> Result<NameEntry, CorpusError> {
    let mut individuals = Vec::with_capacity(w.individuals.len());
    for wi in w.individuals {
        let local_index = u32::try_from(wi.local_index)
            .ok()
            .filter(|&v| v > 0)
            .ok_or_else(|| invalid(line, format!("invalid local_index {}", wi.local_index)))?;
        let mut kin = Vec::with_capacity(wi.kin.len());
        for k in wi.kin {
            let relation = Relation::from_code(&k.relation)
                .ok_or_else(|| CorpusError::UnknownRelation { line, code: k.relation.clone() })?;
            kin.push(KinAssertion { relation, target: k.target, doc: k.doc });
        }
        let mut attestations = Vec::with_capacity(wi.attestations.len());
        for a in wi.attestations {
            let lines = a
                .lines
                .iter()
                .map(|&l| u32::try_from(l).ok().filter(|&v| v > 0))
                .collect::<Option<Vec<u32>>>()
                .ok_or_else(|| invalid(line, format!("line numbers in {} must be positive", a.doc)))?;
            attestations.push(Attestation { doc: a.doc, lines });
        }
        let mut roles = BTreeSet::new();
        for r in wi.roles {
            let role = Role::from_code(&r).ok_or(CorpusError::UnknownRole { line, role: r })?;
            roles.insert(role);
        }
        individuals.push(IndividualRecord { local_index, kin, attestations, roles });
    }
    Ok(NameEntry { name_key: w.name_key, spellings: w.spellings, individuals })
}

fn to_wire(e: &NameEntry) -> WireEntry {
    WireEntry {
        name_key: e.name_key.clone(),
        spellings: e.spellings.clone(),
        individuals: e
            .individuals
            .iter()
            .map(|i| WireIndividual {
                local_index: i.local_index.into(),
                kin: i
                    .kin
                    .iter()
                    .map(|k| WireKin {
                        relation: k.relation.code().to_owned(),
                        target: k.target.clone(),
                        doc: k.doc.clone(),
                    })
                    .collect(),
                attestations: i
                    .attestations
                    .iter()
                    .map(|a| WireAttestation {
                        doc: a.doc.clone(),
                        lines: a.lines.iter().map(|&l| l.into()).collect(),
                    })
                    .collect(),
                roles: i.roles.iter().map(|r| r.code().to_owned()).collect(),
            })
            .collect(),
    }
}

/// Parses a corpus file. Empty input yields an empty corpus.
pub fn parse_corpus(text: &str, contractor_lines: u32) -> Result<Corpus, CorpusError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let Some((k, first)) = lines.next() else {
        return Ok(Corpus::default());
    };
    let header: Header = serde_json::from_str(first).map_err(|e| CorpusError::Header {
        line: k + 1,
        message: e.to_string(),
    })?;
    if header.format != FORMAT || header.version != VERSION {
        return Err(CorpusError::Header {
            line: k + 1,
            message: format!("found {} version {}", header.format, header.version),
        });
    }

    let mut entries = Vec::new();
    let mut entry_lines = Vec::new();
    for (k, text) in lines {
        let line = k + 1;
        let wire: WireEntry = serde_json::from_str(text).map_err(|e| syntax(line, e))?;
        entries.push(from_wire(wire, line)?);
        entry_lines.push(line);
    }
    // Report invariant violations against the physical line.
    Corpus::new(entries, contractor_lines).map_err(|e| relabel(e, &entry_lines))
}

fn relabel(e: CorpusError, entry_lines: &[usize]) -> CorpusError {
    let fix = |line: usize| entry_lines.get(line.wrapping_sub(2)).copied().unwrap_or(line);
    match e {
        CorpusError::DuplicateLocalIndex { line, name_key, local_index } => {
            CorpusError::DuplicateLocalIndex { line: fix(line), name_key, local_index }
        }
        CorpusError::DuplicateNameKey { line, name_key } => {
            CorpusError::DuplicateNameKey { line: fix(line), name_key }
        }
        CorpusError::Invalid { line, message } => CorpusError::Invalid { line: fix(line), message },
        other => other,
    }
}

/// Writes the canonical text form: the header line, then one compact JSON
/// object per entry, each terminated by a newline.
pub fn serialize_corpus(c: &Corpus) -> String {
    let header = Header { format: FORMAT.to_owned(), version: VERSION };
    let mut out = serde_json::to_string(&header).expect("header serializes");
    out.push('\n');
    for e in &c.entries {
        out.push_str(&serde_json::to_string(&to_wire(e)).expect("entry serializes"));
        out.push('\n');
    }
    out
}

/// One pair per (individual record, distinct document) attestation.
pub fn attestation_pairs(c: &Corpus) -> Vec<(RecordRef, String)> {
    c.records()
        .flat_map(|(r, ind)| {
            let docs: BTreeSet<&str> = ind.documents().collect();
            docs.into_iter()
                .map(move |d| (r.clone(), d.to_owned()))
                .collect::<Vec<_>>()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "{\"format\":\"chronos-corpus\",\"version\":1}\n";

    #[test]
    fn empty_input_is_empty_corpus() {
        let c = parse_corpus("", 10).unwrap();
        assert!(c.entries.is_empty());
        assert!(c.documents.is_empty());
        assert_eq!(serialize_corpus(&c), HEADER);
        assert_eq!(parse_corpus(HEADER, 10).unwrap(), c);
    }

    #[test]
    fn lines_are_canonicalized_and_contractor_inferred() {
        let text = format!(
            "{HEADER}{}\n",
            r#"{"name_key":"A","spellings":["A-a"],"individuals":[{"local_index":1,"kin":[],"attestations":[{"doc":"D 2","lines":[14,3,3]},{"doc":"D 1","lines":[]},{"doc":"D 2","lines":[1]}],"roles":[]}]}"#
        );
        let c = parse_corpus(&text, 10).unwrap();
        let ind = &c.entries[0].individuals[0];
        assert_eq!(ind.attestations.len(), 2);
        assert_eq!(ind.attestations[0].lines, vec![1, 3, 14]);
        assert!(ind.roles.contains(&Role::Contractor));
        assert_eq!(c.documents.iter().collect::<Vec<_>>(), vec!["D 1", "D 2"]);

        let strict = parse_corpus(&text, 0).unwrap();
        assert!(strict.entries[0].individuals[0].roles.is_empty());
    }

    #[test]
    fn reports_syntax_position() {
        let text = format!("{HEADER}{{\"name_key\": \"A\",, }}\n");
        match parse_corpus(&text, 10) {
            Err(CorpusError::Syntax { line, column, .. }) => {
                assert_eq!(line, 2);
                assert!(column > 0);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_unknown_relation_and_duplicate_index() {
        let bad_rel = format!(
            "{HEADER}{}\n",
            r#"{"name_key":"A","spellings":[],"individuals":[{"local_index":1,"kin":[{"relation":"uncle_of","target":"B","doc":null}],"attestations":[],"roles":[]}]}"#
        );
        assert_eq!(
            parse_corpus(&bad_rel, 10),
            Err(CorpusError::UnknownRelation { line: 2, code: "uncle_of".into() })
        );
        let dup = format!(
            "{HEADER}\n{}\n",
            r#"{"name_key":"A","spellings":[],"individuals":[{"local_index":1,"kin":[],"attestations":[{"doc":"D","lines":[]}],"roles":[]},{"local_index":1,"kin":[],"attestations":[{"doc":"E","lines":[]}],"roles":[]}]}"#
        );
        assert_eq!(
            parse_corpus(&dup, 10),
            Err(CorpusError::DuplicateLocalIndex { line: 3, name_key: "A".into(), local_index: 1 })
        );
    }

    #[test]
    fn rejects_bad_header() {
        let text = "{\"format\":\"other\",\"version\":1}\n";
        assert!(matches!(parse_corpus(text, 10), Err(CorpusError::Header { line: 1, .. })));
    }
}
