//! Least-squares reconstruction of birth, death and publication years.
//!
//! Each person gets a birth year `b` and a death year `d`, each document a
//! publication year `P`. The years minimize
//!
//! ```text
//! Σᵢ (dᵢ − bᵢ − μᵢ)²  +  ε Σₖ (Pₖ − A)²  +  ε Σᵢ ((bᵢ + dᵢ)/2 − A)²
//! ```
//!
//! subject to the parent age rules, the rule that a participant was alive and
//! at least `g_p` years old at the contract, and `P_anchor = A`. The `μᵢ` are
//! drawn at random and the solve is repeated with fresh draws.

use std::collections::{BTreeMap, BTreeSet};

use chronos_qp::{CscMatrix, QpError, QpProblem, Settings, Solver, Status};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Corpus;
use crate::identity::{ParentKind, PersonId, PersonRegistry};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChronologyError {
    #[error("anchor document {0:?} is not in the corpus")]
    UnknownAnchor(String),
    #[error("person {person} is attested in unknown document {doc:?}")]
    UnknownDocument { person: PersonId, doc: String },
    #[error("person {0} referenced by a parent link is missing")]
    MissingPerson(PersonId),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("lifespan prior has {got} entries for {expected} persons")]
    PriorLength { expected: usize, got: usize },
    #[error("solver: {0}")]
    Solver(#[from] QpError),
    #[error("constraints are infeasible: {0}")]
    Infeasible(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChronologyParams {
    pub g_f: f64,
    pub g_m: f64,
    pub g_p: f64,
    pub lifespan_interval: (f64, f64),
    pub anchor_doc: String,
    pub anchor_year: f64,
    pub epsilon: f64,
    pub runs: usize,
    pub seed: u64,
}

impl Default for ChronologyParams {
    fn default() -> Self {
        ChronologyParams {
            g_f: 15.0,
            g_m: 20.0,
            g_p: 10.0,
            lifespan_interval: (20.0, 60.0),
            anchor_doc: String::new(),
            anchor_year: 100.0,
            epsilon: 1e-6,
            runs: 10,
            seed: 0,
        }
    }
}

impl ChronologyParams {
    pub fn validate(&self) -> Result<(), ChronologyError> {
        let (lo, hi) = self.lifespan_interval;
        let finite = [self.g_f, self.g_m, self.g_p, lo, hi, self.anchor_year, self.epsilon];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(ChronologyError::InvalidParams("non-finite value".into()));
        }
        if lo > hi {
            return Err(ChronologyError::InvalidParams(format!("lifespan interval [{lo}, {hi}] is empty")));
        }
        if self.epsilon <= 0.0 {
            return Err(ChronologyError::InvalidParams("epsilon must be positive".into()));
        }
        if self.runs == 0 {
            return Err(ChronologyError::InvalidParams("runs must be at least 1".into()));
        }
        Ok(())
    }
}

/// Target lifespan per person.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LifespanPrior {
    pub mu: Vec<f64>,
}

pub fn sample_lifespans(n: usize, interval: (f64, f64), seed: u64) -> LifespanPrior {
    let (lo, hi) = interval;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mu = (0..n)
        .map(|_| if lo < hi { rng.random_range(lo..=hi) } else { lo })
        .collect();
    LifespanPrior { mu }
}

/// What a constraint row encodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Constraint {
    /// `b_child − b_parent ≥ g` with `g` the father or mother age.
    ParentAge { child: PersonId, parent: PersonId, parent_kind: ParentKind },
    /// `d_parent − b_child ≥ 0`.
    ParentAlive { child: PersonId, parent: PersonId, parent_kind: ParentKind },
    /// `P_doc − b_person ≥ g_p`.
    ContractAge { person: PersonId, doc: usize },
    /// `d_person − P_doc ≥ 0`.
    AliveAtContract { person: PersonId, doc: usize },
    /// `P_doc = year`.
    Pin { doc: usize, year: f64 },
}

/// Variable layout `(b_0..b_{n−1}, d_0..d_{n−1}, P_0..P_{m−1})` and the
/// meaning of every constraint row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexMap {
    pub persons: usize,
    /// Document ids in variable order.
    pub documents: Vec<String>,
    pub anchor: usize,
    pub constraints: Vec<Constraint>,
}

impl IndexMap {
    pub fn birth(&self, i: PersonId) -> usize {
        i
    }

    pub fn death(&self, i: PersonId) -> usize {
        self.persons + i
    }

    pub fn publication(&self, k: usize) -> usize {
        2 * self.persons + k
    }

    pub fn document(&self, id: &str) -> Option<usize> {
        self.documents.binary_search_by(|d| d.as_str().cmp(id)).ok()
    }

    pub fn variables(&self) -> usize {
        2 * self.persons + self.documents.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChronologyProblem {
    pub qp: QpProblem,
    pub index: IndexMap,
    pub prior: LifespanPrior,
    pub params: ChronologyParams,
}

/// Difference row `x_hi − x_lo ≥ bound`.
fn difference_row(lo: usize, hi: usize) -> [(usize, f64); 2] {
    [(hi, 1.0), (lo, -1.0)]
}

pub fn build_qp(
    r: &PersonRegistry,
    c: &Corpus,
    prior: &LifespanPrior,
    params: &ChronologyParams,
) -> Result<ChronologyProblem, ChronologyError> {
    params.validate()?;
    let n = r.len();
    if prior.mu.len() != n {
        return Err(ChronologyError::PriorLength { expected: n, got: prior.mu.len() });
    }
    let documents: Vec<String> = c.documents.iter().cloned().collect();
    let mut index = IndexMap {
        persons: n,
        anchor: 0,
        documents,
        constraints: Vec::new(),
    };
    index.anchor = index
        .document(&params.anchor_doc)
        .ok_or_else(|| ChronologyError::UnknownAnchor(params.anchor_doc.clone()))?;

    let mut rows: Vec<(Vec<(usize, f64)>, f64, f64)> = Vec::new();
    for p in &r.persons {
        for (kind, parent) in p.parents() {
            if parent >= n {
                return Err(ChronologyError::MissingPerson(parent));
            }
            let g = match kind {
                ParentKind::Father => params.g_f,
                ParentKind::Mother => params.g_m,
            };
            rows.push((difference_row(index.birth(parent), index.birth(p.id)).to_vec(), g, f64::INFINITY));
            index.constraints.push(Constraint::ParentAge { child: p.id, parent, parent_kind: kind });
            rows.push((difference_row(index.birth(p.id), index.death(parent)).to_vec(), 0.0, f64::INFINITY));
            index.constraints.push(Constraint::ParentAlive { child: p.id, parent, parent_kind: kind });
        }
        for doc in &p.documents {
            let k = index.document(doc).ok_or_else(|| ChronologyError::UnknownDocument {
                person: p.id,
                doc: doc.clone(),
            })?;
            rows.push((difference_row(index.birth(p.id), index.publication(k)).to_vec(), params.g_p, f64::INFINITY));
            index.constraints.push(Constraint::ContractAge { person: p.id, doc: k });
            rows.push((difference_row(index.publication(k), index.death(p.id)).to_vec(), 0.0, f64::INFINITY));
            index.constraints.push(Constraint::AliveAtContract { person: p.id, doc: k });
        }
    }
    let a = index.anchor;
    rows.push((vec![(index.publication(a), 1.0)], params.anchor_year, params.anchor_year));
    index.constraints.push(Constraint::Pin { doc: a, year: params.anchor_year });

    let (eps, year) = (params.epsilon, params.anchor_year);
    let mut q = Vec::with_capacity(4 * n + index.documents.len());
    let mut lin = vec![0.0; index.variables()];
    for i in 0..n {
        let (b, d) = (index.birth(i), index.death(i));
        q.push((b, b, 2.0 + eps / 2.0));
        q.push((d, d, 2.0 + eps / 2.0));
        q.push((b, d, -2.0 + eps / 2.0));
        q.push((d, b, -2.0 + eps / 2.0));
        lin[b] = 2.0 * prior.mu[i] - eps * year;
        lin[d] = -2.0 * prior.mu[i] - eps * year;
    }
    for k in 0..index.documents.len() {
        let v = index.publication(k);
        q.push((v, v, 2.0 * eps));
        lin[v] = -2.0 * eps * year;
    }
    let triplets: Vec<(usize, usize, f64)> = rows
        .iter()
        .enumerate()
        .flat_map(|(row, (coefs, _, _))| coefs.iter().map(move |&(col, v)| (row, col, v)))
        .collect();
    let nv = index.variables();
    let qp = QpProblem::new(
        CscMatrix::from_triplets(nv, nv, &q)?,
        lin,
        CscMatrix::from_triplets(rows.len(), nv, &triplets)?,
        rows.iter().map(|r| r.1).collect(),
        rows.iter().map(|r| r.2).collect(),
    )?;
    Ok(ChronologyProblem {
        qp,
        index,
        prior: prior.clone(),
        params: params.clone(),
    })
}

/// Fixes the publication year of a further document.
pub fn pin_document(problem: &mut ChronologyProblem, doc: &str, year: f64) -> Result<(), ChronologyError> {
    let k = problem
        .index
        .document(doc)
        .ok_or_else(|| ChronologyError::UnknownAnchor(doc.to_owned()))?;
    let v = problem.index.publication(k);
    problem.qp.push_row(&[(v, 1.0)], year, year)?;
    problem.index.constraints.push(Constraint::Pin { doc: k, year });
    Ok(())
}

/// Largest violation per constraint family.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ResidualReport {
    pub parent: f64,
    pub attestation: f64,
    pub anchor: f64,
}

impl ResidualReport {
    pub fn max(&self) -> f64 {
        self.parent.max(self.attestation).max(self.anchor)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timeline {
    pub birth: Vec<f64>,
    pub death: Vec<f64>,
    pub documents: Vec<String>,
    pub publication: Vec<f64>,
    pub person_anchored: Vec<bool>,
    pub document_anchored: Vec<bool>,
    /// `Σ (dᵢ − bᵢ − μᵢ)²`.
    pub lifespan_objective: f64,
    /// Lifespan objective plus the ε terms.
    pub objective: f64,
    pub status: String,
    pub iterations: usize,
    pub residuals: ResidualReport,
}

impl Timeline {
    pub fn publication_of(&self, doc: &str) -> Option<f64> {
        self.documents
            .binary_search_by(|d| d.as_str().cmp(doc))
            .ok()
            .map(|k| self.publication[k])
    }
}

/// Violations of the parent, attestation and anchor rules, computed straight
/// from the registry.
pub fn constraint_violations(
    r: &PersonRegistry,
    params: &ChronologyParams,
    birth: &[f64],
    death: &[f64],
    publication: &BTreeMap<String, f64>,
) -> ResidualReport {
    let mut out = ResidualReport::default();
    for p in &r.persons {
        let i = p.id;
        if let Some(f) = p.father {
            out.parent = out.parent.max(birth[f] + params.g_f - birth[i]).max(birth[i] - death[f]);
        }
        if let Some(m) = p.mother {
            out.parent = out.parent.max(birth[m] + params.g_m - birth[i]).max(birth[i] - death[m]);
        }
        for doc in &p.documents {
            let year = publication[doc];
            out.attestation = out.attestation.max(birth[i] + params.g_p - year).max(year - death[i]);
        }
    }
    if let Some(&year) = publication.get(&params.anchor_doc) {
        out.anchor = (year - params.anchor_year).abs();
    }
    out
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Variables coupled to the anchor through constraint rows or a shared
/// person.
fn anchored_variables(problem: &ChronologyProblem) -> Vec<bool> {
    let idx = &problem.index;
    let mut parent: Vec<usize> = (0..idx.variables()).collect();
    let mut union = |a: usize, b: usize| {
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        parent[ra.max(rb)] = ra.min(rb);
    };
    for i in 0..idx.persons {
        union(idx.birth(i), idx.death(i));
    }
    for c in &idx.constraints {
        match *c {
            Constraint::ParentAge { child, parent, .. } | Constraint::ParentAlive { child, parent, .. } => {
                union(idx.birth(child), idx.birth(parent))
            }
            Constraint::ContractAge { person, doc } | Constraint::AliveAtContract { person, doc } => {
                union(idx.birth(person), idx.publication(doc))
            }
            Constraint::Pin { .. } => {}
        }
    }
    let pinned: BTreeSet<usize> = idx
        .constraints
        .iter()
        .filter_map(|c| match c {
            Constraint::Pin { doc, .. } => Some(find(&mut parent, idx.publication(*doc))),
            _ => None,
        })
        .collect();
    (0..idx.variables()).map(|v| pinned.contains(&find(&mut parent, v))).collect()
}

/// Violations recomputed from the row descriptions.
fn row_violations(problem: &ChronologyProblem, x: &[f64]) -> ResidualReport {
    let idx = &problem.index;
    let prm = &problem.params;
    let mut out = ResidualReport::default();
    for c in &idx.constraints {
        match *c {
            Constraint::ParentAge { child, parent, parent_kind } => {
                let g = if parent_kind == ParentKind::Father { prm.g_f } else { prm.g_m };
                out.parent = out.parent.max(x[idx.birth(parent)] + g - x[idx.birth(child)]);
            }
            Constraint::ParentAlive { child, parent, .. } => {
                out.parent = out.parent.max(x[idx.birth(child)] - x[idx.death(parent)]);
            }
            Constraint::ContractAge { person, doc } => {
                out.attestation = out.attestation.max(x[idx.birth(person)] + prm.g_p - x[idx.publication(doc)]);
            }
            Constraint::AliveAtContract { person, doc } => {
                out.attestation = out.attestation.max(x[idx.publication(doc)] - x[idx.death(person)]);
            }
            Constraint::Pin { doc, year } => {
                out.anchor = out.anchor.max((x[idx.publication(doc)] - year).abs());
            }
        }
    }
    out
}

fn solver_settings() -> Settings {
    Settings {
        tol: 1e-7,
        max_iter: 400_000,
        ..Settings::default()
    }
}

/// Solves one instance and maps the solution back to years.
pub fn canonical_solve(problem: &ChronologyProblem) -> Result<Timeline, ChronologyError> {
    let sol = Solver::new(solver_settings()).solve(&problem.qp)?;
    if sol.status == Status::InfeasibleDetected {
        return Err(ChronologyError::Infeasible(format!(
            "solver certificate after {} iterations; check the parent graph for cycles",
            sol.iterations
        )));
    }
    let idx = &problem.index;
    let anchored = anchored_variables(problem);
    let mut x = sol.x.clone();

    // Every row except the pins is a difference of two variables, so moving
    // the anchored block as a whole keeps them intact while it puts the anchor
    // exactly on its year.
    let shift = problem.params.anchor_year - x[idx.publication(idx.anchor)];
    let pins = idx.constraints.iter().filter(|c| matches!(c, Constraint::Pin { .. })).count();
    if pins == 1 {
        for (v, xv) in x.iter_mut().enumerate() {
            if anchored[v] {
                *xv += shift;
            }
        }
    }

    let n = idx.persons;
    let birth = x[..n].to_vec();
    let death = x[n..2 * n].to_vec();
    let publication = x[2 * n..].to_vec();
    let lifespan_objective: f64 = (0..n)
        .map(|i| (death[i] - birth[i] - problem.prior.mu[i]).powi(2))
        .sum();
    let (eps, year) = (problem.params.epsilon, problem.params.anchor_year);
    let regular: f64 = publication.iter().map(|p| (p - year).powi(2)).sum::<f64>()
        + (0..n).map(|i| ((birth[i] + death[i]) / 2.0 - year).powi(2)).sum::<f64>();
    Ok(Timeline {
        residuals: row_violations(problem, &x),
        person_anchored: (0..n).map(|i| anchored[idx.birth(i)]).collect(),
        document_anchored: (0..idx.documents.len()).map(|k| anchored[idx.publication(k)]).collect(),
        documents: idx.documents.clone(),
        lifespan_objective,
        objective: lifespan_objective + eps * regular,
        status: sol.status.as_str().to_owned(),
        iterations: sol.iterations,
        birth,
        death,
        publication,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spread {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
}

impl Spread {
    fn of(values: impl Iterator<Item = f64>) -> Spread {
        let (mut min, mut max, mut sum, mut count) = (f64::INFINITY, f64::NEG_INFINITY, 0.0, 0usize);
        for v in values {
            min = min.min(v);
            max = max.max(v);
            sum += v;
            count += 1;
        }
        Spread { min, max, mean: sum / count as f64 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChronologyEnsemble {
    pub timelines: Vec<Timeline>,
    pub birth: Vec<Spread>,
    pub death: Vec<Spread>,
    pub publication: Vec<Spread>,
    /// Runs that did not reach an optimal solution, with the reason.
    pub failures: Vec<(usize, String)>,
}

/// One solve per seed `seed..seed + runs`, each with a fresh lifespan prior.
pub fn estimate_chronology(
    r: &PersonRegistry,
    c: &Corpus,
    params: &ChronologyParams,
) -> Result<ChronologyEnsemble, ChronologyError> {
    params.validate()?;
    let results: Vec<Result<Timeline, ChronologyError>> = (0..params.runs)
        .into_par_iter()
        .map(|run| {
            let prior = sample_lifespans(r.len(), params.lifespan_interval, params.seed.wrapping_add(run as u64));
            canonical_solve(&build_qp(r, c, &prior, params)?)
        })
        .collect();
    let mut timelines = Vec::new();
    let mut failures = Vec::new();
    for (run, res) in results.into_iter().enumerate() {
        match res {
            Ok(t) => {
                if t.status != Status::Optimal.as_str() {
                    failures.push((run, format!("solver status {}", t.status)));
                }
                timelines.push(t);
            }
            Err(e @ (ChronologyError::Infeasible(_) | ChronologyError::Solver(_))) => failures.push((run, e.to_string())),
            Err(e) => return Err(e),
        }
    }
    if timelines.is_empty() {
        let reason = failures.first().map(|f| f.1.clone()).unwrap_or_default();
        return Err(ChronologyError::Infeasible(reason));
    }
    let spread = |f: &dyn Fn(&Timeline) -> &Vec<f64>, len: usize| -> Vec<Spread> {
        (0..len).map(|j| Spread::of(timelines.iter().map(|t| f(t)[j]))).collect()
    };
    let n = r.len();
    let m = timelines[0].documents.len();
    Ok(ChronologyEnsemble {
        birth: spread(&|t| &t.birth, n),
        death: spread(&|t| &t.death, n),
        publication: spread(&|t| &t.publication, m),
        timelines,
        failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degenerate_interval_is_constant() {
        let p = sample_lifespans(50, (40.0, 40.0), 3);
        assert!(p.mu.iter().all(|&m| m == 40.0));
    }

    #[test]
    fn sampling_is_reproducible() {
        assert_eq!(sample_lifespans(20, (20.0, 60.0), 9), sample_lifespans(20, (20.0, 60.0), 9));
        assert_ne!(sample_lifespans(20, (20.0, 60.0), 9), sample_lifespans(20, (20.0, 60.0), 10));
    }

    #[test]
    fn rejects_empty_interval() {
        let params = ChronologyParams {
            lifespan_interval: (60.0, 20.0),
            ..ChronologyParams::default()
        };
        assert!(params.validate().is_err());
    }
}
