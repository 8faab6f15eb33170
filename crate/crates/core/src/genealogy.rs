//! Family trees: connected components of the parent graph, unification of
//! mutually consistent trees, statistics, extended members of a document,
//! anchor selection and generation assignment.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Corpus;
use crate::identity::{ParentKind, PersonId, PersonRegistry};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GenealogyError {
    #[error("unknown document {0}")]
    UnknownDocument(String),
    #[error("family tree {0} is attested in no document")]
    FamilyUnattested(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FamilyTree {
    pub id: usize,
    pub members: BTreeSet<PersonId>,
    /// Parent → child links between members.
    pub edges: BTreeSet<(PersonId, PersonId, ParentKind)>,
    /// Pairs of same-named members taken to be one individual when trees
    /// were unified.
    pub identified: Vec<(PersonId, PersonId)>,
    /// Longest parent chain plus one.
    pub depth: usize,
}

/// Members collapsed through `identified`, with parent links between the
/// collapsed nodes.
struct View {
    rep: BTreeMap<PersonId, PersonId>,
    parents: BTreeMap<PersonId, BTreeSet<(ParentKind, PersonId)>>,
}

impl View {
    fn of(tree: &FamilyTree) -> Self {
        let mut link: BTreeMap<PersonId, PersonId> = tree.members.iter().map(|&m| (m, m)).collect();
        fn root(link: &BTreeMap<PersonId, PersonId>, mut x: PersonId) -> PersonId {
            while link[&x] != x {
                x = link[&x];
            }
            x
        }
        for &(a, b) in &tree.identified {
            let (ra, rb) = (root(&link, a), root(&link, b));
            let (keep, drop) = (ra.min(rb), ra.max(rb));
            link.insert(drop, keep);
        }
        let rep: BTreeMap<PersonId, PersonId> =
            tree.members.iter().map(|&m| (m, root(&link, m))).collect();
        let mut parents: BTreeMap<PersonId, BTreeSet<(ParentKind, PersonId)>> =
            rep.values().map(|&r| (r, BTreeSet::new())).collect();
        for &(p, c, k) in &tree.edges {
            parents.get_mut(&rep[&c]).unwrap().insert((k, rep[&p]));
        }
        View { rep, parents }
    }

    fn nodes(&self) -> impl Iterator<Item = PersonId> + '_ {
        self.parents.keys().copied()
    }

    fn single_parents(&self) -> bool {
        self.parents.values().all(|ps| {
            ps.iter().filter(|(k, _)| *k == ParentKind::Father).count() <= 1
                && ps.iter().filter(|(k, _)| *k == ParentKind::Mother).count() <= 1
        })
    }

    /// 1 + longest ancestor chain for every node, or `None` on a cycle.
    fn levels(&self) -> Option<BTreeMap<PersonId, usize>> {
        let mut level: BTreeMap<PersonId, usize> = BTreeMap::new();
        let mut on_stack = BTreeSet::new();
        for start in self.nodes() {
            if level.contains_key(&start) {
                continue;
            }
            // Iterative post-order walk up the parent links.
            let mut stack = vec![(start, false)];
            while let Some((x, expanded)) = stack.pop() {
                if expanded {
                    on_stack.remove(&x);
                    let l = self.parents[&x].iter().map(|(_, p)| level[p]).max().unwrap_or(0) + 1;
                    level.insert(x, l);
                    continue;
                }
                if level.contains_key(&x) {
                    continue;
                }
                if !on_stack.insert(x) {
                    return None;
                }
                stack.push((x, true));
                for &(_, p) in &self.parents[&x] {
                    if on_stack.contains(&p) {
                        return None;
                    }
                    if !level.contains_key(&p) {
                        stack.push((p, false));
                    }
                }
            }
        }
        Some(level)
    }
}

impl FamilyTree {
    fn new(id: usize, members: BTreeSet<PersonId>, edges: BTreeSet<(PersonId, PersonId, ParentKind)>, identified: Vec<(PersonId, PersonId)>) -> Self {
        let mut t = FamilyTree { id, members, edges, identified, depth: 0 };
        t.depth = View::of(&t).levels().and_then(|l| l.values().max().copied()).unwrap_or(0);
        t
    }

    /// Number of distinct individuals after identification.
    pub fn node_count(&self) -> usize {
        View::of(self).parents.len()
    }

    /// Generation level of every member within the tree, 1 for members
    /// without ancestors in the tree.
    pub fn levels(&self) -> BTreeMap<PersonId, usize> {
        let view = View::of(self);
        let levels = view.levels().expect("family trees are acyclic");
        view.rep.iter().map(|(&m, r)| (m, levels[r])).collect()
    }

    /// Name keys of the collapsed nodes, with the nodes carrying each name.
    fn names(&self, view: &View, r: &PersonRegistry) -> BTreeMap<String, Vec<PersonId>> {
        let mut names: BTreeMap<String, Vec<PersonId>> = BTreeMap::new();
        for n in view.nodes() {
            names.entry(r.persons[n].name_key.clone()).or_default().push(n);
        }
        names
    }
}

/// One tree per connected component of the parent graph, ordered by
/// smallest member.
pub fn build_initial_trees(r: &PersonRegistry) -> Vec<FamilyTree> {
    let n = r.len();
    let mut link: Vec<usize> = (0..n).collect();
    fn root(link: &mut [usize], mut x: usize) -> usize {
        while link[x] != x {
            link[x] = link[link[x]];
            x = link[x];
        }
        x
    }
    for (p, c, _) in r.parent_links() {
        let (a, b) = (root(&mut link, p), root(&mut link, c));
        link[a.max(b)] = a.min(b);
    }
    let mut comps: BTreeMap<usize, BTreeSet<PersonId>> = BTreeMap::new();
    for x in 0..n {
        let rt = root(&mut link, x);
        comps.entry(rt).or_default().insert(x);
    }
    let mut edges: BTreeMap<usize, BTreeSet<(PersonId, PersonId, ParentKind)>> = BTreeMap::new();
    for (p, c, k) in r.parent_links() {
        edges.entry(root(&mut link, c)).or_default().insert((p, c, k));
    }
    comps
        .into_iter()
        .enumerate()
        .map(|(id, (rt, members))| FamilyTree::new(id, members, edges.remove(&rt).unwrap_or_default(), Vec::new()))
        .collect()
}

/// Why two trees may be unified.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeEvidence {
    pub names: Vec<String>,
    /// (node of a, node of b) taken to be the same individual.
    pub pairs: Vec<(PersonId, PersonId)>,
    /// Generation level in `a` minus level in `b`, equal for every pair.
    pub offset: i64,
}

fn merged(a: &FamilyTree, b: &FamilyTree, pairs: &[(PersonId, PersonId)]) -> FamilyTree {
    let mut identified = a.identified.clone();
    identified.extend(b.identified.iter().copied());
    identified.extend(pairs.iter().copied());
    FamilyTree::new(
        a.id.min(b.id),
        a.members.union(&b.members).copied().collect(),
        a.edges.union(&b.edges).copied().collect(),
        identified,
    )
}

/// Trees are consistent when at least two names occur exactly once in each,
/// and identifying those nodes leaves every individual with at most one
/// father and one mother, no ancestry cycle, and a single generation offset.
pub fn trees_consistent(a: &FamilyTree, b: &FamilyTree, r: &PersonRegistry) -> Option<TreeEvidence> {
    if a.members.iter().any(|m| b.members.contains(m)) {
        return None;
    }
    let (va, vb) = (View::of(a), View::of(b));
    let (na, nb) = (a.names(&va, r), b.names(&vb, r));
    let mut names = Vec::new();
    let mut pairs = Vec::new();
    for (name, xs) in &na {
        if let Some(ys) = nb.get(name) {
            if xs.len() == 1 && ys.len() == 1 {
                names.push(name.clone());
                pairs.push((xs[0], ys[0]));
            }
        }
    }
    if pairs.len() < 2 {
        return None;
    }
    let (la, lb) = (va.levels()?, vb.levels()?);
    let offset = la[&pairs[0].0] as i64 - lb[&pairs[0].1] as i64;
    if pairs.iter().any(|(x, y)| la[x] as i64 - lb[y] as i64 != offset) {
        return None;
    }
    let joined = View::of(&merged(a, b, &pairs));
    if !joined.single_parents() || joined.levels().is_none() {
        return None;
    }
    Some(TreeEvidence { names, pairs, offset })
}

/// Merges consistent trees until no pair is consistent. Trees are scanned in
/// ascending index order; a merged tree takes the smaller index and is
/// rescanned against all others. Output ids are renumbered densely.
pub fn unify_trees(trees: Vec<FamilyTree>, r: &PersonRegistry) -> Vec<FamilyTree> {
    let mut slots: Vec<Option<FamilyTree>> = trees.into_iter().map(Some).collect();
    let name_set = |t: &FamilyTree| -> BTreeSet<String> {
        t.members.iter().map(|&m| r.persons[m].name_key.clone()).collect()
    };
    let mut by_name: BTreeMap<String, BTreeSet<usize>> = BTreeMap::new();
    for (i, t) in slots.iter().enumerate() {
        for n in name_set(t.as_ref().unwrap()) {
            by_name.entry(n).or_default().insert(i);
        }
    }

    let mut changed = true;
    while changed {
        changed = false;
        let mut i = 0;
        while i < slots.len() {
            let Some(ti) = slots[i].as_ref() else {
                i += 1;
                continue;
            };
            // Trees sharing at least two names with tree i.
            let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
            for n in name_set(ti) {
                for &j in &by_name[&n] {
                    if j != i {
                        *counts.entry(j).or_default() += 1;
                    }
                }
            }
            let found = counts
                .into_iter()
                .filter(|&(_, c)| c >= 2)
                .find_map(|(j, _)| trees_consistent(ti, slots[j].as_ref().unwrap(), r).map(|ev| (j, ev)));
            let Some((j, ev)) = found else {
                i += 1;
                continue;
            };
            let (lo, hi) = (i.min(j), i.max(j));
            let (a, b) = (slots[i].take().unwrap(), slots[j].take().unwrap());
            let joined = merged(&a, &b, &ev.pairs);
            for n in name_set(&joined) {
                let set = by_name.get_mut(&n).unwrap();
                set.remove(&hi);
                set.insert(lo);
            }
            slots[lo] = Some(joined);
            changed = true;
            // Rescan from the merged tree.
            i = lo;
        }
    }
    slots
        .into_iter()
        .flatten()
        .enumerate()
        .map(|(id, mut t)| {
            t.id = id;
            t
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TreeStatistics {
    /// (generations, individuals) → number of trees.
    pub histogram: BTreeMap<(usize, usize), usize>,
    pub singletons: usize,
    pub two_person: usize,
    pub total: usize,
}

pub fn tree_stats(trees: &[FamilyTree]) -> TreeStatistics {
    let mut s = TreeStatistics::default();
    for t in trees {
        let size = t.node_count();
        *s.histogram.entry((t.depth, size)).or_default() += 1;
        s.singletons += usize::from(size == 1);
        s.two_person += usize::from(size == 2);
        s.total += 1;
    }
    s
}

/// Connected components of persons over kinship links and shared documents.
#[derive(Debug, Clone)]
pub struct ExtendedMembers {
    component: Vec<usize>,
    members: Vec<BTreeSet<PersonId>>,
    participants: BTreeMap<String, BTreeSet<PersonId>>,
}

impl ExtendedMembers {
    pub fn new(r: &PersonRegistry) -> Self {
        let n = r.len();
        let mut adjacency: Vec<Vec<PersonId>> = vec![Vec::new(); n];
        for (p, c, _) in r.parent_links() {
            adjacency[p].push(c);
            adjacency[c].push(p);
        }
        let mut participants: BTreeMap<String, BTreeSet<PersonId>> = BTreeMap::new();
        for p in &r.persons {
            for d in &p.documents {
                participants.entry(d.clone()).or_default().insert(p.id);
            }
        }
        for ps in participants.values() {
            // A chain through the participants connects them all.
            let v: Vec<PersonId> = ps.iter().copied().collect();
            for w in v.windows(2) {
                adjacency[w[0]].push(w[1]);
                adjacency[w[1]].push(w[0]);
            }
        }
        let mut component = vec![usize::MAX; n];
        let mut members = Vec::new();
        for s in 0..n {
            if component[s] != usize::MAX {
                continue;
            }
            let id = members.len();
            let mut set = BTreeSet::new();
            let mut queue = VecDeque::from([s]);
            component[s] = id;
            while let Some(x) = queue.pop_front() {
                set.insert(x);
                for &y in &adjacency[x] {
                    if component[y] == usize::MAX {
                        component[y] = id;
                        queue.push_back(y);
                    }
                }
            }
            members.push(set);
        }
        ExtendedMembers { component, members, participants }
    }

    pub fn participants(&self, doc: &str) -> Option<&BTreeSet<PersonId>> {
        self.participants.get(doc)
    }

    pub fn of_document(&self, doc: &str) -> Option<&BTreeSet<PersonId>> {
        let first = *self.participants.get(doc)?.iter().next()?;
        Some(&self.members[self.component[first]])
    }
}

/// Persons reachable from the document's participants over kinship links and
/// shared documents.
pub fn extended_members(c: &Corpus, r: &PersonRegistry, doc: &str) -> Result<BTreeSet<PersonId>, GenealogyError> {
    if !c.documents.contains(doc) {
        return Err(GenealogyError::UnknownDocument(doc.to_owned()));
    }
    Ok(ExtendedMembers::new(r).of_document(doc).cloned().unwrap_or_default())
}

/// The document attesting a member of `family` with the most extended
/// members. Documents of one component all reach the same closure, so ties
/// go to the document with more direct participants, then to the
/// lexicographically smallest id.
pub fn select_anchor_document(c: &Corpus, r: &PersonRegistry, family: &FamilyTree) -> Result<String, GenealogyError> {
    let ext = ExtendedMembers::new(r);
    let docs: BTreeSet<&str> = family
        .members
        .iter()
        .flat_map(|&m| r.persons[m].documents.iter().map(String::as_str))
        .filter(|d| c.documents.contains(*d))
        .collect();
    docs.into_iter()
        .map(|d| {
            let size = ext.of_document(d).map_or(0, BTreeSet::len);
            let direct = ext.participants(d).map_or(0, BTreeSet::len);
            (size, direct, std::cmp::Reverse(d))
        })
        .max()
        .map(|(_, _, std::cmp::Reverse(d))| d.to_owned())
        .ok_or(GenealogyError::FamilyUnattested(family.id))
}

/// The tree with the most generations, then the most individuals, then the
/// lowest id.
pub fn reference_tree(trees: &[FamilyTree]) -> Option<&FamilyTree> {
    trees
        .iter()
        .max_by_key(|t| (t.depth, t.node_count(), std::cmp::Reverse(t.id)))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationMap {
    pub reference: usize,
    /// Number of generations of the reference tree.
    pub depth: usize,
    /// 1-based generation per person, `None` when unassigned.
    pub generation: Vec<Option<usize>>,
}

impl GenerationMap {
    pub fn assigned(&self) -> usize {
        self.generation.iter().flatten().count()
    }
}

/// Places persons on the generations of the reference tree. Reference
/// members take their own level. Every other tree is shifted as a whole: each
/// co-attestation of a tree member at level ℓ with an assigned person of
/// generation g votes for offset g − ℓ, the most voted offset wins (ties go
/// to the earlier generation) and members get ℓ + offset clamped to 1..G.
/// Trees are placed in waves so that newly placed trees can place others;
/// trees with no path to the reference stay unassigned.
pub fn assign_generations(r: &PersonRegistry, trees: &[FamilyTree], reference: &FamilyTree) -> GenerationMap {
    let depth = reference.depth.max(1);
    let mut generation: Vec<Option<usize>> = vec![None; r.len()];
    for (m, l) in reference.levels() {
        generation[m] = Some(l);
    }
    let mut by_doc: BTreeMap<&str, Vec<PersonId>> = BTreeMap::new();
    for p in &r.persons {
        for d in &p.documents {
            by_doc.entry(d).or_default().push(p.id);
        }
    }
    let levels: Vec<BTreeMap<PersonId, usize>> = trees.iter().map(FamilyTree::levels).collect();
    let mut placed: Vec<bool> = trees.iter().map(|t| t.id == reference.id || t.members == reference.members).collect();

    loop {
        let snapshot = generation.clone();
        let mut wave = Vec::new();
        for (t, tree) in trees.iter().enumerate() {
            if placed[t] {
                continue;
            }
            let mut votes: BTreeMap<i64, usize> = BTreeMap::new();
            for &x in &tree.members {
                for d in &r.persons[x].documents {
                    for &y in &by_doc[d.as_str()] {
                        if let (Some(g), false) = (snapshot[y], tree.members.contains(&y)) {
                            *votes.entry(g as i64 - levels[t][&x] as i64).or_default() += 1;
                        }
                    }
                }
            }
            // Ascending offsets, so the first maximum is the earliest.
            let best = votes.iter().fold(None, |best: Option<(i64, usize)>, (&o, &n)| match best {
                Some((_, bn)) if bn >= n => best,
                _ => Some((o, n)),
            });
            if let Some((offset, _)) = best {
                wave.push((t, offset));
            }
        }
        if wave.is_empty() {
            break;
        }
        for (t, offset) in wave {
            placed[t] = true;
            for (&m, &l) in &levels[t] {
                generation[m] = Some((l as i64 + offset).clamp(1, depth as i64) as usize);
            }
        }
    }
    GenerationMap { reference: reference.id, depth, generation }
}
