//! The graph's ontology (abstract label-level triples) and the neighbor
//! label dictionary driving reverse reasoning.
//!
//! An abstract triple is what a concrete triple looks like after both
//! entities are replaced by their derived labels: `(subject_label, relation,
//! object_label)`. The ontology is the distinct set of those. The neighbor
//! label dictionary maps each label to every label it shares an abstract
//! triple with, in either direction — the worked 3-label example is
//! `{l1→l2, l1→l3, l3→l1}` giving `{l1: [l2, l3], l2: [l1], l3: [l1]}`.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use crate::error::KgError;
use crate::kg::{extract_labels, KgStore, Triple};

/// A label-level triple: the shape of a relation, abstracted from entities.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AbstractTriple {
    pub subject_label: String,
    pub relation: String,
    pub object_label: String,
}

/// Which end of a relation the first label of a queried pair sits on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Orientation {
    /// The first label of the pair is the relation's subject label.
    FirstAsSubject,
    /// The first label of the pair is the relation's object label.
    SecondAsSubject,
}

/// Label → neighboring labels, plus the relations realizing each pair.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NeighborLabelDictionary {
    /// label → sorted set of neighbor labels (symmetric).
    entries: BTreeMap<String, BTreeSet<String>>,
    /// Unordered label pair (stored with the lexicographically smaller label
    /// first) → relations connecting the pair, tagged with the orientation
    /// of the *stored* pair order.
    relation_index: BTreeMap<(String, String), BTreeSet<(String, Orientation)>>,
}

impl NeighborLabelDictionary {
    fn pair_key(a: &str, b: &str) -> (String, String) {
        if a <= b {
            (a.to_owned(), b.to_owned())
        } else {
            (b.to_owned(), a.to_owned())
        }
    }

    fn insert(&mut self, t: &AbstractTriple) {
        let s = t.subject_label.as_str();
        let o = t.object_label.as_str();
        self.entries
            .entry(s.to_owned())
            .or_default()
            .insert(o.to_owned());
        self.entries
            .entry(o.to_owned())
            .or_default()
            .insert(s.to_owned());
        // Orientation is recorded relative to the stored (smaller, larger)
        // key order; self-loops collapse to FirstAsSubject.
        let key = Self::pair_key(s, o);
        let orientation = if key.0 == s {
            Orientation::FirstAsSubject
        } else {
            Orientation::SecondAsSubject
        };
        self.relation_index
            .entry(key)
            .or_default()
            .insert((t.relation.clone(), orientation));
    }

    /// Does the dictionary know this label?
    pub fn contains(&self, label: &str) -> bool {
        self.entries.contains_key(label)
    }

    /// Neighbor labels of `label`, sorted; empty for unknown labels.
    pub fn neighbors(&self, label: &str) -> impl Iterator<Item = &str> {
        self.entries
            .get(label)
            .into_iter()
            .flat_map(|set| set.iter().map(String::as_str))
    }

    /// Sorted, duplicate-free list of every label (the recognition prompt's
    /// label list).
    pub fn label_list(&self) -> Vec<&str> {
        self.entries.keys().map(String::as_str).collect()
    }

    pub fn label_count(&self) -> usize {
        self.entries.len()
    }

    /// All relations connecting labels `a` and `b`, tagged with orientation
    /// relative to the queried `(a, b)` order: `FirstAsSubject` means the
    /// relation's subject label is `a`. Empty when not neighbors.
    pub fn relations_between(&self, a: &str, b: &str) -> Vec<(&str, Orientation)> {
        let key = Self::pair_key(a, b);
        let flipped = key.0 != a;
        self.relation_index
            .get(&key)
            .into_iter()
            .flat_map(|set| set.iter())
            .map(|(rel, orient)| {
                let orient = if flipped && a != b {
                    match orient {
                        Orientation::FirstAsSubject => Orientation::SecondAsSubject,
                        Orientation::SecondAsSubject => Orientation::FirstAsSubject,
                    }
                } else {
                    *orient
                };
                (rel.as_str(), orient)
            })
            .collect()
    }

    /// Pairs of (label, neighbor) for symmetry checks and export.
    pub fn entries(&self) -> impl Iterator<Item = (&str, &BTreeSet<String>)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }
}

/// Distinct abstract triples induced by concrete triples.
pub fn build_ontology<I>(triples: I) -> Result<BTreeSet<AbstractTriple>, KgError>
where
    I: IntoIterator<Item = Triple>,
{
    let mut out = BTreeSet::new();
    for t in triples {
        let (s, o) = extract_labels(&t.relation)?;
        out.insert(AbstractTriple {
            subject_label: s.to_owned(),
            relation: t.relation.clone(),
            object_label: o.to_owned(),
        });
    }
    Ok(out)
}

/// Ontology straight from an indexed store. Every stored relation is realized
/// by at least one triple, so the distinct relations *are* the ontology.
pub fn build_ontology_from_store(store: &KgStore) -> BTreeSet<AbstractTriple> {
    store
        .relation_names()
        .map(|rel| {
            let (s, o) = extract_labels(rel).expect("store relations are label-validated");
            AbstractTriple {
                subject_label: s.to_owned(),
                relation: rel.to_owned(),
                object_label: o.to_owned(),
            }
        })
        .collect()
}

/// Build the neighbor label dictionary from an ontology.
pub fn build_neighbor_dictionary<'a, I>(ontology: I) -> NeighborLabelDictionary
where
    I: IntoIterator<Item = &'a AbstractTriple>,
{
    let mut dict = NeighborLabelDictionary::default();
    for t in ontology {
        dict.insert(t);
    }
    dict
}

/// Write the ontology as `subject_label<TAB>relation<TAB>object_label` lines
/// for inspection and diffing.
pub fn export_ontology<W: Write>(
    ontology: &BTreeSet<AbstractTriple>,
    mut w: W,
) -> std::io::Result<()> {
    for t in ontology {
        writeln!(w, "{}\t{}\t{}", t.subject_label, t.relation, t.object_label)?;
    }
    Ok(())
}
