//! The indexed triple store: interned strings, adjacency in both directions,
//! and label membership maps.
//!
//! All strings are interned to `u32` ids assigned in *lexicographic rank*
//! order, so comparing ids is the same as comparing names. That keeps every
//! "sorted by relation then entity" guarantee a plain integer sort and makes
//! the on-disk index canonical: the same triple set produces the same bytes
//! regardless of input line order.

use std::collections::{BTreeSet, HashMap};

use crate::error::KgError;
use crate::kg::{extract_labels, normalize_name, Direction, ParseWarning, Triple, TripleReader};

/// Interned string table: id → name plus name → id.
#[derive(Debug, Default, Clone)]
pub(crate) struct StringTable {
    names: Vec<String>,
    ids: HashMap<String, u32>,
}

impl StringTable {
    fn intern(&mut self, name: &str) -> u32 {
        if let Some(&id) = self.ids.get(name) {
            return id;
        }
        let id = u32::try_from(self.names.len()).expect("string table overflow");
        self.names.push(name.to_owned());
        self.ids.insert(name.to_owned(), id);
        id
    }

    /// Rebuild with ids in lexicographic name order; returns old id → new id.
    fn into_ranked(self) -> (StringTable, Vec<u32>) {
        let mut order: Vec<u32> = (0..self.names.len() as u32).collect();
        order.sort_unstable_by(|&a, &b| self.names[a as usize].cmp(&self.names[b as usize]));
        let mut remap = vec![0u32; self.names.len()];
        for (new_id, &old_id) in order.iter().enumerate() {
            remap[old_id as usize] = new_id as u32;
        }
        let mut ranked = StringTable::default();
        let mut slots: Vec<Option<String>> = self.names.into_iter().map(Some).collect();
        for &old_id in &order {
            let name = slots[old_id as usize].take().expect("each slot taken once");
            ranked.ids.insert(name.clone(), ranked.names.len() as u32);
            ranked.names.push(name);
        }
        (ranked, remap)
    }

    pub(crate) fn from_sorted_names(names: Vec<String>) -> Result<StringTable, KgError> {
        for pair in names.windows(2) {
            if pair[0] >= pair[1] {
                return Err(KgError::CorruptIndex(format!(
                    "string table not strictly sorted: {:?} precedes {:?}",
                    pair[0], pair[1]
                )));
            }
        }
        let ids = names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), i as u32))
            .collect();
        Ok(StringTable { names, ids })
    }

    fn get(&self, name: &str) -> Option<u32> {
        self.ids.get(name).copied()
    }

    pub(crate) fn name(&self, id: u32) -> &str {
        &self.names[id as usize]
    }

    pub(crate) fn len(&self) -> usize {
        self.names.len()
    }

    pub(crate) fn names(&self) -> &[String] {
        &self.names
    }
}

/// Counts reported after a build or load.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StoreStats {
    pub triples: usize,
    pub entities: usize,
    pub relations: usize,
    pub labels: usize,
}

/// One neighbor returned by [`KgStore::neighbors`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborHit<'a> {
    pub relation: &'a str,
    pub entity: &'a str,
    pub direction: Direction,
}

/// Streaming index builder. Feed triples (or whole readers) in, then call
/// [`KgBuilder::finish`]. Triples whose relation cannot produce labels are
/// skipped with a warning in lenient mode and fatal in strict mode, so every
/// stored triple is label-indexable.
pub struct KgBuilder {
    strict: bool,
    entities: StringTable,
    relations: StringTable,
    triples: Vec<(u32, u32, u32)>,
    warnings: Vec<ParseWarning>,
    lines_seen: u64,
}

impl KgBuilder {
    pub fn new(strict: bool) -> Self {
        KgBuilder {
            strict,
            entities: StringTable::default(),
            relations: StringTable::default(),
            triples: Vec::new(),
            warnings: Vec::new(),
            lines_seen: 0,
        }
    }

    /// Add one already-normalized triple.
    pub fn add_triple(&mut self, triple: &Triple) -> Result<(), KgError> {
        self.add_fields(&triple.subject, &triple.relation, &triple.object, 0)
    }

    fn add_fields(&mut self, s: &str, r: &str, o: &str, line: u64) -> Result<(), KgError> {
        if let Err(err) = extract_labels(r) {
            if self.strict {
                return Err(err);
            }
            log::warn!("skipping triple with unlabelable relation {r:?}");
            self.warnings.push(ParseWarning {
                line,
                reason: format!("relation {r:?} has fewer than two non-empty dotted segments"),
            });
            return Ok(());
        }
        let s = self.entities.intern(s);
        let r = self.relations.intern(r);
        let o = self.entities.intern(o);
        self.triples.push((s, r, o));
        Ok(())
    }

    /// Parse a tab-separated triple stream and add every well-formed line.
    pub fn read_from<R: std::io::BufRead>(&mut self, reader: R) -> Result<(), KgError> {
        let mut triples = TripleReader::new(reader).strict(self.strict);
        for item in triples.by_ref() {
            let t = item?;
            self.lines_seen += 1;
            self.add_fields(&t.subject, &t.relation, &t.object, self.lines_seen)?;
        }
        self.warnings.append(&mut triples.into_warnings());
        Ok(())
    }

    /// Warnings collected so far (malformed lines, unlabelable relations).
    pub fn warnings(&self) -> &[ParseWarning] {
        &self.warnings
    }

    /// Finalize: rank-order the string tables, dedup triples, build indexes.
    pub fn finish(self) -> KgStore {
        let (entities, entity_remap) = self.entities.into_ranked();
        let (relations, relation_remap) = self.relations.into_ranked();
        let mut triples: Vec<(u32, u32, u32)> = self
            .triples
            .into_iter()
            .map(|(s, r, o)| {
                (
                    entity_remap[s as usize],
                    relation_remap[r as usize],
                    entity_remap[o as usize],
                )
            })
            .collect();
        triples.sort_unstable();
        triples.dedup();
        KgStore::assemble(entities, relations, triples)
            .expect("builder-validated tables cannot fail assembly")
    }
}

/// Immutable indexed knowledge graph. Build once (via [`KgBuilder`] or
/// [`build_index`]), then query from any number of threads.
#[derive(Debug)]
pub struct KgStore {
    pub(crate) entities: StringTable,
    pub(crate) relations: StringTable,
    labels: StringTable,
    /// relation id → (subject label id, object label id)
    rel_labels: Vec<(u32, u32)>,
    /// Deduplicated (subject, relation, object) id triples, sorted.
    pub(crate) triples: Vec<(u32, u32, u32)>,
    /// entity id → sorted [(relation id, object id)]
    outgoing: Vec<Vec<(u32, u32)>>,
    /// entity id → sorted [(relation id, subject id)]
    incoming: Vec<Vec<(u32, u32)>>,
    /// entity id → sorted label ids
    entity_labels: Vec<Vec<u32>>,
    /// label id → sorted entity ids
    label_entities: Vec<Vec<u32>>,
}

impl KgStore {
    /// Build every derived index from ranked tables + sorted unique triples.
    pub(crate) fn assemble(
        entities: StringTable,
        relations: StringTable,
        triples: Vec<(u32, u32, u32)>,
    ) -> Result<KgStore, KgError> {
        let n_entities = entities.len();
        let n_relations = relations.len();
        for &(s, r, o) in &triples {
            if s as usize >= n_entities || o as usize >= n_entities || r as usize >= n_relations {
                return Err(KgError::CorruptIndex(format!(
                    "triple ({s}, {r}, {o}) references ids beyond table sizes \
                     ({n_entities} entities, {n_relations} relations)"
                )));
            }
        }

        let mut labels = BTreeSet::new();
        for name in relations.names() {
            let (ls, lo) = extract_labels(name)?;
            labels.insert(ls.to_owned());
            labels.insert(lo.to_owned());
        }
        let labels = StringTable::from_sorted_names(labels.into_iter().collect())?;
        let rel_labels: Vec<(u32, u32)> = relations
            .names()
            .iter()
            .map(|name| {
                let (ls, lo) = extract_labels(name).expect("validated above");
                (
                    labels.get(ls).expect("interned above"),
                    labels.get(lo).expect("interned above"),
                )
            })
            .collect();

        let mut outgoing: Vec<Vec<(u32, u32)>> = vec![Vec::new(); n_entities];
        let mut incoming: Vec<Vec<(u32, u32)>> = vec![Vec::new(); n_entities];
        let mut entity_labels: Vec<Vec<u32>> = vec![Vec::new(); n_entities];
        for &(s, r, o) in &triples {
            outgoing[s as usize].push((r, o));
            incoming[o as usize].push((r, s));
            let (ls, lo) = rel_labels[r as usize];
            entity_labels[s as usize].push(ls);
            entity_labels[o as usize].push(lo);
        }
        // Triples are sorted by (s, r, o), so each outgoing list is already
        // sorted; incoming lists need their own sort.
        for list in &mut incoming {
            list.sort_unstable();
        }
        for list in &mut entity_labels {
            list.sort_unstable();
            list.dedup();
        }
        let mut label_entities: Vec<Vec<u32>> = vec![Vec::new(); labels.len()];
        for (entity, labs) in entity_labels.iter().enumerate() {
            for &l in labs {
                label_entities[l as usize].push(entity as u32);
            }
        }

        Ok(KgStore {
            entities,
            relations,
            labels,
            rel_labels,
            triples,
            outgoing,
            incoming,
            entity_labels,
            label_entities,
        })
    }

    pub fn stats(&self) -> StoreStats {
        StoreStats {
            triples: self.triples.len(),
            entities: self.entities.len(),
            relations: self.relations.len(),
            labels: self.labels.len(),
        }
    }

    pub fn triple_count(&self) -> usize {
        self.triples.len()
    }

    /// Resolve an entity name (normalized first) to its id.
    pub fn entity_id(&self, name: &str) -> Option<u32> {
        self.entities.get(&normalize_name(name))
    }

    pub fn entity_name(&self, id: u32) -> &str {
        self.entities.name(id)
    }

    pub fn label_id(&self, name: &str) -> Option<u32> {
        self.labels.get(&normalize_name(name))
    }

    pub fn label_name(&self, id: u32) -> &str {
        self.labels.name(id)
    }

    pub fn relation_name(&self, id: u32) -> &str {
        self.relations.name(id)
    }

    pub fn relation_id(&self, name: &str) -> Option<u32> {
        self.relations.get(&normalize_name(name))
    }

    /// (subject label id, object label id) for a relation id.
    pub fn relation_labels(&self, id: u32) -> (u32, u32) {
        self.rel_labels[id as usize]
    }

    /// All relation names, sorted (their ids are lexicographic ranks).
    pub fn relation_names(&self) -> impl Iterator<Item = &str> {
        self.relations.names().iter().map(String::as_str)
    }

    /// All distinct labels, sorted.
    pub fn label_names(&self) -> impl Iterator<Item = &str> {
        self.labels.names().iter().map(String::as_str)
    }

    /// Iterate stored triples as name tuples, in canonical order.
    pub fn triples(&self) -> impl Iterator<Item = (&str, &str, &str)> {
        self.triples.iter().map(move |&(s, r, o)| {
            (
                self.entities.name(s),
                self.relations.name(r),
                self.entities.name(o),
            )
        })
    }

    pub fn has_label(&self, entity: u32, label: u32) -> bool {
        self.entity_labels[entity as usize].binary_search(&label).is_ok()
    }

    /// Labels carried by an entity (sorted ids).
    pub fn labels_of(&self, entity: u32) -> &[u32] {
        &self.entity_labels[entity as usize]
    }

    /// Entity ids carrying a label, sorted; empty for unknown labels.
    pub fn entities_with_label_ids(&self, label: u32) -> &[u32] {
        self.label_entities
            .get(label as usize)
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    /// Entity names carrying a label, sorted; empty for unknown labels.
    pub fn entities_with_label(&self, label: &str) -> Vec<&str> {
        match self.label_id(label) {
            Some(id) => self
                .entities_with_label_ids(id)
                .iter()
                .map(|&e| self.entities.name(e))
                .collect(),
            None => Vec::new(),
        }
    }

    /// Neighbors of `entity` in both edge directions whose label set contains
    /// `required_label`, sorted by (relation, entity, direction). Unknown
    /// entities and labels yield an empty list.
    pub fn neighbors(&self, entity: &str, required_label: &str) -> Vec<NeighborHit<'_>> {
        let (Some(e), Some(l)) = (self.entity_id(entity), self.label_id(required_label)) else {
            return Vec::new();
        };
        let mut hits: Vec<(u32, u32, Direction)> = Vec::new();
        for &(r, o) in &self.outgoing[e as usize] {
            if self.has_label(o, l) {
                hits.push((r, o, Direction::Outgoing));
            }
        }
        for &(r, s) in &self.incoming[e as usize] {
            if self.has_label(s, l) {
                hits.push((r, s, Direction::Incoming));
            }
        }
        hits.sort_unstable();
        hits.into_iter()
            .map(|(r, n, direction)| NeighborHit {
                relation: self.relations.name(r),
                entity: self.entities.name(n),
                direction,
            })
            .collect()
    }

    /// Neighbors of `entity` reachable over an edge whose relation's label
    /// pair is exactly (`from_label`, `to_label`) — in subject→object
    /// orientation for outgoing edges and object→subject for incoming ones.
    /// This is the mining step: the neighbor always carries `to_label` by
    /// construction. Sorted by (relation, entity, direction).
    pub fn pair_neighbors(
        &self,
        entity: u32,
        from_label: u32,
        to_label: u32,
    ) -> Vec<(u32, u32, Direction)> {
        let mut hits: Vec<(u32, u32, Direction)> = Vec::new();
        for &(r, o) in &self.outgoing[entity as usize] {
            if self.rel_labels[r as usize] == (from_label, to_label) {
                hits.push((r, o, Direction::Outgoing));
            }
        }
        for &(r, s) in &self.incoming[entity as usize] {
            if self.rel_labels[r as usize] == (to_label, from_label) {
                hits.push((r, s, Direction::Incoming));
            }
        }
        hits.sort_unstable();
        hits
    }

    /// Every edge incident to `entity`, both directions, sorted. Used by
    /// brute-force test oracles and the stats command.
    pub fn incident_edges(&self, entity: &str) -> Vec<NeighborHit<'_>> {
        let Some(e) = self.entity_id(entity) else {
            return Vec::new();
        };
        let mut hits: Vec<(u32, u32, Direction)> = Vec::new();
        for &(r, o) in &self.outgoing[e as usize] {
            hits.push((r, o, Direction::Outgoing));
        }
        for &(r, s) in &self.incoming[e as usize] {
            hits.push((r, s, Direction::Incoming));
        }
        hits.sort_unstable();
        hits.into_iter()
            .map(|(r, n, direction)| NeighborHit {
                relation: self.relations.name(r),
                entity: self.entities.name(n),
                direction,
            })
            .collect()
    }

    /// Degree (in + out) per entity id; used by the stats command.
    pub fn degree(&self, entity: u32) -> usize {
        self.outgoing[entity as usize].len() + self.incoming[entity as usize].len()
    }

    pub fn entity_count(&self) -> usize {
        self.entities.len()
    }
}

/// Index a collection of triples (lenient mode). Convenience wrapper around
/// [`KgBuilder`] for in-memory inputs.
pub fn build_index<I>(triples: I) -> KgStore
where
    I: IntoIterator<Item = Triple>,
{
    let mut builder = KgBuilder::new(false);
    for t in triples {
        builder
            .add_triple(&Triple {
                subject: normalize_name(&t.subject),
                relation: normalize_name(&t.relation),
                object: normalize_name(&t.object),
            })
            .expect("lenient builder never fails");
    }
    builder.finish()
}
