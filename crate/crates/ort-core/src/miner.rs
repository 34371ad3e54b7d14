//! Guided answer mining: walk a label path forward over the concrete graph,
//! build the entity tree with top-k sampling, then collect and format the
//! entity paths for the answer-generation prompt.
//!
//! A tree stores the results of each query step. Roots are the entities
//! carrying the path's first label — restricted to the recognized condition
//! entities when they resolve in the graph, since the first label of every
//! candidate path is a condition label. Each node is then expanded by
//! querying neighbors (both edge directions) whose label matches the next
//! label on the path; when more than `top_k` neighbors match, a uniform
//! sample of size `top_k` is drawn with a seeded generator so runs are
//! reproducible. Dead ends before the path completes still contribute their
//! partial path, marked incomplete.

use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::kg::{Direction, KgStore};
use crate::ontology::{NeighborLabelDictionary, Orientation};
use crate::reasoner::LabelPath;

/// One mined node: a concrete entity at a fixed depth of the label path,
/// with the relation that connected it to its parent (`None` for roots).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EntityNode {
    pub entity: u32,
    /// Index into the source label path (== depth).
    pub depth: usize,
    /// Relation id and edge direction from the parent, `None` for roots.
    pub relation_in: Option<(u32, Direction)>,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
}

/// The per-path query tree: one root subtree per seed entity.
#[derive(Debug, Clone, Default)]
pub struct EntityPathTree {
    pub path: LabelPath,
    nodes: Vec<EntityNode>,
    roots: Vec<usize>,
    /// Human-readable notes on dead ends (unresolvable labels, no seeds).
    pub diagnostics: Vec<String>,
}

impl EntityPathTree {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn roots(&self) -> &[usize] {
        &self.roots
    }

    pub fn node(&self, index: usize) -> &EntityNode {
        &self.nodes[index]
    }

    pub fn is_empty(&self) -> bool {
        self.roots.is_empty()
    }
}

/// One step of a concrete reasoning path: the entity, the label it satisfies,
/// and the relation leading to the next step (`None` on the final step).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EntityStep {
    pub label: String,
    pub entity: String,
    pub relation_to_next: Option<(String, Direction)>,
}

/// A root-to-leaf walk of an [`EntityPathTree`]. `complete` is false when
/// the walk dead-ended before exhausting the source label path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EntityPath {
    pub steps: Vec<EntityStep>,
    pub source: LabelPath,
    pub complete: bool,
}

/// Draw at most `cap` items from `items`, uniformly without replacement,
/// preserving the original relative order. The generator is only consulted
/// when sampling is actually needed.
fn sample_capped<T>(items: Vec<T>, cap: usize, rng: &mut ChaCha8Rng) -> Vec<T> {
    if items.len() <= cap {
        return items;
    }
    let mut keep = rand::seq::index::sample(rng, items.len(), cap).into_vec();
    keep.sort_unstable();
    let keep: BTreeSet<usize> = keep.into_iter().collect();
    items
        .into_iter()
        .enumerate()
        .filter(|(i, _)| keep.contains(i))
        .map(|(_, item)| item)
        .collect()
}

/// Build the entity tree for one label path.
///
/// Roots are the condition entities from recognition whose label equals the
/// path's first label and which resolve in the graph with that label; when
/// none resolves, every entity carrying the first label seeds a subtree.
/// Both seed sets are capped at `top_k` by the same sampling rule as
/// neighbor expansion. Every parent→child edge is a stored triple (in either
/// direction) whose relation the dictionary lists between the two labels.
pub fn mine_entity_tree(
    store: &KgStore,
    dictionary: &NeighborLabelDictionary,
    path: &LabelPath,
    conditions: &[(String, String)],
    top_k: usize,
    rng_seed: u64,
) -> EntityPathTree {
    let top_k = top_k.max(1);
    let mut tree = EntityPathTree {
        path: path.clone(),
        ..EntityPathTree::default()
    };
    let Some(first_label) = path.labels.first() else {
        tree.diagnostics.push("label path is empty".to_owned());
        return tree;
    };
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);

    // Resolve every label on the path up front; an unresolvable label stops
    // expansion at its depth (no neighbor can match it).
    let label_ids: Vec<Option<u32>> = path.labels.iter().map(|l| store.label_id(l)).collect();
    let Some(first_label_id) = label_ids[0] else {
        tree.diagnostics
            .push(format!("label {first_label:?} is not in the graph"));
        return tree;
    };

    let mut seed_entities: Vec<u32> = conditions
        .iter()
        .filter(|(_, label)| label == first_label)
        .filter_map(|(entity, _)| store.entity_id(entity))
        .filter(|&id| store.has_label(id, first_label_id))
        .collect();
    seed_entities.sort_unstable();
    seed_entities.dedup();
    if seed_entities.is_empty() {
        seed_entities = store.entities_with_label_ids(first_label_id).to_vec();
    }
    if seed_entities.is_empty() {
        tree.diagnostics
            .push(format!("no entity carries label {first_label:?}"));
        return tree;
    }
    let seed_entities = sample_capped(seed_entities, top_k, &mut rng);
    for entity in seed_entities {
        tree.roots.push(tree.nodes.len());
        tree.nodes.push(EntityNode {
            entity,
            depth: 0,
            relation_in: None,
            parent: None,
            children: Vec::new(),
        });
    }

    // Relations the dictionary admits between each consecutive label pair.
    // Outgoing edges play the first-as-subject role, incoming the second.
    let allowed: Vec<BTreeSet<(u32, Orientation)>> = path
        .labels
        .windows(2)
        .map(|pair| {
            dictionary
                .relations_between(&pair[0], &pair[1])
                .into_iter()
                .filter_map(|(rel, orient)| store.relation_id(rel).map(|id| (id, orient)))
                .collect()
        })
        .collect();

    // Expand in creation (level) order so generator use is deterministic.
    let mut i = 0;
    while i < tree.nodes.len() {
        let depth = tree.nodes[i].depth;
        if depth + 1 >= path.labels.len() {
            i += 1;
            continue;
        }
        let Some(next_label_id) = label_ids[depth + 1] else {
            i += 1;
            continue;
        };
        let from_label_id = label_ids[depth].expect("a node exists only for a resolved label");
        let self_pair = from_label_id == next_label_id;
        let mut hits = store.pair_neighbors(tree.nodes[i].entity, from_label_id, next_label_id);
        hits.retain(|(relation, _, direction)| {
            let role = if self_pair {
                Orientation::FirstAsSubject
            } else {
                match direction {
                    Direction::Outgoing => Orientation::FirstAsSubject,
                    Direction::Incoming => Orientation::SecondAsSubject,
                }
            };
            allowed[depth].contains(&(*relation, role))
        });
        let hits = sample_capped(hits, top_k, &mut rng);
        for (relation, entity, direction) in hits {
            let child = tree.nodes.len();
            tree.nodes.push(EntityNode {
                entity,
                depth: depth + 1,
                relation_in: Some((relation, direction)),
                parent: Some(i),
                children: Vec::new(),
            });
            tree.nodes[i].children.push(child);
        }
        i += 1;
    }
    tree
}

/// Collect every root-to-leaf path of the tree in depth-first order.
/// Partial paths (dead ends before the label path completes) are included
/// and marked incomplete.
pub fn collect_entity_paths(store: &KgStore, tree: &EntityPathTree) -> Vec<EntityPath> {
    let mut out = Vec::new();
    let mut stack: Vec<usize> = Vec::new();
    for &root in tree.roots() {
        descend(store, tree, root, &mut stack, &mut out);
    }
    out
}

fn descend(
    store: &KgStore,
    tree: &EntityPathTree,
    node: usize,
    stack: &mut Vec<usize>,
    out: &mut Vec<EntityPath>,
) {
    stack.push(node);
    if tree.node(node).children.is_empty() {
        let steps: Vec<EntityStep> = stack
            .iter()
            .enumerate()
            .map(|(pos, &idx)| {
                let n = tree.node(idx);
                let relation_to_next = stack.get(pos + 1).map(|&next| {
                    let (rel, dir) = tree
                        .node(next)
                        .relation_in
                        .expect("non-root nodes record their incoming relation");
                    (store.relation_name(rel).to_owned(), dir)
                });
                EntityStep {
                    label: tree.path.labels[n.depth].clone(),
                    entity: store.entity_name(n.entity).to_owned(),
                    relation_to_next,
                }
            })
            .collect();
        let complete = steps.len() == tree.path.labels.len();
        out.push(EntityPath {
            steps,
            source: tree.path.clone(),
            complete,
        });
    } else {
        for &child in &tree.node(node).children {
            descend(store, tree, child, stack, out);
        }
    }
    stack.pop();
}

/// The last dotted segment of a relation identifier.
fn relation_tail(relation: &str) -> &str {
    relation.rsplit('.').find(|seg| !seg.is_empty()).unwrap_or(relation)
}

/// Render one path in the audit/prompt notation:
/// `[label0] entity0 -> relation_tail [label1] entity1 -> …`.
pub fn render_entity_path(path: &EntityPath) -> String {
    let mut out = String::new();
    for (i, step) in path.steps.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        out.push_str(&format!("[{}] {}", step.label, step.entity));
        if let Some((relation, _)) = &step.relation_to_next {
            out.push_str(&format!(" -> {}", relation_tail(relation)));
        }
    }
    out
}

/// Format the whole path list, one numbered line per path (1-based).
pub fn format_paths(paths: &[EntityPath]) -> String {
    paths
        .iter()
        .enumerate()
        .map(|(i, p)| format!("reasoning path {}: {}", i + 1, render_entity_path(p)))
        .collect::<Vec<_>>()
        .join("\n")
}
