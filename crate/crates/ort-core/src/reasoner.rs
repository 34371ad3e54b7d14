//! Reverse label reasoning: expand a tree from the aim labels over the
//! neighbor label dictionary, prune by condition labels and cycles, and emit
//! forward-ordered label reasoning paths. Also provides the forward-tracing
//! ablation that searches from the condition labels instead.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::ReasonError;
use crate::ontology::NeighborLabelDictionary;

/// The question's extracted intent: condition (entity, label) pairs and aim
/// (entity, label) pairs. Aim entities are carried for logging only; the
/// reasoning stages use the labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryIntent {
    pub conditions: Vec<(String, String)>,
    pub aims: Vec<(String, String)>,
}

impl QueryIntent {
    pub fn new(conditions: Vec<(String, String)>, aims: Vec<(String, String)>) -> Self {
        QueryIntent { conditions, aims }
    }

    /// Distinct condition labels, sorted.
    pub fn condition_labels(&self) -> BTreeSet<String> {
        self.conditions.iter().map(|(_, l)| l.clone()).collect()
    }

    /// Distinct aim labels, sorted.
    pub fn aim_labels(&self) -> Vec<String> {
        let set: BTreeSet<&str> = self.aims.iter().map(|(_, l)| l.as_str()).collect();
        set.into_iter().map(str::to_owned).collect()
    }

    /// Condition entities paired with their labels (entity, label), as given.
    pub fn condition_entities(&self) -> &[(String, String)] {
        &self.conditions
    }
}

/// How label revisits along a root-path are eliminated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CyclePolicy {
    /// Never expand a child whose label already occurs on the current
    /// root-path. Every surviving path is simple *and* condition-terminated.
    #[default]
    ConstructionTime,
    /// Expand freely, prune by conditions first, then truncate each path at
    /// the first repeated label and drop paths that no longer end at a
    /// condition label. Matches the prune-then-decycle ordering literally.
    ///
    /// The two policies agree when no revisit fits in the depth budget
    /// (`max_pop` = 1, or `max_pop` = 2 with no self-loop on an aim label)
    /// but are incomparable in general: post-hoc can emit extra short paths
    /// when condition labels chain (prefixes ending at an earlier
    /// condition), and it can *lose* paths when every expansion revisits the
    /// seed label, because the revisit pushes the last condition occurrence
    /// past the cycle cut.
    PostHoc,
}

/// A forward-ordered label reasoning path: condition label first, aim label
/// last (for the forward-tracing ablation the last label is unconstrained).
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LabelPath {
    pub labels: Vec<String>,
    /// The root label that seeded enumeration: an aim label for reverse
    /// reasoning, a condition label for forward tracing.
    pub seed_label: String,
}

impl LabelPath {
    /// Table-style rendering: labels joined by " -> ".
    pub fn render(&self) -> String {
        self.labels.join(" -> ")
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

impl std::fmt::Display for LabelPath {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.render())
    }
}

/// Render one path per line, " -> " separated (the debug-dump format).
pub fn render_path_list(paths: &[LabelPath]) -> String {
    let mut out = String::new();
    for p in paths {
        out.push_str(&p.render());
        out.push('\n');
    }
    out
}

#[derive(Debug)]
struct TreeNode {
    label: String,
    parent: Option<u32>,
    children: Vec<u32>,
}

/// Label tree expanded over the neighbor dictionary. For reverse reasoning
/// the (virtual) root's children are the aim labels; for forward tracing the
/// roots are condition labels. The virtual root itself is not materialized.
#[derive(Debug)]
pub struct ReverseTree {
    nodes: Vec<TreeNode>,
    roots: Vec<u32>,
}

impl ReverseTree {
    /// Expand from `seed_labels` (which become the root's children), adding
    /// every dictionary neighbor as a child until a root-path holds
    /// `max_labels` labels. With `simple_only`, a child whose label already
    /// occurs on the root-path is never added.
    fn expand(
        seed_labels: &[String],
        dictionary: &NeighborLabelDictionary,
        max_labels: usize,
        simple_only: bool,
    ) -> ReverseTree {
        let mut tree = ReverseTree {
            nodes: Vec::new(),
            roots: Vec::new(),
        };
        let mut stack: Vec<(u32, usize)> = Vec::new();
        for label in seed_labels {
            let id = tree.push_node(label.clone(), None);
            tree.roots.push(id);
            stack.push((id, 1));
        }
        while let Some((id, depth)) = stack.pop() {
            if depth >= max_labels {
                continue;
            }
            let label = tree.nodes[id as usize].label.clone();
            for neighbor in dictionary.neighbors(&label) {
                if simple_only && tree.on_root_path(id, neighbor) {
                    continue;
                }
                let child = tree.push_node(neighbor.to_owned(), Some(id));
                tree.nodes[id as usize].children.push(child);
                stack.push((child, depth + 1));
            }
        }
        tree
    }

    fn push_node(&mut self, label: String, parent: Option<u32>) -> u32 {
        let id = u32::try_from(self.nodes.len()).expect("tree node overflow");
        self.nodes.push(TreeNode {
            label,
            parent,
            children: Vec::new(),
        });
        id
    }

    fn on_root_path(&self, mut node: u32, label: &str) -> bool {
        loop {
            let n = &self.nodes[node as usize];
            if n.label == label {
                return true;
            }
            match n.parent {
                Some(p) => node = p,
                None => return false,
            }
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Root node ids (one per seed label, in seed order).
    pub fn roots(&self) -> &[u32] {
        &self.roots
    }

    pub fn label_of(&self, node: u32) -> &str {
        &self.nodes[node as usize].label
    }

    pub fn children_of(&self, node: u32) -> &[u32] {
        &self.nodes[node as usize].children
    }

    /// All root-to-leaf label paths in DFS order (children were inserted in
    /// sorted order, so this is deterministic).
    pub fn leaf_paths(&self) -> Vec<Vec<String>> {
        let mut out = Vec::new();
        let mut path = Vec::new();
        for &root in &self.roots {
            self.collect_paths(root, &mut path, false, &mut out);
        }
        out
    }

    /// All root-to-node label paths (every prefix, roots included), DFS order.
    pub fn all_node_paths(&self) -> Vec<Vec<String>> {
        let mut out = Vec::new();
        let mut path = Vec::new();
        for &root in &self.roots {
            self.collect_paths(root, &mut path, true, &mut out);
        }
        out
    }

    fn collect_paths(
        &self,
        node: u32,
        path: &mut Vec<String>,
        every_prefix: bool,
        out: &mut Vec<Vec<String>>,
    ) {
        let n = &self.nodes[node as usize];
        path.push(n.label.clone());
        if every_prefix || n.children.is_empty() {
            out.push(path.clone());
        }
        for &child in &n.children {
            self.collect_paths(child, path, every_prefix, out);
        }
        path.pop();
    }
}

fn missing_labels(labels: &[String], dictionary: &NeighborLabelDictionary) -> Vec<String> {
    let missing: BTreeSet<String> = labels
        .iter()
        .filter(|l| !dictionary.contains(l))
        .cloned()
        .collect();
    missing.into_iter().collect()
}

/// Expand the reverse reasoning tree from the aim labels. Root-paths carry at
/// most `max_pop` labels. With [`CyclePolicy::ConstructionTime`] the tree
/// only contains simple root-paths; with [`CyclePolicy::PostHoc`] revisits
/// are kept for the later cycle-pruning pass (the tree is exponentially
/// larger on dense dictionaries — intended for small graphs and comparisons).
pub fn build_reverse_tree(
    aim_labels: &[String],
    dictionary: &NeighborLabelDictionary,
    max_pop: usize,
    policy: CyclePolicy,
) -> Result<ReverseTree, ReasonError> {
    let missing = missing_labels(aim_labels, dictionary);
    if !missing.is_empty() {
        return Err(ReasonError::UnknownLabel { labels: missing });
    }
    let seeds: Vec<String> = aim_labels
        .iter()
        .cloned()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    Ok(ReverseTree::expand(
        &seeds,
        dictionary,
        max_pop,
        policy == CyclePolicy::ConstructionTime,
    ))
}

/// Keep, for each reverse-ordered DFS path that contains a condition label,
/// the prefix up to its *last* condition occurrence; drop condition-free
/// paths. Output is deduplicated, first occurrence kept, order stable.
pub fn prune_by_conditions(
    paths: &[Vec<String>],
    condition_labels: &BTreeSet<String>,
) -> Vec<Vec<String>> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for path in paths {
        let last_condition_index = path
            .iter()
            .enumerate()
            .rev()
            .find(|(_, label)| condition_labels.contains(*label))
            .map(|(i, _)| i);
        if let Some(i) = last_condition_index {
            let pruned = path[..=i].to_vec();
            if seen.insert(pruned.clone()) {
                out.push(pruned);
            }
        }
    }
    out
}

/// The post-hoc cycle pass: truncate each path at the first repeated label,
/// then drop paths that no longer end at a condition label. Deduplicated,
/// order stable.
fn prune_cycles_posthoc(
    paths: Vec<Vec<String>>,
    condition_labels: &BTreeSet<String>,
) -> Vec<Vec<String>> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for path in paths {
        let mut visited = BTreeSet::new();
        let mut cut = path.len();
        for (i, label) in path.iter().enumerate() {
            if !visited.insert(label.clone()) {
                cut = i;
                break;
            }
        }
        let truncated = &path[..cut];
        let ends_at_condition = truncated
            .last()
            .is_some_and(|l| condition_labels.contains(l));
        if ends_at_condition && seen.insert(truncated.to_vec()) {
            out.push(truncated.to_vec());
        }
    }
    out
}

/// Reverse each reverse-ordered path into a forward [`LabelPath`]
/// (condition first, aim last), deduplicate, and sort lexicographically.
pub fn enumerate_forward_paths(reverse_paths: &[Vec<String>]) -> Vec<LabelPath> {
    let mut set: BTreeSet<LabelPath> = BTreeSet::new();
    for rp in reverse_paths {
        if rp.is_empty() {
            continue;
        }
        let mut labels = rp.clone();
        labels.reverse();
        set.insert(LabelPath {
            labels,
            seed_label: rp[0].clone(),
        });
    }
    set.into_iter().collect()
}

/// Full reverse reasoning: expand from the aim labels, prune by conditions
/// (and cycles, per policy), and return forward-ordered candidate paths.
pub fn reverse_reason(
    intent: &QueryIntent,
    dictionary: &NeighborLabelDictionary,
    max_pop: usize,
    policy: CyclePolicy,
) -> Result<Vec<LabelPath>, ReasonError> {
    let aim_labels = intent.aim_labels();
    let condition_labels = intent.condition_labels();
    if aim_labels.is_empty() || condition_labels.is_empty() {
        return Err(ReasonError::EmptyPathSet { max_pop });
    }
    let missing = missing_labels(
        &condition_labels.iter().cloned().collect::<Vec<_>>(),
        dictionary,
    );
    if !missing.is_empty() {
        return Err(ReasonError::UnknownLabel { labels: missing });
    }
    let tree = build_reverse_tree(&aim_labels, dictionary, max_pop, policy)?;
    let mut pruned = prune_by_conditions(&tree.leaf_paths(), &condition_labels);
    if policy == CyclePolicy::PostHoc {
        pruned = prune_cycles_posthoc(pruned, &condition_labels);
    }
    let forward = enumerate_forward_paths(&pruned);
    if forward.is_empty() {
        return Err(ReasonError::EmptyPathSet { max_pop });
    }
    Ok(forward)
}

/// The forward-tracing ablation: breadth-first expansion from each condition
/// label over the dictionary, emitting *every* root-to-node path (no aim
/// requirement — semantic filtering is left to the LLM stage). Paths carry at
/// most `max_pop + 1` labels so an n-hop trace visits the same number of
/// labels as an n-hop reverse path plus its condition anchor.
pub fn trace_forward(
    intent: &QueryIntent,
    dictionary: &NeighborLabelDictionary,
    max_pop: usize,
) -> Result<Vec<LabelPath>, ReasonError> {
    let condition_labels: Vec<String> = intent.condition_labels().into_iter().collect();
    if condition_labels.is_empty() {
        return Err(ReasonError::EmptyPathSet { max_pop });
    }
    let missing = missing_labels(&condition_labels, dictionary);
    if !missing.is_empty() {
        return Err(ReasonError::UnknownLabel { labels: missing });
    }
    let tree = ReverseTree::expand(&condition_labels, dictionary, max_pop + 1, true);
    let mut set: BTreeSet<LabelPath> = BTreeSet::new();
    for path in tree.all_node_paths() {
        set.insert(LabelPath {
            seed_label: path[0].clone(),
            labels: path,
        });
    }
    Ok(set.into_iter().collect())
}
