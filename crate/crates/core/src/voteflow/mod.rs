//! Questionnaire trees: pruning, path enumeration and splitting per-answer
//! vote counts into per-path counts.

mod decompose;
mod tree;

pub use decompose::{
    decompose_votes, identity_labelling, induce_votes, map_paths_to_classes, parse_labelling, project_votes,
    write_paths_csv, DecomposeMode, PathClass, PathCounts, VoteTable, CONSERVATION_TOL,
};
pub use tree::{apply_prune, apply_prunes, parse_prunes, Answer, DecisionTree, Next, Path, PathKey, PruneOp, Task};

use crate::error::Result;

const GZ2_TREE: &str = include_str!("../../data/gz2_tree.json");
const GZ2_PRUNES: &str = include_str!("../../data/gz2_prunes.json");
const GZ2_LABELS: &str = include_str!("../../data/gz2_labels.json");

/// The Galaxy Zoo 2 decision tree as published.
pub fn gz2_tree() -> DecisionTree {
    DecisionTree::from_json(GZ2_TREE).expect("shipped tree is valid")
}

/// Prune list reducing [`gz2_tree`] to nine paths.
pub fn gz2_prunes() -> Vec<PruneOp> {
    parse_prunes(GZ2_PRUNES).expect("shipped prune list parses")
}

/// Class names of the nine pruned paths.
pub fn gz2_labelling() -> Vec<PathClass> {
    parse_labelling(GZ2_LABELS).expect("shipped labelling parses")
}

pub fn gz2_pruned_tree() -> Result<DecisionTree> {
    apply_prunes(&gz2_tree(), &gz2_prunes())
}
