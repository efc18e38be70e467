use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::tree::{DecisionTree, PathKey, PruneOp};
use crate::error::{invalid, Error, Result};

/// Relative slack allowed on flow conservation in proportional mode.
pub const CONSERVATION_TOL: f64 = 1e-9;

/// How many volunteers picked each `(task, answer)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct VoteTable {
    counts: BTreeMap<(String, String), f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct VoteRow {
    task_id: String,
    answer_label: String,
    count: f64,
}

impl VoteTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds `count` to a cell; the count must be finite and non-negative.
    pub fn add(&mut self, task: &str, answer: &str, count: f64) -> Result<()> {
        if !(count.is_finite() && count >= 0.0) {
            return Err(invalid(format!("count for {task}/{answer} must be non-negative, got {count}")));
        }
        *self.counts.entry((task.to_owned(), answer.to_owned())).or_insert(0.0) += count;
        Ok(())
    }

    pub fn get(&self, task: &str, answer: &str) -> f64 {
        self.counts.get(&(task.to_owned(), answer.to_owned())).copied().unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str, f64)> {
        self.counts.iter().map(|((t, a), &c)| (t.as_str(), a.as_str(), c))
    }

    /// Votes on the root task: the number of volunteers.
    pub fn total(&self, tree: &DecisionTree) -> f64 {
        tree.tasks[tree.root_index()]
            .answers
            .iter()
            .map(|a| self.get(&tree.root, &a.label))
            .sum()
    }

    /// Reads `task_id,answer_label,count`. Repeated cells are an error.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut table = Self::new();
        for row in csv::Reader::from_reader(reader).deserialize() {
            let row: VoteRow = row?;
            if table.counts.contains_key(&(row.task_id.clone(), row.answer_label.clone())) {
                return Err(invalid(format!("votes repeat {}/{}", row.task_id, row.answer_label)));
            }
            table.add(&row.task_id, &row.answer_label, row.count)?;
        }
        Ok(table)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for (t, a, c) in self.iter() {
            w.serialize(VoteRow {
                task_id: t.to_owned(),
                answer_label: a.to_owned(),
                count: c,
            })?;
        }
        w.flush()?;
        Ok(())
    }

    /// Errors on any cell naming a task or answer that `tree` lacks.
    pub fn check_cells(&self, tree: &DecisionTree) -> Result<()> {
        for (t, a, _) in self.iter() {
            let task = tree
                .task(t)
                .ok_or_else(|| invalid(format!("votes name unknown task `{t}`")))?;
            if !task.answers.iter().any(|x| x.label == a) {
                return Err(invalid(format!("votes name unknown answer `{a}` of `{t}`")));
            }
        }
        Ok(())
    }

    /// Inflow of every task: `V` at the root, otherwise the votes on answers
    /// leading into it.
    pub fn inflows(&self, tree: &DecisionTree) -> Vec<f64> {
        let mut inflow = vec![0.0; tree.tasks.len()];
        inflow[tree.root_index()] = self.total(tree);
        for (t, task) in tree.tasks.iter().enumerate() {
            for (a, ans) in task.answers.iter().enumerate() {
                if let Some(n) = tree.next_index(t, a) {
                    inflow[n] += self.get(&task.id, &ans.label);
                }
            }
        }
        inflow
    }

    /// Checks that each task's answers account for exactly its inflow, up to
    /// `tol · max(1, V)`.
    pub fn check_conservation(&self, tree: &DecisionTree, tol: f64) -> Result<()> {
        self.check_cells(tree)?;
        let inflow = self.inflows(tree);
        let slack = tol * self.total(tree).max(1.0);
        for (t, task) in tree.tasks.iter().enumerate() {
            let outflow: f64 = task.answers.iter().map(|a| self.get(&task.id, &a.label)).sum();
            if (outflow - inflow[t]).abs() > slack {
                return Err(Error::Infeasible {
                    task: task.id.clone(),
                    inflow: inflow[t],
                    outflow,
                });
            }
        }
        Ok(())
    }
}

/// Carries votes recorded on the original tree through the prune list: merged
/// answers add up and cells of removed tasks are dropped.
pub fn project_votes(tree: &DecisionTree, ops: &[PruneOp], table: &VoteTable) -> Result<VoteTable> {
    table.check_cells(tree)?;
    let pruned = super::tree::apply_prunes(tree, ops)?;
    let mut rename: HashMap<(String, String), String> = HashMap::new();
    for op in ops {
        if let PruneOp::MergeAnswers { task, answers, label } = op {
            for a in answers {
                rename.insert((task.clone(), a.clone()), label.clone());
            }
            // chains of merges resolve to the latest label
            for v in rename.values_mut() {
                if answers.contains(v) {
                    *v = label.clone();
                }
            }
        }
    }
    let mut out = VoteTable::new();
    for (t, a, c) in table.iter() {
        let label = rename.get(&(t.to_owned(), a.to_owned())).map_or(a, String::as_str);
        if pruned.task(t).is_some_and(|task| task.answers.iter().any(|x| x.label == label)) {
            out.add(t, label, c)?;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecomposeMode {
    /// `V · Π count/inflow` along each path.
    #[default]
    Proportional,
    /// Integer paths peeled off greedily until no flow is left.
    Integer,
}

impl std::str::FromStr for DecomposeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "proportional" => Ok(Self::Proportional),
            "integer" => Ok(Self::Integer),
            _ => Err(invalid(format!("unknown mode `{s}`, expected proportional or integer"))),
        }
    }
}

/// Volunteers per root-to-exit path, in [`DecisionTree::enumerate_paths`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct PathCounts {
    pub paths: Vec<PathKey>,
    pub counts: Vec<f64>,
}

impl PathCounts {
    pub fn total(&self) -> f64 {
        self.counts.iter().sum()
    }

    pub fn get(&self, key: &PathKey) -> Option<f64> {
        self.paths.iter().position(|p| p == key).map(|i| self.counts[i])
    }
}

pub fn decompose_votes(tree: &DecisionTree, table: &VoteTable, mode: DecomposeMode) -> Result<PathCounts> {
    let paths = tree.enumerate_paths();
    let keys = paths.iter().map(|p| tree.path_key(p)).collect();
    let counts = match mode {
        DecomposeMode::Proportional => {
            table.check_conservation(tree, CONSERVATION_TOL)?;
            let inflow = table.inflows(tree);
            let v = table.total(tree);
            paths
                .iter()
                .map(|path| {
                    path.0.iter().fold(v, |acc, &(t, a)| {
                        let task = &tree.tasks[t];
                        if inflow[t] == 0.0 {
                            0.0
                        } else {
                            acc * table.get(&task.id, &task.answers[a].label) / inflow[t]
                        }
                    })
                })
                .collect()
        }
        DecomposeMode::Integer => {
            for (t, a, c) in table.iter() {
                if c.fract() != 0.0 {
                    return Err(invalid(format!("integer mode needs whole counts, {t}/{a} is {c}")));
                }
            }
            table.check_conservation(tree, 0.0)?;
            strip_paths(tree, table, &paths)
        }
    };
    Ok(PathCounts { paths: keys, counts })
}

fn strip_paths(tree: &DecisionTree, table: &VoteTable, paths: &[super::tree::Path]) -> Vec<f64> {
    let mut residual: Vec<Vec<f64>> = tree
        .tasks
        .iter()
        .map(|t| t.answers.iter().map(|a| table.get(&t.id, &a.label)).collect())
        .collect();
    let index: HashMap<&[(usize, usize)], usize> = paths.iter().enumerate().map(|(i, p)| (p.0.as_slice(), i)).collect();
    let mut counts = vec![0.0; paths.len()];
    let root = tree.root_index();
    let mut route = Vec::new();
    while residual[root].iter().any(|&c| c > 0.0) {
        route.clear();
        let mut t = root;
        loop {
            // conservation guarantees a positive answer wherever flow arrives
            let a = residual[t].iter().position(|&c| c > 0.0).expect("conserved flow");
            route.push((t, a));
            match tree.next_index(t, a) {
                Some(n) => t = n,
                None => break,
            }
        }
        let flow = route.iter().map(|&(t, a)| residual[t][a]).fold(f64::INFINITY, f64::min);
        for &(t, a) in &route {
            residual[t][a] -= flow;
        }
        counts[index[route.as_slice()]] += flow;
    }
    counts
}

/// Per-answer counts implied by path counts.
pub fn induce_votes(tree: &DecisionTree, counts: &PathCounts) -> Result<VoteTable> {
    let paths = tree.enumerate_paths();
    if paths.len() != counts.counts.len() {
        return Err(invalid(format!("tree has {} paths, counts {}", paths.len(), counts.counts.len())));
    }
    let mut table = VoteTable::new();
    for t in &tree.tasks {
        for a in &t.answers {
            table.add(&t.id, &a.label, 0.0)?;
        }
    }
    for (path, &c) in paths.iter().zip(&counts.counts) {
        for &(t, a) in &path.0 {
            let task = &tree.tasks[t];
            table.add(&task.id, &task.answers[a].label, c)?;
        }
    }
    Ok(table)
}

/// One entry of a labelling: which path is which class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathClass {
    pub path: PathKey,
    pub class: String,
}

pub fn parse_labelling(text: &str) -> Result<Vec<PathClass>> {
    Ok(serde_json::from_str(text)?)
}

/// Each path labelled by its enumeration index.
pub fn identity_labelling(tree: &DecisionTree) -> Vec<PathClass> {
    tree.enumerate_paths()
        .iter()
        .enumerate()
        .map(|(i, p)| PathClass {
            path: tree.path_key(p),
            class: i.to_string(),
        })
        .collect()
}

/// Validates that `labelling` is a bijection between the paths of `tree` and
/// its classes. Returns it in class order with each entry's path index.
pub fn map_paths_to_classes(tree: &DecisionTree, labelling: &[PathClass]) -> Result<Vec<(usize, PathClass)>> {
    let keys: Vec<PathKey> = tree.enumerate_paths().iter().map(|p| tree.path_key(p)).collect();
    let mut seen_path = vec![false; keys.len()];
    let mut seen_class = std::collections::HashSet::new();
    let mut out = Vec::with_capacity(labelling.len());
    for entry in labelling {
        let i = keys
            .iter()
            .position(|k| *k == entry.path)
            .ok_or_else(|| Error::InvalidLabelling(format!("`{}` is not a path of the tree", entry.path)))?;
        if std::mem::replace(&mut seen_path[i], true) {
            return Err(Error::InvalidLabelling(format!("path `{}` labelled twice", entry.path)));
        }
        if !seen_class.insert(entry.class.as_str()) {
            return Err(Error::InvalidLabelling(format!("class `{}` used twice", entry.class)));
        }
        out.push((i, entry.clone()));
    }
    if let Some(i) = seen_path.iter().position(|s| !s) {
        return Err(Error::InvalidLabelling(format!("path `{}` has no class", keys[i])));
    }
    Ok(out)
}

#[derive(Debug, Serialize)]
struct PathRow<'a> {
    path_id: &'a str,
    class_label: &'a str,
    count: f64,
}

/// Writes `path_id,class_label,count` rows in class order.
pub fn write_paths_csv<W: Write>(writer: W, counts: &PathCounts, classes: &[(usize, PathClass)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for (i, pc) in classes {
        let count = *counts
            .counts
            .get(*i)
            .ok_or_else(|| Error::InvalidLabelling(format!("path index {i} out of range")))?;
        w.serialize(PathRow {
            path_id: &pc.path.0,
            class_label: &pc.class,
            count,
        })?;
    }
    w.flush()?;
    Ok(())
}
