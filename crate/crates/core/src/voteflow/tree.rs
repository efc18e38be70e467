use std::collections::{BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Where an answer leads.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "String", into = "String")]
pub enum Next {
    Task(String),
    Exit,
}

impl From<String> for Next {
    fn from(s: String) -> Self {
        if s == "exit" {
            Self::Exit
        } else {
            Self::Task(s)
        }
    }
}

impl From<Next> for String {
    fn from(n: Next) -> Self {
        match n {
            Next::Task(id) => id,
            Next::Exit => "exit".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Answer {
    pub label: String,
    pub next: Next,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Task {
    pub id: String,
    pub answers: Vec<Answer>,
}

/// A questionnaire: tasks whose answers lead to another task or to the exit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub tasks: Vec<Task>,
    pub root: String,
}

/// One root-to-exit route as `(task index, answer index)` steps.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Path(pub Vec<(usize, usize)>);

/// `T01:smooth>T07:cigar`-style description of a path.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PathKey(pub String);

impl fmt::Display for PathKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl DecisionTree {
    pub fn from_json(text: &str) -> Result<Self> {
        let tree: Self = serde_json::from_str(text)?;
        tree.validate()?;
        Ok(tree)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn task_index(&self, id: &str) -> Option<usize> {
        self.tasks.iter().position(|t| t.id == id)
    }

    pub fn task(&self, id: &str) -> Option<&Task> {
        self.tasks.iter().find(|t| t.id == id)
    }

    pub fn root_index(&self) -> usize {
        self.task_index(&self.root).expect("validated tree has its root")
    }

    /// Index of the task an answer leads to, `None` for the exit.
    pub fn next_index(&self, task: usize, answer: usize) -> Option<usize> {
        match &self.tasks[task].answers[answer].next {
            Next::Task(id) => Some(self.task_index(id).expect("validated tree")),
            Next::Exit => None,
        }
    }

    /// Checks: unique ids and labels, known targets, acyclic, all tasks
    /// reachable from the root, and at least one exit.
    pub fn validate(&self) -> Result<()> {
        let mut index = HashMap::new();
        for (i, t) in self.tasks.iter().enumerate() {
            if t.id == "exit" {
                return Err(invalid("`exit` is reserved and cannot be a task id"));
            }
            if index.insert(t.id.as_str(), i).is_some() {
                return Err(invalid(format!("duplicate task id `{}`", t.id)));
            }
            if t.answers.is_empty() {
                return Err(invalid(format!("task `{}` has no answers", t.id)));
            }
            let mut labels = BTreeSet::new();
            for a in &t.answers {
                if !labels.insert(a.label.as_str()) {
                    return Err(invalid(format!("task `{}` repeats answer `{}`", t.id, a.label)));
                }
            }
        }
        let &root = index
            .get(self.root.as_str())
            .ok_or_else(|| invalid(format!("root `{}` is not a task", self.root)))?;
        let mut succ = vec![Vec::new(); self.tasks.len()];
        let mut has_exit = false;
        for (i, t) in self.tasks.iter().enumerate() {
            for a in &t.answers {
                match &a.next {
                    Next::Exit => has_exit = true,
                    Next::Task(id) => {
                        let &j = index.get(id.as_str()).ok_or_else(|| {
                            invalid(format!("answer `{}` of `{}` leads to unknown task `{id}`", a.label, t.id))
                        })?;
                        succ[i].push(j);
                    }
                }
            }
        }
        if !has_exit {
            return Err(invalid("tree has no exit"));
        }
        // iterative DFS with colours: 0 unseen, 1 on stack, 2 done
        let mut colour = vec![0u8; self.tasks.len()];
        let mut stack = vec![(root, 0usize)];
        colour[root] = 1;
        while let Some(top) = stack.last_mut() {
            let node = top.0;
            if let Some(&child) = succ[node].get(top.1) {
                top.1 += 1;
                match colour[child] {
                    0 => {
                        colour[child] = 1;
                        stack.push((child, 0));
                    }
                    1 => return Err(invalid(format!("cycle through task `{}`", self.tasks[child].id))),
                    _ => {}
                }
            } else {
                colour[node] = 2;
                stack.pop();
            }
        }
        if let Some(i) = colour.iter().position(|&c| c == 0) {
            return Err(invalid(format!("task `{}` is unreachable from the root", self.tasks[i].id)));
        }
        Ok(())
    }

    /// Root-to-exit paths, depth first in task/answer order.
    pub fn enumerate_paths(&self) -> Vec<Path> {
        let mut out = Vec::new();
        let mut prefix = Vec::new();
        self.walk(self.root_index(), &mut prefix, &mut out);
        out
    }

    fn walk(&self, task: usize, prefix: &mut Vec<(usize, usize)>, out: &mut Vec<Path>) {
        for a in 0..self.tasks[task].answers.len() {
            prefix.push((task, a));
            match self.next_index(task, a) {
                None => out.push(Path(prefix.clone())),
                Some(next) => self.walk(next, prefix, out),
            }
            prefix.pop();
        }
    }

    pub fn path_key(&self, path: &Path) -> PathKey {
        PathKey(
            path.0
                .iter()
                .map(|&(t, a)| format!("{}:{}", self.tasks[t].id, self.tasks[t].answers[a].label))
                .collect::<Vec<_>>()
                .join(">"),
        )
    }

    /// Drops tasks no longer reachable from the root.
    fn remove_unreachable(&mut self) {
        let mut seen = vec![false; self.tasks.len()];
        let mut stack = vec![self.root_index()];
        seen[stack[0]] = true;
        while let Some(t) = stack.pop() {
            for a in 0..self.tasks[t].answers.len() {
                if let Some(n) = self.next_index(t, a) {
                    if !seen[n] {
                        seen[n] = true;
                        stack.push(n);
                    }
                }
            }
        }
        let mut i = 0;
        self.tasks.retain(|_| {
            i += 1;
            seen[i - 1]
        });
    }
}

/// One pruning step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "kebab-case")]
pub enum PruneOp {
    /// Point `answer` of `task` at another task or the exit.
    RewireAnswer { task: String, answer: String, to: Next },
    /// Replace `answers` (which must share a target) by one answer `label`,
    /// placed where the first of them was.
    MergeAnswers {
        task: String,
        answers: Vec<String>,
        label: String,
    },
    /// Point `answer` of `task` at the exit.
    MakeExit { task: String, answer: String },
}

impl PruneOp {
    pub fn name(&self) -> String {
        match self {
            Self::RewireAnswer { task, answer, to } => {
                format!("rewire {task}/{answer} -> {}", String::from(to.clone()))
            }
            Self::MergeAnswers { task, answers, label } => format!("merge {task}/{{{}}} -> {label}", answers.join(",")),
            Self::MakeExit { task, answer } => format!("make-exit {task}/{answer}"),
        }
    }

    pub fn task(&self) -> &str {
        match self {
            Self::RewireAnswer { task, .. } | Self::MergeAnswers { task, .. } | Self::MakeExit { task, .. } => task,
        }
    }
}

pub fn parse_prunes(text: &str) -> Result<Vec<PruneOp>> {
    Ok(serde_json::from_str(text)?)
}

fn op_error(index: usize, op: &PruneOp, reason: impl Into<String>) -> Error {
    Error::InvalidOp {
        index,
        op: op.name(),
        reason: reason.into(),
    }
}

fn answer_index(task: &Task, label: &str) -> Option<usize> {
    task.answers.iter().position(|a| a.label == label)
}

/// Applies one op to `tree` in place, then drops unreachable tasks.
pub fn apply_prune(tree: &mut DecisionTree, index: usize, op: &PruneOp) -> Result<()> {
    let t = tree
        .task_index(op.task())
        .ok_or_else(|| op_error(index, op, format!("task `{}` is not in the tree", op.task())))?;
    match op {
        PruneOp::RewireAnswer { answer, to, .. } => {
            if let Next::Task(id) = to {
                if tree.task_index(id).is_none() {
                    return Err(op_error(index, op, format!("target task `{id}` is not in the tree")));
                }
            }
            let a = answer_index(&tree.tasks[t], answer)
                .ok_or_else(|| op_error(index, op, format!("no answer `{answer}`")))?;
            tree.tasks[t].answers[a].next = to.clone();
        }
        PruneOp::MakeExit { answer, .. } => {
            let a = answer_index(&tree.tasks[t], answer)
                .ok_or_else(|| op_error(index, op, format!("no answer `{answer}`")))?;
            tree.tasks[t].answers[a].next = Next::Exit;
        }
        PruneOp::MergeAnswers { answers, label, .. } => {
            if answers.len() < 2 {
                return Err(op_error(index, op, "need at least two answers to merge"));
            }
            let mut idx = Vec::with_capacity(answers.len());
            for name in answers {
                let a = answer_index(&tree.tasks[t], name)
                    .ok_or_else(|| op_error(index, op, format!("no answer `{name}`")))?;
                if idx.contains(&a) {
                    return Err(op_error(index, op, format!("answer `{name}` listed twice")));
                }
                idx.push(a);
            }
            let task = &mut tree.tasks[t];
            let next = task.answers[idx[0]].next.clone();
            if idx.iter().any(|&a| task.answers[a].next != next) {
                return Err(op_error(index, op, "merged answers lead to different places"));
            }
            let first = *idx.iter().min().expect("non-empty");
            if task
                .answers
                .iter()
                .enumerate()
                .any(|(i, a)| a.label == *label && !idx.contains(&i))
            {
                return Err(op_error(index, op, format!("label `{label}` already used by another answer")));
            }
            let mut kept = Vec::with_capacity(task.answers.len() + 1 - idx.len());
            for (i, a) in task.answers.drain(..).enumerate() {
                if i == first {
                    kept.push(Answer {
                        label: label.clone(),
                        next: next.clone(),
                    });
                } else if !idx.contains(&i) {
                    kept.push(a);
                }
            }
            task.answers = kept;
        }
    }
    tree.remove_unreachable();
    tree.validate().map_err(|e| op_error(index, op, e.to_string()))
}

/// Applies `ops` in order; an op naming a task removed by an earlier op fails.
pub fn apply_prunes(tree: &DecisionTree, ops: &[PruneOp]) -> Result<DecisionTree> {
    tree.validate()?;
    let mut out = tree.clone();
    for (i, op) in ops.iter().enumerate() {
        apply_prune(&mut out, i, op)?;
    }
    Ok(out)
}
