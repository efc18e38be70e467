use std::collections::HashMap;

use coldcure::voteflow::*;
use coldcure::Error;
use proptest::prelude::*;

/// Random rooted DAG: every task after the first hangs off a free answer of an
/// earlier task, remaining answers exit or point forward.
fn random_tree(sizes: &[usize], picks: &[u32]) -> DecisionTree {
    let mut pick = picks.iter().cycle();
    let mut next = |m: usize| *pick.next().unwrap() as usize % m;
    let mut slots: Vec<Vec<Option<String>>> = vec![vec![None; sizes[0]]];
    for (i, &k) in sizes.iter().enumerate().skip(1) {
        let free: Vec<(usize, usize)> = slots
            .iter()
            .enumerate()
            .flat_map(|(t, s)| s.iter().enumerate().filter(|(_, x)| x.is_none()).map(move |(a, _)| (t, a)))
            .collect();
        if free.is_empty() {
            break;
        }
        let (t, a) = free[next(free.len())];
        slots[t][a] = Some(format!("t{i}"));
        slots.push(vec![None; k]);
    }
    let n = slots.len();
    let tasks = slots
        .into_iter()
        .enumerate()
        .map(|(t, s)| Task {
            id: format!("t{t}"),
            answers: s
                .into_iter()
                .enumerate()
                .map(|(a, x)| {
                    let target = x.unwrap_or_else(|| {
                        let r = next(n - t);
                        if r == 0 {
                            "exit".into()
                        } else {
                            format!("t{}", t + r)
                        }
                    });
                    Answer {
                        label: format!("a{a}"),
                        next: Next::from(target),
                    }
                })
                .collect(),
        })
        .collect();
    let tree = DecisionTree { tasks, root: "t0".into() };
    tree.validate().unwrap();
    tree
}

/// Paths counted by recursion over the task graph, independent of enumeration.
fn dfs_path_count(tree: &DecisionTree) -> u64 {
    fn count(tree: &DecisionTree, id: &str, memo: &mut HashMap<String, u64>) -> u64 {
        if let Some(&c) = memo.get(id) {
            return c;
        }
        let task = tree.tasks.iter().find(|t| t.id == id).unwrap();
        let c = task
            .answers
            .iter()
            .map(|a| match &a.next {
                Next::Exit => 1,
                Next::Task(n) => count(tree, n, memo),
            })
            .sum();
        memo.insert(id.to_owned(), c);
        c
    }
    count(tree, &tree.root, &mut HashMap::new())
}

/// Per-answer counts by walking each path's key string.
fn marginals_from_keys(counts: &PathCounts) -> HashMap<(String, String), f64> {
    let mut m = HashMap::new();
    for (key, &c) in counts.paths.iter().zip(&counts.counts) {
        for step in key.0.split('>') {
            let (t, a) = step.split_once(':').unwrap();
            *m.entry((t.to_owned(), a.to_owned())).or_insert(0.0) += c;
        }
    }
    m
}

fn tree_strategy() -> impl Strategy<Value = DecisionTree> {
    (prop::collection::vec(1usize..=4, 1..=6), prop::collection::vec(any::<u32>(), 1..40))
        .prop_map(|(sizes, picks)| random_tree(&sizes, &picks))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn round_trip_reproduces_marginals(tree in tree_strategy(), raw in prop::collection::vec(0u32..25, 200)) {
        let n = tree.enumerate_paths().len();
        prop_assert_eq!(n as u64, dfs_path_count(&tree));
        let truth = PathCounts {
            paths: tree.enumerate_paths().iter().map(|p| tree.path_key(p)).collect(),
            counts: raw.iter().cycle().take(n).map(|&c| c as f64).collect(),
        };
        let votes = induce_votes(&tree, &truth).unwrap();
        let expected = marginals_from_keys(&truth);
        for (t, a, c) in votes.iter() {
            prop_assert_eq!(c, expected.get(&(t.to_owned(), a.to_owned())).copied().unwrap_or(0.0));
        }
        let v = votes.total(&tree);

        let int = decompose_votes(&tree, &votes, DecomposeMode::Integer).unwrap();
        prop_assert!(int.counts.iter().all(|c| c.fract() == 0.0 && *c >= 0.0));
        prop_assert_eq!(int.total(), v);
        prop_assert_eq!(&induce_votes(&tree, &int).unwrap(), &votes);

        let prop = decompose_votes(&tree, &votes, DecomposeMode::Proportional).unwrap();
        prop_assert!((prop.total() - v).abs() <= 1e-9 * v.max(1.0));
        let back = induce_votes(&tree, &prop).unwrap();
        for (t, a, c) in votes.iter() {
            prop_assert!((back.get(t, a) - c).abs() <= 1e-9 * v.max(1.0), "{}/{}: {} vs {}", t, a, back.get(t, a), c);
        }

        prop_assert_eq!(&decompose_votes(&tree, &votes, DecomposeMode::Integer).unwrap(), &int);
        prop_assert_eq!(&decompose_votes(&tree, &votes, DecomposeMode::Proportional).unwrap(), &prop);
    }

    #[test]
    fn exiting_every_root_answer_leaves_length_one_paths(tree in tree_strategy()) {
        let ops: Vec<_> = tree.tasks[0]
            .answers
            .iter()
            .map(|a| PruneOp::MakeExit { task: "t0".into(), answer: a.label.clone() })
            .collect();
        let pruned = apply_prunes(&tree, &ops).unwrap();
        prop_assert_eq!(pruned.tasks.len(), 1);
        let paths = pruned.enumerate_paths();
        prop_assert_eq!(paths.len(), tree.tasks[0].answers.len());
        prop_assert!(paths.iter().all(|p| p.0.len() == 1));
    }
}

#[test]
fn gz2_path_counts_and_monotone_pruning() {
    let tree = gz2_tree();
    assert_eq!(tree.enumerate_paths().len(), 1265);
    assert_eq!(dfs_path_count(&tree), 1265);
    let ops = gz2_prunes();
    let mut running = tree.clone();
    let mut count = 1265;
    for (i, op) in ops.iter().enumerate() {
        apply_prune(&mut running, i, op).unwrap();
        let now = running.enumerate_paths().len();
        assert!(now <= count, "op {i} ({}) raised paths {count} -> {now}", op.name());
        assert_eq!(now as u64, dfs_path_count(&running));
        count = now;
    }
    assert_eq!(count, 9);
    assert_eq!(running, apply_prunes(&tree, &ops).unwrap());
    for gone in ["T03", "T04", "T06", "T08", "T10", "T11"] {
        assert!(running.task(gone).is_none(), "{gone} survived");
    }
}

#[test]
fn gz2_labelling_is_in_class_list_order() {
    let pruned = gz2_pruned_tree().unwrap();
    let classes: Vec<String> = map_paths_to_classes(&pruned, &gz2_labelling())
        .unwrap()
        .into_iter()
        .map(|(_, pc)| pc.class)
        .collect();
    assert_eq!(
        classes,
        [
            "smooth_completely_round",
            "smooth_in_between",
            "smooth_cigar_shaped",
            "edge_on_with_bulge",
            "edge_on_no_bulge",
            "face_on_obvious_bulge",
            "face_on_just_noticeable_bulge",
            "face_on_no_bulge",
            "star_or_artifact",
        ]
    );
}

#[test]
fn gz2_votes_survive_projection() {
    let tree = gz2_tree();
    let paths = tree.enumerate_paths();
    // one volunteer on every third original path
    let truth = PathCounts {
        paths: paths.iter().map(|p| tree.path_key(p)).collect(),
        counts: (0..paths.len()).map(|i| if i % 3 == 0 { 1.0 } else { 0.0 }).collect(),
    };
    let votes = induce_votes(&tree, &truth).unwrap();
    let projected = project_votes(&tree, &gz2_prunes(), &votes).unwrap();
    let pruned = gz2_pruned_tree().unwrap();
    projected.check_conservation(&pruned, 0.0).unwrap();
    assert_eq!(projected.get("T05", "obvious"), votes.get("T05", "obvious") + votes.get("T05", "dominant"));
    assert_eq!(projected.get("T09", "with_bulge"), votes.get("T09", "rounded") + votes.get("T09", "boxy"));
    assert_eq!(projected.get("T06", "yes"), 0.0);

    // an original path lands on the pruned path sharing its surviving steps
    let mut oracle = vec![0.0; 9];
    let pruned_keys: Vec<String> = pruned.enumerate_paths().iter().map(|p| pruned.path_key(p).0).collect();
    for (key, &c) in truth.paths.iter().zip(&truth.counts) {
        let kept: Vec<String> = key
            .0
            .split('>')
            .filter(|s| ["T01", "T02", "T05", "T07", "T09"].contains(&&s[..3]))
            .map(|s| s.replace("T05:dominant", "T05:obvious").replace("T09:rounded", "T09:with_bulge").replace("T09:boxy", "T09:with_bulge"))
            .collect();
        let i = pruned_keys.iter().position(|k| *k == kept.join(">")).unwrap();
        oracle[i] += c;
    }
    let int = decompose_votes(&pruned, &projected, DecomposeMode::Integer).unwrap();
    // the pruned tree is a tree, so its decomposition is unique
    assert_eq!(int.counts, oracle);
    let prop = decompose_votes(&pruned, &projected, DecomposeMode::Proportional).unwrap();
    for (a, b) in prop.counts.iter().zip(&oracle) {
        assert!((a - b).abs() < 1e-9);
    }
}

#[test]
fn chain_tree_gives_single_path() {
    let tree = DecisionTree::from_json(
        r#"{"root":"a","tasks":[
            {"id":"a","answers":[{"label":"x","next":"b"}]},
            {"id":"b","answers":[{"label":"x","next":"c"}]},
            {"id":"c","answers":[{"label":"x","next":"exit"}]}]}"#,
    )
    .unwrap();
    let mut votes = VoteTable::new();
    for t in ["a", "b", "c"] {
        votes.add(t, "x", 17.0).unwrap();
    }
    for mode in [DecomposeMode::Proportional, DecomposeMode::Integer] {
        assert_eq!(decompose_votes(&tree, &votes, mode).unwrap().counts, [17.0]);
    }
}

#[test]
fn single_task_paths_and_dfs_chain() {
    let tree = DecisionTree::from_json(
        r#"{"root":"q","tasks":[{"id":"q","answers":[
            {"label":"a","next":"exit"},{"label":"b","next":"exit"},{"label":"c","next":"exit"}]}]}"#,
    )
    .unwrap();
    assert_eq!(tree.enumerate_paths().len(), 3);

    // three binary tasks, answer 1 of each exits early
    let chain = DecisionTree::from_json(
        r#"{"root":"a","tasks":[
            {"id":"a","answers":[{"label":"0","next":"b"},{"label":"1","next":"exit"}]},
            {"id":"b","answers":[{"label":"0","next":"c"},{"label":"1","next":"exit"}]},
            {"id":"c","answers":[{"label":"0","next":"exit"},{"label":"1","next":"exit"}]}]}"#,
    )
    .unwrap();
    let paths = chain.enumerate_paths();
    assert_eq!(paths.len() as u64, dfs_path_count(&chain));
    let keys: Vec<String> = paths.iter().map(|p| chain.path_key(p).0).collect();
    assert_eq!(keys, ["a:0>b:0>c:0", "a:0>b:0>c:1", "a:0>b:1", "a:1"]);
}

#[test]
fn empty_prune_list_is_identity() {
    let tree = gz2_tree();
    assert_eq!(apply_prunes(&tree, &[]).unwrap(), tree);
}

#[test]
fn ops_on_removed_tasks_name_the_op() {
    let tree = gz2_tree();
    let mut ops = gz2_prunes();
    ops.push(PruneOp::MakeExit {
        task: "T03".into(),
        answer: "bar".into(),
    });
    let n = ops.len() - 1;
    match apply_prunes(&tree, &ops).unwrap_err() {
        Error::InvalidOp { index, op, .. } => {
            assert_eq!(index, n);
            assert_eq!(op, "make-exit T03/bar");
        }
        e => panic!("unexpected {e}"),
    }
    let bad_merge = PruneOp::MergeAnswers {
        task: "T01".into(),
        answers: vec!["smooth".into(), "star_or_artifact".into()],
        label: "x".into(),
    };
    assert!(matches!(apply_prunes(&tree, &[bad_merge]), Err(Error::InvalidOp { .. })));
    let cycle = PruneOp::RewireAnswer {
        task: "T06".into(),
        answer: "no".into(),
        to: Next::Task("T01".into()),
    };
    assert!(matches!(apply_prunes(&tree, &[cycle]), Err(Error::InvalidOp { .. })));
}

#[test]
fn malformed_trees_are_rejected() {
    for bad in [
        r#"{"root":"a","tasks":[{"id":"a","answers":[{"label":"x","next":"a"}]}]}"#,
        r#"{"root":"a","tasks":[{"id":"a","answers":[{"label":"x","next":"b"}]}]}"#,
        r#"{"root":"a","tasks":[{"id":"a","answers":[{"label":"x","next":"exit"}]},{"id":"b","answers":[{"label":"x","next":"exit"}]}]}"#,
        r#"{"root":"a","tasks":[{"id":"a","answers":[{"label":"x","next":"exit"},{"label":"x","next":"exit"}]}]}"#,
        r#"{"root":"z","tasks":[{"id":"a","answers":[{"label":"x","next":"exit"}]}]}"#,
    ] {
        assert!(DecisionTree::from_json(bad).is_err(), "{bad}");
    }
}

#[test]
fn labelling_must_be_a_bijection() {
    let tree = gz2_pruned_tree().unwrap();
    let mut labels = gz2_labelling();
    labels[1].class = labels[0].class.clone();
    assert!(matches!(map_paths_to_classes(&tree, &labels), Err(Error::InvalidLabelling(_))));
    let mut labels = gz2_labelling();
    labels.pop();
    assert!(matches!(map_paths_to_classes(&tree, &labels), Err(Error::InvalidLabelling(_))));

    let ident = map_paths_to_classes(&tree, &identity_labelling(&tree)).unwrap();
    for (i, (idx, pc)) in ident.iter().enumerate() {
        assert_eq!(*idx, i);
        assert_eq!(pc.class, i.to_string());
    }
}

#[test]
fn votes_csv_round_trip_and_errors() {
    let mut votes = VoteTable::new();
    votes.add("T01", "smooth", 3.0).unwrap();
    votes.add("T07", "in_between", 2.5).unwrap();
    let mut buf = Vec::new();
    votes.write_csv(&mut buf).unwrap();
    assert_eq!(VoteTable::read_csv(buf.as_slice()).unwrap(), votes);
    let dup = "task_id,answer_label,count\nT01,smooth,1\nT01,smooth,2\n";
    assert!(VoteTable::read_csv(dup.as_bytes()).is_err());
    let neg = "task_id,answer_label,count\nT01,smooth,-1\n";
    assert!(VoteTable::read_csv(neg.as_bytes()).is_err());
    let mut frac = VoteTable::new();
    frac.add("T01", "smooth", 0.5).unwrap();
    frac.add("T07", "completely_round", 0.5).unwrap();
    let tree = gz2_pruned_tree().unwrap();
    assert!(decompose_votes(&tree, &frac, DecomposeMode::Integer).is_err());
    assert!(decompose_votes(&tree, &frac, DecomposeMode::Proportional).is_ok());
}
