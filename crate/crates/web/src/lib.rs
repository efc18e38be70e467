//! wasm bindings for the static demo page in `www/`. Exports take and return
//! strings or numbers; structured results are JSON.

use coldcure::curation::{conditional_consensus_probs, consensus_prob, noconsensus_log_prob, ClassProbs};
use coldcure::rng::rng_from_seed;
use coldcure::sweep::{illustrate_clustering, Illustration2DConfig};
use coldcure::voteflow::{self, DecomposeMode, VoteTable};
use serde::Serialize;
use wasm_bindgen::prelude::*;

type Out = Result<String, String>;

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

#[derive(Serialize)]
struct ConsensusReport {
    probs: Vec<f64>,
    consensus: f64,
    noconsensus: f64,
    /// Class distribution given that consensus was reached.
    conditional: Vec<f64>,
}

/// `probs` is a comma-separated class distribution; it is renormalised.
pub fn consensus_report(probs: &str, s: usize) -> Out {
    let values = probs
        .split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|_| format!("`{}` is not a number", v.trim())))
        .collect::<Result<Vec<_>, _>>()?;
    let total: f64 = values.iter().sum();
    if !(total > 0.0) {
        return Err("probabilities must have a positive sum".into());
    }
    let p = ClassProbs::new(values.iter().map(|v| v / total).collect()).map_err(err)?;
    if s == 0 {
        return Err("S must be at least 1".into());
    }
    let report = ConsensusReport {
        probs: p.as_slice().to_vec(),
        consensus: consensus_prob(&p, s),
        noconsensus: noconsensus_log_prob(&p, s).exp(),
        conditional: conditional_consensus_probs(&p, s).map_err(err)?.into_vec(),
    };
    serde_json::to_string(&report).map_err(err)
}

#[derive(Serialize)]
struct ScatterPoint {
    x: f64,
    y: f64,
    class: usize,
    /// Consensus label, or -1 for noconsensus.
    label: i64,
}

/// Two unit Gaussian classes at (∓1, 0), each point labelled by `s` annotators.
pub fn curation_scatter(s: usize, points_per_class: usize, seed: u64) -> Out {
    let cfg = Illustration2DConfig {
        s,
        points_per_class,
        ..Illustration2DConfig::default()
    };
    let points = illustrate_clustering(&cfg, &mut rng_from_seed(seed)).map_err(err)?;
    let out: Vec<ScatterPoint> = points
        .iter()
        .map(|p| ScatterPoint {
            x: p.x,
            y: p.y,
            class: p.true_class,
            label: p.outcome.label().map_or(-1, |l| l as i64),
        })
        .collect();
    serde_json::to_string(&out).map_err(err)
}

#[derive(Serialize)]
struct FlowRow {
    path: String,
    class: String,
    count: f64,
}

#[derive(Serialize)]
struct FlowReport {
    original_paths: usize,
    pruned_paths: usize,
    rows: Vec<FlowRow>,
}

/// Votes CSV on the unpruned Galaxy Zoo 2 tree, split over the nine pruned classes.
pub fn gz2_flow(votes_csv: &str, integer: bool) -> Out {
    let tree = voteflow::gz2_tree();
    let ops = voteflow::gz2_prunes();
    let pruned = voteflow::apply_prunes(&tree, &ops).map_err(err)?;
    let votes = VoteTable::read_csv(votes_csv.as_bytes()).map_err(err)?;
    let projected = voteflow::project_votes(&tree, &ops, &votes).map_err(err)?;
    let mode = if integer {
        DecomposeMode::Integer
    } else {
        DecomposeMode::Proportional
    };
    let counts = voteflow::decompose_votes(&pruned, &projected, mode).map_err(err)?;
    let classes = voteflow::map_paths_to_classes(&pruned, &voteflow::gz2_labelling()).map_err(err)?;
    let report = FlowReport {
        original_paths: tree.enumerate_paths().len(),
        pruned_paths: counts.paths.len(),
        rows: classes
            .into_iter()
            .map(|(i, pc)| FlowRow {
                path: pc.path.0,
                class: pc.class,
                count: counts.counts[i],
            })
            .collect(),
    };
    serde_json::to_string(&report).map_err(err)
}

#[wasm_bindgen(js_name = consensusReport)]
pub fn consensus_report_js(probs: &str, s: usize) -> Result<String, JsError> {
    consensus_report(probs, s).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = curationScatter)]
pub fn curation_scatter_js(s: usize, points_per_class: usize, seed: u32) -> Result<String, JsError> {
    curation_scatter(s, points_per_class, seed.into()).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = gz2Flow)]
pub fn gz2_flow_js(votes_csv: &str, integer: bool) -> Result<String, JsError> {
    gz2_flow(votes_csv, integer).map_err(|e| JsError::new(&e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn consensus_report_of_a_fair_coin() {
        let v: serde_json::Value = serde_json::from_str(&consensus_report("1, 1", 3).unwrap()).unwrap();
        assert!((v["consensus"].as_f64().unwrap() - 0.25).abs() < 1e-12);
        assert!((v["noconsensus"].as_f64().unwrap() - 0.75).abs() < 1e-12);
        assert!(consensus_report("a,1", 2).is_err());
        assert!(consensus_report("0,0", 2).is_err());
    }

    #[test]
    fn scatter_marks_noconsensus() {
        let v: Vec<serde_json::Value> = serde_json::from_str(&curation_scatter(5, 50, 1).unwrap()).unwrap();
        assert_eq!(v.len(), 100);
        assert!(v.iter().any(|p| p["label"] == -1));
    }

    #[test]
    fn gz2_flow_gives_nine_classes() {
        let csv = "task_id,answer_label,count\nT01,smooth,2\nT01,star_or_artifact,1\nT07,in_between,2\nT06,no,2\n";
        let v: serde_json::Value = serde_json::from_str(&gz2_flow(csv, true).unwrap()).unwrap();
        assert_eq!(v["original_paths"], 1265);
        assert_eq!(v["rows"].as_array().unwrap().len(), 9);
        assert_eq!(v["rows"][1]["count"], 2.0);
        assert!(gz2_flow("task_id,answer_label,count\nT01,smooth,2\n", false).is_err());
    }
}
