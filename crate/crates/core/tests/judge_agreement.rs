//! RuleJudge against hand-labelled answer pairs.

use calibkit_core::{Judge, RuleJudge};
use serde_json::Value;

#[test]
fn rule_judge_agrees_with_labels_on_exact_entities() {
    let rows: Vec<Value> = include_str!("fixtures/judge_pairs.jsonl")
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(rows.len(), 300);

    let (mut exact, mut exact_hits, mut alias, mut alias_hits) = (0, 0, 0, 0);
    for r in &rows {
        let a = r["a"].as_str().unwrap();
        let b = r["b"].as_str().unwrap();
        let got = RuleJudge
            .judge_equivalent(a, b)
            .unwrap()
            .equivalent_or_correct;
        let hit = got == r["same"].as_bool().unwrap();
        if r["category"] == "alias" {
            alias += 1;
            alias_hits += hit as usize;
        } else {
            exact += 1;
            exact_hits += hit as usize;
        }
    }
    let exact_rate = exact_hits as f64 / exact as f64;
    let overall = (exact_hits + alias_hits) as f64 / rows.len() as f64;
    println!(
        "exact-entity agreement {exact_hits}/{exact} ({exact_rate:.3}), aliases {alias_hits}/{alias}, overall {overall:.3}"
    );
    assert!(exact_rate >= 0.9, "exact-entity agreement {exact_rate:.3}");
}
