//! Ranking and labeling metrics: graded NDCG@k, exact-match label accuracy,
//! the side-by-side advantage ratio, and absolute-gain arithmetic, plus the
//! held-out evaluation driver that reports them overall and per language
//! family.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::domain::{Document, LanguageFamily, Query, QueryDocumentPair};
use crate::error::{Error, Result};
use crate::model::RelevanceModel;
use crate::simulator::GroundTruth;

/// One scored candidate inside a ranked list.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedEntry {
    pub doc_id: String,
    pub score: f64,
    pub true_label: usize,
}

/// A query's candidates ordered by model score descending, score ties broken
/// by doc id ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedList {
    pub query_id: String,
    entries: Vec<RankedEntry>,
}

impl RankedList {
    pub fn new(query_id: impl Into<String>, mut entries: Vec<RankedEntry>) -> Result<RankedList> {
        for e in &entries {
            if !e.score.is_finite() {
                return Err(Error::input(format!(
                    "non-finite score for document {}",
                    e.doc_id
                )));
            }
        }
        entries.sort_by(|a, b| {
            b.score
                .partial_cmp(&a.score)
                .expect("scores validated finite")
                .then_with(|| a.doc_id.cmp(&b.doc_id))
        });
        Ok(RankedList {
            query_id: query_id.into(),
            entries,
        })
    }

    pub fn entries(&self) -> &[RankedEntry] {
        &self.entries
    }
}

fn dcg(labels: &[usize], k: usize) -> f64 {
    labels
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, l)| ((1u64 << l) - 1) as f64 / ((i + 2) as f64).log2())
        .sum()
}

/// Graded NDCG at depth k: gain 2^label - 1, discount log2(rank + 1). Lists
/// whose ideal DCG is zero (every label 0) score 1.0 so query averages stay
/// total-count based.
pub fn ndcg_at_k(ranked: &RankedList, k: usize) -> Result<f64> {
    if k < 1 {
        return Err(Error::input(format!("ndcg depth must be >= 1, got {k}")));
    }
    if ranked.entries.is_empty() {
        return Err(Error::input(format!(
            "ranked list for query {} is empty",
            ranked.query_id
        )));
    }
    let labels: Vec<usize> = ranked.entries.iter().map(|e| e.true_label).collect();
    let mut ideal = labels.clone();
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let idcg = dcg(&ideal, k);
    if idcg == 0.0 {
        return Ok(1.0);
    }
    Ok(dcg(&labels, k) / idcg)
}

/// Fraction of exact (predicted, true) label matches.
pub fn relevance_accuracy(predictions: &[(usize, usize)]) -> Result<f64> {
    if predictions.is_empty() {
        return Err(Error::input("accuracy over an empty prediction list"));
    }
    let hits = predictions.iter().filter(|(p, t)| p == t).count();
    Ok(hits as f64 / predictions.len() as f64)
}

/// Side-by-side advantage ratio (G - B) / (G - B + S) over win counts:
/// G wins, B losses, S ties.
pub fn sbs_delta(good: u64, bad: u64, same: u64) -> Result<f64> {
    let diff = good as f64 - bad as f64;
    let denom = diff + same as f64;
    if denom == 0.0 {
        return Err(Error::UndefinedRatio(format!(
            "side-by-side denominator is zero (G={good}, B={bad}, S={same})"
        )));
    }
    Ok(diff / denom)
}

/// Absolute population gain from a rate delta: rate_gain * population.
pub fn ab_absolute_gain(rate_gain: f64, population: u64) -> f64 {
    rate_gain * population as f64
}

/// One row of metrics for a scope ("overall" or a language family).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricBlock {
    pub scope: String,
    pub ndcg1: f64,
    pub ndcg4: f64,
    pub accuracy: f64,
    pub num_queries: usize,
    pub num_pairs: usize,
}

/// Held-out evaluation result: the overall block first, then one block per
/// language family present, plus the count of queries skipped for having no
/// candidates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalReport {
    pub blocks: Vec<MetricBlock>,
    pub skipped_queries: usize,
}

impl EvalReport {
    pub fn overall(&self) -> &MetricBlock {
        &self.blocks[0]
    }

    pub fn block(&self, scope: &str) -> Option<&MetricBlock> {
        self.blocks.iter().find(|b| b.scope == scope)
    }
}

/// Rank a query's candidates by normalized expected score (descending, doc
/// id ascending on ties).
pub fn rank_documents(
    model: &dyn RelevanceModel,
    query: &Query,
    docs: &[Document],
) -> Result<Vec<Document>> {
    let mut scored = Vec::with_capacity(docs.len());
    for doc in docs {
        let pair = QueryDocumentPair::new(query.clone(), doc.clone(), vec![])?;
        let dist = model.label_distribution(&pair)?;
        scored.push((dist.expected_score(), doc.clone()));
    }
    scored.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .expect("expected scores are finite")
            .then_with(|| a.1.id.cmp(&b.1.id))
    });
    Ok(scored.into_iter().map(|(_, d)| d).collect())
}

#[derive(Default)]
struct Accumulator {
    ndcg1_sum: f64,
    ndcg4_sum: f64,
    num_queries: usize,
    predictions: Vec<(usize, usize)>,
}

impl Accumulator {
    fn block(&self, scope: &str) -> Result<MetricBlock> {
        if self.num_queries == 0 {
            return Err(Error::input(format!(
                "no evaluable queries in scope {scope}"
            )));
        }
        Ok(MetricBlock {
            scope: scope.to_string(),
            ndcg1: self.ndcg1_sum / self.num_queries as f64,
            ndcg4: self.ndcg4_sum / self.num_queries as f64,
            accuracy: relevance_accuracy(&self.predictions)?,
            num_queries: self.num_queries,
            num_pairs: self.predictions.len(),
        })
    }
}

/// Score every candidate of every query, then report NDCG@1/@4 averaged over
/// queries and argmax accuracy over pairs, overall and per language family.
/// Queries with no candidates are skipped and counted.
pub fn evaluate(
    model: &dyn RelevanceModel,
    queries: &[Query],
    candidates: &BTreeMap<String, Vec<Document>>,
    truth: &GroundTruth,
) -> Result<EvalReport> {
    let mut ordered: Vec<&Query> = queries.iter().collect();
    ordered.sort_by(|a, b| a.id.cmp(&b.id));

    let mut overall = Accumulator::default();
    let mut by_family: BTreeMap<&'static str, Accumulator> = BTreeMap::new();
    let mut skipped = 0usize;

    for query in ordered {
        let docs = match candidates.get(&query.id) {
            Some(docs) if !docs.is_empty() => docs,
            _ => {
                skipped += 1;
                continue;
            }
        };
        let mut entries = Vec::with_capacity(docs.len());
        let mut predictions = Vec::with_capacity(docs.len());
        for doc in docs {
            let pair = QueryDocumentPair::new(query.clone(), doc.clone(), vec![])?;
            let dist = model.label_distribution(&pair)?;
            let label = truth.label(&query.id, &doc.id)?;
            entries.push(RankedEntry {
                doc_id: doc.id.clone(),
                score: dist.expected_score(),
                true_label: label,
            });
            predictions.push((dist.argmax(), label));
        }
        let ranked = RankedList::new(query.id.clone(), entries)?;
        let n1 = ndcg_at_k(&ranked, 1)?;
        let n4 = ndcg_at_k(&ranked, 4)?;

        let family = by_family.entry(query.language_family.as_str()).or_default();
        for acc in [&mut overall, family] {
            acc.ndcg1_sum += n1;
            acc.ndcg4_sum += n4;
            acc.num_queries += 1;
            acc.predictions.extend(predictions.iter().copied());
        }
    }

    let mut blocks = vec![overall.block("overall")?];
    for family in LanguageFamily::ALL {
        if let Some(acc) = by_family.get(family.as_str()) {
            blocks.push(acc.block(family.as_str())?);
        }
    }
    Ok(EvalReport {
        blocks,
        skipped_queries: skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{LabelDistribution, LabelSet};
    use crate::model::ConstantModel;

    fn list(labels_by_rank: &[usize]) -> RankedList {
        // Descending scores pin the given rank order.
        let entries = labels_by_rank
            .iter()
            .enumerate()
            .map(|(i, l)| RankedEntry {
                doc_id: format!("d{i}"),
                score: -(i as f64),
                true_label: *l,
            })
            .collect();
        RankedList::new("q", entries).unwrap()
    }

    #[test]
    fn ranked_list_sorts_by_score_then_id() {
        let ranked = RankedList::new(
            "q",
            vec![
                RankedEntry { doc_id: "b".into(), score: 1.0, true_label: 2 },
                RankedEntry { doc_id: "a".into(), score: 1.0, true_label: 1 },
                RankedEntry { doc_id: "c".into(), score: 3.0, true_label: 0 },
            ],
        )
        .unwrap();
        let ids: Vec<&str> = ranked.entries().iter().map(|e| e.doc_id.as_str()).collect();
        assert_eq!(ids, vec!["c", "a", "b"]);

        let bad = RankedList::new(
            "q",
            vec![RankedEntry { doc_id: "a".into(), score: f64::NAN, true_label: 0 }],
        );
        assert!(bad.is_err());
    }

    #[test]
    fn ndcg_reference_rows() {
        // Rank-order labels [1,3,2] at k=3.
        let n = ndcg_at_k(&list(&[1, 3, 2]), 3).unwrap();
        let dcg = 1.0 / 2f64.log2() + 7.0 / 3f64.log2() + 3.0 / 4f64.log2();
        let idcg = 7.0 / 2f64.log2() + 3.0 / 3f64.log2() + 1.0 / 4f64.log2();
        assert!((n - dcg / idcg).abs() < 1e-15);
        assert!((n - 0.7363).abs() < 5e-4);

        assert_eq!(ndcg_at_k(&list(&[3, 2, 1, 0]), 4).unwrap(), 1.0);
        assert_eq!(ndcg_at_k(&list(&[2, 2, 2]), 2).unwrap(), 1.0);
        assert_eq!(ndcg_at_k(&list(&[0, 0, 0]), 1).unwrap(), 1.0);
        // Max-label doc first gives NDCG@1 = 1 regardless of the tail.
        assert_eq!(ndcg_at_k(&list(&[3, 0, 3]), 1).unwrap(), 1.0);
        assert!(ndcg_at_k(&list(&[0, 3]), 1).unwrap() < 1e-12);

        assert_eq!(ndcg_at_k(&list(&[1]), 0).unwrap_err().exit_code(), 2);
        assert_eq!(
            ndcg_at_k(&RankedList::new("q", vec![]).unwrap(), 1)
                .unwrap_err()
                .exit_code(),
            2
        );
        // Depth past the list length is the full-list metric.
        assert_eq!(
            ndcg_at_k(&list(&[2, 1]), 10).unwrap(),
            ndcg_at_k(&list(&[2, 1]), 2).unwrap()
        );
    }

    /// Brute-force reference: best DCG over every permutation of the labels.
    fn ndcg_brute(labels: &[usize], k: usize) -> f64 {
        fn permutations(labels: &[usize]) -> Vec<Vec<usize>> {
            if labels.len() <= 1 {
                return vec![labels.to_vec()];
            }
            let mut out = Vec::new();
            for i in 0..labels.len() {
                let mut rest = labels.to_vec();
                let head = rest.remove(i);
                for mut tail in permutations(&rest) {
                    tail.insert(0, head);
                    out.push(tail);
                }
            }
            out
        }
        let best = permutations(labels)
            .into_iter()
            .map(|p| dcg(&p, k))
            .fold(0.0f64, f64::max);
        if best == 0.0 {
            1.0
        } else {
            dcg(labels, k) / best
        }
    }

    #[test]
    fn ndcg_matches_brute_force_on_short_lists() {
        for m in 1..=4usize {
            let mut tuple = vec![0usize; m];
            loop {
                for k in 1..=m {
                    let got = ndcg_at_k(&list(&tuple), k).unwrap();
                    let want = ndcg_brute(&tuple, k);
                    assert!(
                        (got - want).abs() < 1e-12,
                        "labels {tuple:?} k {k}: {got} vs {want}"
                    );
                }
                // Odometer over {0..3}^m.
                let mut i = 0;
                loop {
                    if i == m {
                        break;
                    }
                    tuple[i] += 1;
                    if tuple[i] < 4 {
                        break;
                    }
                    tuple[i] = 0;
                    i += 1;
                }
                if i == m {
                    break;
                }
            }
        }
    }

    #[test]
    fn ndcg_is_rank_only() {
        // Same order under a monotone score transform.
        let a = RankedList::new(
            "q",
            vec![
                RankedEntry { doc_id: "a".into(), score: 0.9, true_label: 1 },
                RankedEntry { doc_id: "b".into(), score: 0.5, true_label: 3 },
            ],
        )
        .unwrap();
        let b = RankedList::new(
            "q",
            vec![
                RankedEntry { doc_id: "a".into(), score: 900.0, true_label: 1 },
                RankedEntry { doc_id: "b".into(), score: 500.0, true_label: 3 },
            ],
        )
        .unwrap();
        assert_eq!(ndcg_at_k(&a, 2).unwrap(), ndcg_at_k(&b, 2).unwrap());
    }

    #[test]
    fn accuracy_rows() {
        assert_eq!(relevance_accuracy(&[(1, 1), (2, 2)]).unwrap(), 1.0);
        assert_eq!(relevance_accuracy(&[(1, 2), (0, 3)]).unwrap(), 0.0);
        assert_eq!(
            relevance_accuracy(&[(1, 1), (2, 2), (3, 3), (0, 1)]).unwrap(),
            0.75
        );
        assert!(relevance_accuracy(&[]).is_err());
        // Permutation invariance.
        let a = vec![(1, 1), (2, 0), (3, 3)];
        let b = vec![(3, 3), (1, 1), (2, 0)];
        assert_eq!(
            relevance_accuracy(&a).unwrap(),
            relevance_accuracy(&b).unwrap()
        );
    }

    #[test]
    fn sbs_rows() {
        assert_eq!(sbs_delta(7, 7, 6).unwrap(), 0.0);
        assert_eq!(sbs_delta(10, 5, 5).unwrap(), 0.5);
        assert!(matches!(
            sbs_delta(5, 5, 0).unwrap_err(),
            Error::UndefinedRatio { .. }
        ));
        // Swapping wins and losses flips the sign but not the magnitude:
        // the denominator moves with the numerator.
        assert_eq!(sbs_delta(9, 4, 20).unwrap(), 0.2);
        assert_eq!(sbs_delta(4, 9, 20).unwrap(), -1.0 / 3.0);
    }

    #[test]
    fn sbs_report_fixtures() {
        // Percent deltas from win-count triples with a 1000-weight tilt.
        for (g, b, s, pct) in [
            (124u64, 100u64, 976u64, 2.4),
            (138, 100, 962, 3.8),
            (147, 100, 953, 4.7),
            (177, 100, 923, 7.7),
            (126, 100, 974, 2.6),
            (155, 100, 945, 5.5),
        ] {
            let delta = sbs_delta(g, b, s).unwrap();
            assert!(
                (delta * 100.0 - pct).abs() < 1e-9,
                "({g},{b},{s}) gave {delta}"
            );
        }
    }

    #[test]
    fn absolute_gain_rows() {
        assert_eq!(ab_absolute_gain(0.000359, 70_000_000).round(), 25_130.0);
        assert_eq!(ab_absolute_gain(0.0, 123).round(), 0.0);
        assert_eq!(
            ab_absolute_gain(-0.012081, 200_000_000).round(),
            -2_416_200.0
        );
    }

    fn eval_fixture() -> (Vec<Query>, BTreeMap<String, Vec<Document>>, GroundTruth) {
        let mk_doc = |id: &str| Document {
            id: id.into(),
            title: format!("{id} title"),
            hashtags: vec![],
            summary: format!("{id} body"),
        };
        let mut queries = Vec::new();
        let mut candidates = BTreeMap::new();
        let mut truth = GroundTruth::default();
        for (i, family) in LanguageFamily::ALL.iter().enumerate() {
            let qid = format!("q{i}");
            queries.push(Query {
                id: qid.clone(),
                text: format!("query {i}"),
                language_family: *family,
                arrival_iteration: 0,
            });
            let docs = vec![mk_doc(&format!("q{i}-a")), mk_doc(&format!("q{i}-b"))];
            truth.insert(qid.clone(), docs[0].id.clone(), 3);
            truth.insert(qid.clone(), docs[1].id.clone(), i % 2);
            candidates.insert(qid, docs);
        }
        (queries, candidates, truth)
    }

    /// Point-mass on the true label: a perfect oracle model.
    struct TruthModel {
        truth: GroundTruth,
        label_set: LabelSet,
    }

    impl RelevanceModel for TruthModel {
        fn label_set(&self) -> LabelSet {
            self.label_set
        }
        fn version(&self) -> &str {
            "truth-oracle"
        }
        fn label_distribution(&self, pair: &QueryDocumentPair) -> Result<LabelDistribution> {
            let label = self.truth.label(&pair.query.id, &pair.document.id)?;
            LabelDistribution::point_mass(label, self.label_set.cardinality())
        }
        fn sample_judgments(
            &self,
            pair: &QueryDocumentPair,
            num_samples: usize,
            _temperature: f64,
            _seed: u64,
        ) -> Result<Vec<crate::domain::Judgment>> {
            let label = self.truth.label(&pair.query.id, &pair.document.id)?;
            Ok(vec![
                crate::domain::Judgment {
                    label,
                    rationale: "truth".into(),
                    source: crate::domain::JudgmentSource::Model,
                };
                num_samples
            ])
        }
    }

    #[test]
    fn perfect_model_scores_one_everywhere() {
        let (queries, candidates, truth) = eval_fixture();
        let model = TruthModel {
            truth: truth.clone(),
            label_set: LabelSet::new(4).unwrap(),
        };
        let report = evaluate(&model, &queries, &candidates, &truth).unwrap();
        assert_eq!(report.skipped_queries, 0);
        assert_eq!(report.blocks.len(), 4);
        for block in &report.blocks {
            assert_eq!(block.ndcg1, 1.0, "{}", block.scope);
            assert_eq!(block.ndcg4, 1.0, "{}", block.scope);
            assert_eq!(block.accuracy, 1.0, "{}", block.scope);
        }
        assert_eq!(report.overall().num_queries, 3);
        assert_eq!(report.overall().num_pairs, 6);

        // Determinism: identical reports on replay.
        let again = evaluate(&model, &queries, &candidates, &truth).unwrap();
        assert_eq!(report, again);
    }

    #[test]
    fn uniform_model_accuracy_is_tie_break_frequency() {
        let (queries, candidates, truth) = eval_fixture();
        let model = ConstantModel::new(LabelDistribution::uniform(4).unwrap());
        let report = evaluate(&model, &queries, &candidates, &truth).unwrap();
        // Uniform argmax ties break to label 0; true labels are
        // [3,0],[3,1],[3,0] so two of six pairs match.
        assert!((report.overall().accuracy - 2.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn queries_without_candidates_are_skipped_and_counted() {
        let (mut queries, candidates, truth) = eval_fixture();
        queries.push(Query {
            id: "q-none".into(),
            text: "orphan".into(),
            language_family: LanguageFamily::Minor,
            arrival_iteration: 0,
        });
        let model = TruthModel {
            truth: truth.clone(),
            label_set: LabelSet::new(4).unwrap(),
        };
        let report = evaluate(&model, &queries, &candidates, &truth).unwrap();
        assert_eq!(report.skipped_queries, 1);
        assert_eq!(report.overall().num_queries, 3);
    }

    #[test]
    fn metric_block_wire_shape() {
        let block = MetricBlock {
            scope: "overall".into(),
            ndcg1: 0.5,
            ndcg4: 0.75,
            accuracy: 0.8,
            num_queries: 10,
            num_pairs: 60,
        };
        let json = crate::hashing::canonical_json(&block).unwrap();
        assert_eq!(
            json,
            r#"{"accuracy":0.8,"ndcg1":0.5,"ndcg4":0.75,"num_pairs":60,"num_queries":10,"scope":"overall"}"#
        );
    }
}
