//! Lexical overlap features. Tokenization is whitespace splitting on
//! lowercased text; anything fancier is out of scope for this artifact.

use std::collections::{BTreeSet, HashMap};

use crate::domain::{Document, QueryDocumentPair};
use crate::error::{Error, Result};

pub const FEATURE_DIM: usize = 6;

pub const FEATURE_NAMES: [&str; FEATURE_DIM] = [
    "title_overlap",
    "summary_overlap",
    "hashtag_overlap",
    "idf_overlap",
    "length_ratio",
    "bias",
];

pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|t| t.to_lowercase())
        .filter(|t| !t.is_empty())
        .collect()
}

fn token_set(text: &str) -> BTreeSet<String> {
    tokenize(text).into_iter().collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        for (i, v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::input(format!("feature {i} is {v}")));
            }
        }
        Ok(FeatureVector(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Corpus-fitted extractor. The IDF table is the only corpus state; unseen
/// tokens take the max-rarity value (document frequency zero).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureExtractor {
    idf: HashMap<String, f64>,
    num_docs: usize,
}

impl FeatureExtractor {
    /// Fit document frequencies over the corpus. Each document counts once
    /// per distinct token across title, hashtags, and summary.
    pub fn fit(documents: &[Document]) -> Self {
        let mut df: HashMap<String, usize> = HashMap::new();
        for doc in documents {
            let mut tokens = token_set(&doc.title);
            for tag in &doc.hashtags {
                tokens.extend(token_set(tag));
            }
            tokens.extend(token_set(&doc.summary));
            for token in tokens {
                *df.entry(token).or_insert(0) += 1;
            }
        }
        let n = documents.len();
        let idf = df
            .into_iter()
            .map(|(token, count)| (token, Self::idf_value(n, count)))
            .collect();
        FeatureExtractor { idf, num_docs: n }
    }

    fn idf_value(num_docs: usize, df: usize) -> f64 {
        ((num_docs as f64 + 1.0) / (df as f64 + 1.0)).ln() + 1.0
    }

    pub fn idf(&self, token: &str) -> f64 {
        self.idf
            .get(token)
            .copied()
            .unwrap_or_else(|| Self::idf_value(self.num_docs, 0))
    }

    pub fn feature_dim(&self) -> usize {
        FEATURE_DIM
    }

    /// Overlap ratios are |query tokens covered| / |query tokens|; the IDF
    /// variant weights both sides by token rarity. The bias entry is 1.
    pub fn features(&self, pair: &QueryDocumentPair) -> Result<FeatureVector> {
        let query_tokens = token_set(&pair.query.text);
        if query_tokens.is_empty() {
            return Err(Error::input(format!(
                "query {}: no tokens to featurize",
                pair.query.id
            )));
        }

        let title = token_set(&pair.document.title);
        let mut hashtags = BTreeSet::new();
        for tag in &pair.document.hashtags {
            hashtags.extend(token_set(tag));
        }
        let summary = token_set(&pair.document.summary);
        let mut all_doc = title.clone();
        all_doc.extend(hashtags.iter().cloned());
        all_doc.extend(summary.iter().cloned());

        let qn = query_tokens.len() as f64;
        let overlap = |side: &BTreeSet<String>| {
            query_tokens.intersection(side).count() as f64 / qn
        };

        let idf_hit: f64 = query_tokens
            .iter()
            .filter(|t| all_doc.contains(*t))
            .map(|t| self.idf(t))
            .sum();
        let idf_total: f64 = query_tokens.iter().map(|t| self.idf(t)).sum();

        let doc_len = all_doc.len() as f64;
        let values = vec![
            overlap(&title),
            overlap(&summary),
            overlap(&hashtags),
            idf_hit / idf_total,
            qn / (qn + doc_len),
            1.0,
        ];
        FeatureVector::new(values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{LanguageFamily, Query};

    fn doc(id: &str, title: &str, tags: &[&str], summary: &str) -> Document {
        Document {
            id: id.into(),
            title: title.into(),
            hashtags: tags.iter().map(|s| s.to_string()).collect(),
            summary: summary.into(),
        }
    }

    fn pair(text: &str, document: Document) -> QueryDocumentPair {
        QueryDocumentPair::new(
            Query {
                id: "q".into(),
                text: text.into(),
                language_family: LanguageFamily::Germanic,
                arrival_iteration: 0,
            },
            document,
            vec![],
        )
        .unwrap()
    }

    #[test]
    fn tokenize_lowercases_and_splits() {
        assert_eq!(tokenize("Alpha  BETA\tgamma"), vec!["alpha", "beta", "gamma"]);
        assert!(tokenize("   ").is_empty());
    }

    #[test]
    fn full_title_match_gives_unit_title_overlap() {
        let corpus = vec![
            doc("d1", "alpha beta", &["alpha"], "alpha beta gamma"),
            doc("d2", "delta", &[], "delta epsilon"),
        ];
        let ex = FeatureExtractor::fit(&corpus);
        let p = pair("alpha beta", corpus[0].clone());
        let f = ex.features(&p).unwrap();
        assert_eq!(f.values()[0], 1.0); // title
        assert_eq!(f.values()[1], 1.0); // summary
        assert_eq!(f.values()[2], 0.5); // hashtags cover only "alpha"
        assert_eq!(f.values()[3], 1.0); // idf-weighted, all covered
        assert_eq!(f.values()[5], 1.0); // bias
        for v in f.values() {
            assert!(v.is_finite());
        }
    }

    #[test]
    fn disjoint_pair_has_zero_overlaps() {
        let corpus = vec![doc("d1", "alpha", &[], "beta")];
        let ex = FeatureExtractor::fit(&corpus);
        let f = ex.features(&pair("omega psi", corpus[0].clone())).unwrap();
        assert_eq!(&f.values()[..4], &[0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn rare_tokens_outweigh_common_ones_in_idf_overlap() {
        // "common" appears in every document, "rare" in one.
        let corpus: Vec<Document> = (0..10)
            .map(|i| {
                let title = if i == 0 { "rare common" } else { "common" };
                doc(&format!("d{i}"), title, &[], "filler text")
            })
            .collect();
        let ex = FeatureExtractor::fit(&corpus);
        assert!(ex.idf("rare") > ex.idf("common"));
        let hits_rare = ex.features(&pair("rare zzz", corpus[0].clone())).unwrap();
        let hits_common = ex.features(&pair("common zzz", corpus[0].clone())).unwrap();
        // Same raw overlap (1 of 2 tokens) but the rare hit carries more idf mass.
        assert_eq!(hits_rare.values()[0], hits_common.values()[0]);
        assert!(hits_rare.values()[3] > hits_common.values()[3]);
    }

    #[test]
    fn empty_query_is_an_input_error() {
        let corpus = vec![doc("d1", "alpha", &[], "beta")];
        let ex = FeatureExtractor::fit(&corpus);
        let mut p = pair("alpha", corpus[0].clone());
        p.query.text = "   ".into();
        assert!(ex.features(&p).is_err());
    }
}
