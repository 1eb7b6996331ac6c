//! Cross-cluster model registry keyed by support signature.

use std::collections::BTreeMap;

use nalgebra::DMatrix;

use crate::selection::ScoredModel;
use crate::stlsq::ModelSignature;

/// One cluster's contribution to a signature.
#[derive(Debug, Clone)]
pub struct Contribution {
    pub anchor: usize,
    pub coefficients: DMatrix<f64>,
    pub aicc: f64,
}

#[derive(Debug, Clone, Default)]
pub struct CatalogEntry {
    pub contributions: Vec<Contribution>,
}

impl CatalogEntry {
    /// Number of distinct clusters contributing this signature.
    pub fn frequency(&self) -> usize {
        self.contributions.len()
    }

    pub fn mean_aicc(&self) -> f64 {
        if self.contributions.is_empty() {
            return f64::NAN;
        }
        self.contributions.iter().map(|c| c.aicc).sum::<f64>() / self.contributions.len() as f64
    }

    /// Per-position median of the coefficients across contributing clusters.
    /// Robust against the outlier fits picked up near transitions.
    pub fn representative_coefficients(&self) -> Option<DMatrix<f64>> {
        let first = self.contributions.first()?;
        let (p, n) = first.coefficients.shape();
        let mut out = DMatrix::zeros(p, n);
        let mut values = Vec::with_capacity(self.contributions.len());
        for l in 0..p {
            for j in 0..n {
                values.clear();
                values.extend(self.contributions.iter().map(|c| c.coefficients[(l, j)]));
                values.sort_by(|a, b| a.partial_cmp(b).unwrap());
                let mid = values.len() / 2;
                out[(l, j)] = if values.len() % 2 == 1 {
                    values[mid]
                } else {
                    0.5 * (values[mid - 1] + values[mid])
                };
            }
        }
        Some(out)
    }
}

/// Registry of supported models across clusters with frequency counts.
#[derive(Debug, Clone, Default)]
pub struct ModelCatalog {
    entries: BTreeMap<ModelSignature, CatalogEntry>,
}

impl ModelCatalog {
    pub fn new() -> Self {
        Self::default()
    }

    /// Record one cluster's supported models. Duplicate signatures within the
    /// same call count once (the lowest-AICc instance is kept).
    pub fn register(&mut self, cluster_anchor: usize, supported: &[ScoredModel]) {
        let mut best: BTreeMap<ModelSignature, &ScoredModel> = BTreeMap::new();
        for s in supported {
            let sig = s.model.signature();
            match best.get(&sig) {
                Some(prev) if prev.aicc <= s.aicc => {}
                _ => {
                    best.insert(sig, s);
                }
            }
        }
        for (sig, s) in best {
            self.entries.entry(sig).or_default().contributions.push(Contribution {
                anchor: cluster_anchor,
                coefficients: s.model.coefficients.clone(),
                aicc: s.aicc,
            });
        }
    }

    /// Merge another catalog into this one. Associative and commutative up to
    /// contribution order, which is re-sorted by anchor for determinism.
    pub fn merge(&mut self, other: ModelCatalog) {
        for (sig, entry) in other.entries {
            let slot = self.entries.entry(sig).or_default();
            slot.contributions.extend(entry.contributions);
            slot.contributions.sort_by_key(|c| c.anchor);
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = (&ModelSignature, &CatalogEntry)> {
        self.entries.iter()
    }

    pub fn get(&self, sig: &ModelSignature) -> Option<&CatalogEntry> {
        self.entries.get(sig)
    }

    /// Total contributions across all entries (equals the sum over clusters of
    /// distinct retained models).
    pub fn total_contributions(&self) -> usize {
        self.entries.values().map(|e| e.frequency()).sum()
    }

    /// Entries by descending frequency; ties broken by lower mean AICc, then
    /// by signature order for determinism.
    pub fn rank_by_frequency(&self, top: usize) -> Vec<(&ModelSignature, &CatalogEntry)> {
        let mut ranked: Vec<(&ModelSignature, &CatalogEntry)> = self.entries.iter().collect();
        ranked.sort_by(|a, b| {
            b.1.frequency()
                .cmp(&a.1.frequency())
                .then_with(|| {
                    a.1.mean_aicc()
                        .partial_cmp(&b.1.mean_aicc())
                        .unwrap_or(std::cmp::Ordering::Equal)
                })
                .then_with(|| a.0.cmp(b.0))
        });
        ranked.truncate(top);
        ranked
    }
}

/// Best (lowest-AICc) retained model at one anchor, or `None` when the anchor
/// is unresolved.
#[derive(Debug, Clone)]
pub struct RegimeMapRow {
    pub anchor: usize,
    pub time: f64,
    pub coordinates: Vec<f64>,
    pub best: Option<BestModel>,
}

#[derive(Debug, Clone)]
pub struct BestModel {
    pub signature: ModelSignature,
    pub coefficients: DMatrix<f64>,
    pub aicc: f64,
    pub k: usize,
}

/// Build the per-anchor regime map from each anchor's retained model list
/// (already sorted by relative AICc, as produced by `rank_and_filter`).
pub fn regime_map(
    anchors: &[(usize, f64, Vec<f64>)],
    retained_per_anchor: &[Vec<ScoredModel>],
) -> Vec<RegimeMapRow> {
    anchors
        .iter()
        .zip(retained_per_anchor)
        .map(|((anchor, time, coords), retained)| RegimeMapRow {
            anchor: *anchor,
            time: *time,
            coordinates: coords.clone(),
            best: retained.first().map(|s| BestModel {
                signature: s.model.signature(),
                coefficients: s.model.coefficients.clone(),
                aicc: s.aicc,
                k: s.model.k(),
            }),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureLibrary;
    use crate::stlsq::SparseModel;

    fn scored_with(entries: &[(usize, usize, f64)], aicc: f64) -> ScoredModel {
        let lib = FeatureLibrary::new(2, 1).unwrap();
        let mut coeffs = DMatrix::zeros(lib.len(), 2);
        for &(l, j, c) in entries {
            coeffs[(l, j)] = c;
        }
        ScoredModel {
            model: SparseModel { coefficients: coeffs, lambda: 0.1, converged: true },
            e_avg: vec![],
            aicc,
            rel_aicc: 0.0,
            cluster_anchor: 0,
        }
    }

    #[test]
    fn empty_registration_changes_nothing() {
        let mut cat = ModelCatalog::new();
        cat.register(0, &[]);
        assert!(cat.is_empty());
    }

    #[test]
    fn same_signature_from_three_clusters_counts_three() {
        let mut cat = ModelCatalog::new();
        for anchor in 0..3 {
            cat.register(anchor, &[scored_with(&[(1, 0, 2.0)], 1.0)]);
        }
        assert_eq!(cat.len(), 1);
        let (_, entry) = cat.entries().next().unwrap();
        assert_eq!(entry.frequency(), 3);
        assert_eq!(cat.total_contributions(), 3);
    }

    #[test]
    fn duplicates_within_one_cluster_count_once() {
        let mut cat = ModelCatalog::new();
        cat.register(
            5,
            &[scored_with(&[(1, 0, 2.0)], 1.0), scored_with(&[(1, 0, 2.5)], 0.5)],
        );
        let (_, entry) = cat.entries().next().unwrap();
        assert_eq!(entry.frequency(), 1);
        // The lower-AICc duplicate wins.
        assert_eq!(entry.contributions[0].aicc, 0.5);
    }

    #[test]
    fn frequency_ranking_breaks_ties_by_mean_aicc() {
        let mut cat = ModelCatalog::new();
        // Signature A: frequency 3.
        for anchor in 0..3 {
            cat.register(anchor, &[scored_with(&[(0, 0, 1.0)], 9.0)]);
        }
        // Signatures B and C: frequency 1 each, different mean AICc.
        cat.register(10, &[scored_with(&[(1, 0, 1.0)], 0.5)]);
        cat.register(11, &[scored_with(&[(1, 1, 1.0)], 0.1)]);

        let ranked = cat.rank_by_frequency(10);
        assert_eq!(ranked.len(), 3);
        assert_eq!(ranked[0].1.frequency(), 3);
        assert!(ranked[1].1.mean_aicc() < ranked[2].1.mean_aicc());

        let top1 = cat.rank_by_frequency(1);
        assert_eq!(top1.len(), 1);
    }

    #[test]
    fn registration_order_does_not_matter() {
        let models: Vec<(usize, ScoredModel)> = vec![
            (0, scored_with(&[(0, 0, 1.0)], 1.0)),
            (1, scored_with(&[(1, 0, 1.0)], 2.0)),
            (2, scored_with(&[(0, 0, 1.1)], 3.0)),
            (3, scored_with(&[(1, 1, -1.0)], 4.0)),
        ];
        let mut forward = ModelCatalog::new();
        for (anchor, m) in &models {
            forward.register(*anchor, std::slice::from_ref(m));
        }
        let mut backward = ModelCatalog::new();
        for (anchor, m) in models.iter().rev() {
            backward.register(*anchor, std::slice::from_ref(m));
        }
        let fwd: Vec<(String, usize)> = forward
            .rank_by_frequency(10)
            .iter()
            .map(|(s, e)| (s.to_string(), e.frequency()))
            .collect();
        let bwd: Vec<(String, usize)> = backward
            .rank_by_frequency(10)
            .iter()
            .map(|(s, e)| (s.to_string(), e.frequency()))
            .collect();
        assert_eq!(fwd, bwd);
    }

    #[test]
    fn merge_matches_sequential_registration() {
        let mut whole = ModelCatalog::new();
        whole.register(0, &[scored_with(&[(0, 0, 1.0)], 1.0)]);
        whole.register(1, &[scored_with(&[(0, 0, 1.2)], 2.0)]);

        let mut left = ModelCatalog::new();
        left.register(0, &[scored_with(&[(0, 0, 1.0)], 1.0)]);
        let mut right = ModelCatalog::new();
        right.register(1, &[scored_with(&[(0, 0, 1.2)], 2.0)]);
        left.merge(right);

        assert_eq!(left.total_contributions(), whole.total_contributions());
        assert_eq!(left.len(), whole.len());
    }

    #[test]
    fn representative_is_the_median() {
        let mut cat = ModelCatalog::new();
        for (anchor, c) in [(0, 1.0), (1, 100.0), (2, 1.2)] {
            cat.register(anchor, &[scored_with(&[(1, 0, c)], 1.0)]);
        }
        let (_, entry) = cat.entries().next().unwrap();
        let rep = entry.representative_coefficients().unwrap();
        assert_eq!(rep[(1, 0)], 1.2);
    }

    #[test]
    fn regime_map_covers_every_anchor() {
        let anchors = vec![(0usize, 0.0, vec![1.0]), (1, 0.1, vec![2.0])];
        let retained = vec![vec![scored_with(&[(0, 0, 1.0)], 0.5)], vec![]];
        let map = regime_map(&anchors, &retained);
        assert_eq!(map.len(), 2);
        assert!(map[0].best.is_some());
        assert!(map[1].best.is_none());
    }
}
