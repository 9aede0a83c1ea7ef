//! Brute-force kNN baseline over the external memory.
//!
//! Exact search by squared L2 distance — no approximate index. The
//! retrieved neighbors induce a next-token distribution by a softmax over
//! negative distances scaled by a temperature, which plugs into the same
//! interpolation path as the adapter.

use crate::decoding::AdaptedDist;
use crate::error::{Error, Result};
use crate::memory::ExternalMemory;

#[derive(Debug, Clone, Copy)]
pub struct KnnConfig {
    /// Neighbors to retrieve; values beyond the memory size retrieve all.
    pub k: usize,
    /// Temperature over negative squared distances.
    pub tau: f64,
}

impl Default for KnnConfig {
    fn default() -> Self {
        KnnConfig { k: 16, tau: 1.0 }
    }
}

impl KnnConfig {
    fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        if !(self.tau > 0.0) {
            return Err(Error::Config(format!("tau must be positive, got {}", self.tau)));
        }
        Ok(())
    }
}

/// Exact top-k by squared L2 distance, ascending, ties broken by lower
/// record index. `k` larger than the memory returns every record.
pub fn knn_search(memory: &ExternalMemory, query: &[f64], k: usize) -> Result<Vec<(usize, f64)>> {
    if memory.is_empty() {
        return Err(Error::Input("cannot search an empty memory".into()));
    }
    if query.len() != memory.d as usize {
        return Err(Error::Dimension(format!(
            "query of length {} against a d={} memory",
            query.len(),
            memory.d
        )));
    }
    let mut scored: Vec<(usize, f64)> = memory
        .records
        .iter()
        .enumerate()
        .map(|(i, rec)| {
            let mut dist = 0.0;
            for (c, &q) in query.iter().enumerate() {
                let diff = q - rec.representation[c] as f64;
                dist += diff * diff;
            }
            (i, dist)
        })
        .collect();
    scored.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    scored.truncate(k);
    Ok(scored)
}

/// Next-token distribution over the vocabulary:
/// `P(y) ∝ Σ_{neighbors with target y} exp(-dist / tau)`.
///
/// Computed with a min-distance shift for stability; the shift cancels in
/// the normalization.
pub fn knn_dist(memory: &ExternalMemory, query: &[f64], config: &KnnConfig) -> Result<Vec<f64>> {
    config.validate()?;
    let neighbors = knn_search(memory, query, config.k)?;
    let min_dist = neighbors
        .iter()
        .map(|&(_, d)| d)
        .fold(f64::INFINITY, f64::min);
    let mut scores = vec![0.0; memory.v as usize];
    for &(idx, dist) in &neighbors {
        let target = memory.records[idx].target as usize;
        if target >= scores.len() {
            return Err(Error::Index(format!(
                "record target {target} outside vocabulary of size {}",
                scores.len()
            )));
        }
        scores[target] += (-(dist - min_dist) / config.tau).exp();
    }
    let total: f64 = scores.iter().sum();
    for s in scores.iter_mut() {
        *s /= total;
    }
    Ok(scores)
}

/// Memory + config bundled as an adapted-distribution source for decoding.
pub struct KnnPredictor<'a> {
    pub memory: &'a ExternalMemory,
    pub config: KnnConfig,
}

impl AdaptedDist for KnnPredictor<'_> {
    fn adapted_dist(&self, repr: &[f64]) -> Result<Vec<f64>> {
        knn_dist(self.memory, repr, &self.config)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::memory::{ContextRecord, MemoryMode};
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn memory_from(reprs: Vec<Vec<f32>>, targets: Vec<u32>, v: u32) -> ExternalMemory {
        let d = reprs[0].len() as u32;
        let records = reprs
            .into_iter()
            .zip(targets)
            .enumerate()
            .map(|(i, (representation, target))| ContextRecord {
                representation,
                target,
                sentence_id: i as u32,
                position: 1,
                sentence_len: 1,
            })
            .collect();
        ExternalMemory {
            d,
            v,
            mode: MemoryMode::Teacher,
            records,
        }
    }

    fn random_memory(seed: u64, n: usize, d: usize, v: u32) -> ExternalMemory {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let reprs: Vec<Vec<f32>> = (0..n)
            .map(|_| (0..d).map(|_| rng.gen_range(-1.0f32..1.0)).collect())
            .collect();
        let targets: Vec<u32> = (0..n).map(|_| rng.gen_range(0..v)).collect();
        memory_from(reprs, targets, v)
    }

    #[test]
    fn stored_representation_is_its_own_nearest() {
        let mem = random_memory(1, 50, 8, 10);
        let query = mem.repr_f64(17);
        let hits = knn_search(&mem, &query, 3).unwrap();
        assert_eq!(hits[0].0, 17);
        assert_eq!(hits[0].1, 0.0);
    }

    #[test]
    fn oversized_k_returns_whole_memory_sorted() {
        let mem = random_memory(2, 20, 4, 6);
        let query = vec![0.0; 4];
        let hits = knn_search(&mem, &query, 100).unwrap();
        assert_eq!(hits.len(), 20);
        for w in hits.windows(2) {
            assert!(w[0].1 <= w[1].1);
        }
    }

    #[test]
    fn search_matches_exhaustive_oracle() {
        let mem = random_memory(3, 1000, 6, 12);
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        for _ in 0..10 {
            let query: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
            // independent oracle: compute all distances the slow way and
            // fully sort
            let mut oracle: Vec<(usize, f64)> = (0..mem.len())
                .map(|i| {
                    let r = mem.repr_f64(i);
                    let d: f64 = query
                        .iter()
                        .zip(&r)
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum();
                    (i, d)
                })
                .collect();
            oracle.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
            for &k in &[1usize, 16, 1000] {
                let got = knn_search(&mem, &query, k).unwrap();
                assert_eq!(got.len(), k.min(mem.len()));
                for (g, o) in got.iter().zip(&oracle) {
                    assert_eq!(g.0, o.0);
                    assert_eq!(g.1, o.1);
                }
            }
        }
    }

    #[test]
    fn exact_ties_break_by_lower_index() {
        // two records at the same location
        let mem = memory_from(
            vec![vec![1.0, 0.0], vec![1.0, 0.0], vec![0.0, 0.0]],
            vec![4, 5, 6],
            8,
        );
        let hits = knn_search(&mem, &[1.0, 0.0], 2).unwrap();
        assert_eq!(hits[0].0, 0);
        assert_eq!(hits[1].0, 1);
        assert_eq!(hits[0].1, hits[1].1);
    }

    #[test]
    fn single_record_memory_is_one_hot() {
        let mem = memory_from(vec![vec![0.3, -0.4]], vec![5], 8);
        let dist = knn_dist(&mem, &[10.0, 10.0], &KnnConfig::default()).unwrap();
        assert_eq!(dist[5], 1.0);
        let sum: f64 = dist.iter().sum();
        assert!((sum - 1.0).abs() < 1e-15);
    }

    #[test]
    fn equidistant_neighbors_split_evenly() {
        let mem = memory_from(vec![vec![1.0, 0.0], vec![-1.0, 0.0]], vec![4, 5], 8);
        let dist = knn_dist(&mem, &[0.0, 0.0], &KnnConfig { k: 2, tau: 1.0 }).unwrap();
        assert!((dist[4] - 0.5).abs() < 1e-15);
        assert!((dist[5] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn three_neighbor_case_matches_hand_softmax() {
        let mem = memory_from(
            vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 2.0]],
            vec![4, 5, 6],
            8,
        );
        // distances from the origin query: 0, 1, 4
        let dist = knn_dist(&mem, &[0.0, 0.0], &KnnConfig { k: 3, tau: 1.0 }).unwrap();
        let w = [1.0f64, (-1.0f64).exp(), (-4.0f64).exp()];
        let total: f64 = w.iter().sum();
        assert!((dist[4] - w[0] / total).abs() < 1e-15);
        assert!((dist[5] - w[1] / total).abs() < 1e-15);
        assert!((dist[6] - w[2] / total).abs() < 1e-15);
    }

    #[test]
    fn tiny_tau_converges_to_nearest_one_hot() {
        let mem = random_memory(4, 200, 5, 9);
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        let query: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let dist = knn_dist(&mem, &query, &KnnConfig { k: 16, tau: 1e-6 }).unwrap();
        let nearest = knn_search(&mem, &query, 1).unwrap()[0].0;
        let target = mem.records[nearest].target as usize;
        assert!((dist[target] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn support_is_contained_in_retrieved_targets() {
        let mem = random_memory(5, 300, 5, 20);
        let query = vec![0.1; 5];
        let config = KnnConfig { k: 7, tau: 0.5 };
        let neighbors = knn_search(&mem, &query, config.k).unwrap();
        let dist = knn_dist(&mem, &query, &config).unwrap();
        let targets: std::collections::HashSet<usize> = neighbors
            .iter()
            .map(|&(i, _)| mem.records[i].target as usize)
            .collect();
        for (tok, &p) in dist.iter().enumerate() {
            if p > 0.0 {
                assert!(targets.contains(&tok));
            }
        }
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let mem = random_memory(6, 10, 4, 8);
        assert!(knn_search(&mem, &[0.0; 3], 1).is_err());
    }
}
