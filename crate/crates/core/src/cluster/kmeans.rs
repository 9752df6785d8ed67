//! Lloyd k-means over externally supplied word embeddings.
//!
//! Seeding protocol (pinned so an independent implementation can reproduce
//! runs bit for bit): a ChaCha8 generator seeded from the given value
//! picks the first center uniformly with `random_range(0..n)`; each further
//! center is drawn by scanning the cumulative minimum-squared-distance
//! weights against `random::<f64>() * total`. Points tie to the
//! lowest-index centroid, and an emptied cluster is re-seeded with the
//! point farthest from its assigned centroid among clusters that can spare
//! one.

use std::collections::HashMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cluster::{ClassId, ClassMap};
use crate::corpus::{TokenId, Vocabulary};
use crate::error::{Error, Result};

/// Word-id indexed embedding vectors of a fixed dimension.
#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    dim: usize,
    vectors: Vec<Vec<f64>>,
}

impl EmbeddingTable {
    pub fn new(dim: usize, vectors: Vec<Vec<f64>>) -> Result<Self> {
        for (i, v) in vectors.iter().enumerate() {
            if v.len() != dim {
                return Err(Error::argument(format!(
                    "vector {i} has dimension {} (expected {dim})",
                    v.len()
                )));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::argument(format!("vector {i} has non-finite entries")));
            }
        }
        Ok(EmbeddingTable { dim, vectors })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn vector(&self, word: TokenId) -> &[f64] {
        &self.vectors[word as usize]
    }

    /// Reads the standard text embedding format: `word` followed by `d`
    /// ASCII floats per line. Every regular vocabulary word must appear.
    pub fn load(path: &Path, vocab: &Vocabulary) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut by_word: HashMap<TokenId, Vec<f64>> = HashMap::new();
        let mut dim = None;
        for (lineno, line) in text.lines().enumerate() {
            let mut parts = line.split_ascii_whitespace();
            let Some(word) = parts.next() else { continue };
            // skip the word2vec-style "count dim" header if present
            if lineno == 0 && word.parse::<usize>().is_ok() {
                let rest: Vec<&str> = parts.collect();
                if rest.len() == 1 && rest[0].parse::<usize>().is_ok() {
                    continue;
                }
                return Err(Error::parse(1, "unrecognized embedding header"));
            }
            let vector: Vec<f64> = parts
                .map(|s| {
                    s.parse::<f64>()
                        .map_err(|_| Error::parse(lineno + 1, format!("bad float: {s}")))
                })
                .collect::<Result<_>>()?;
            match dim {
                None => dim = Some(vector.len()),
                Some(d) if d != vector.len() => {
                    return Err(Error::parse(
                        lineno + 1,
                        format!("dimension {} does not match {d}", vector.len()),
                    ))
                }
                _ => {}
            }
            if let Some(id) = vocab.id(word) {
                by_word.insert(id, vector);
            }
        }
        let dim = dim.ok_or_else(|| Error::validation("embedding file is empty"))?;
        let mut missing = Vec::new();
        let mut vectors = Vec::with_capacity(vocab.num_regular());
        for word in 0..vocab.num_regular() {
            match by_word.remove(&(word as TokenId)) {
                Some(v) => vectors.push(v),
                None => missing.push(vocab.token(word as TokenId).to_string()),
            }
        }
        if !missing.is_empty() {
            return Err(Error::validation(format!(
                "no embedding for: {}",
                missing.join(" ")
            )));
        }
        EmbeddingTable::new(dim, vectors)
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn seed_centers(table: &EmbeddingTable, k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = table.len();
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(k);
    centers.push(table.vectors[rng.random_range(0..n)].clone());
    let mut weights: Vec<f64> = (0..n)
        .map(|i| sq_dist(&table.vectors[i], &centers[0]))
        .collect();
    while centers.len() < k {
        let total: f64 = weights.iter().sum();
        let next = if total > 0.0 {
            let r = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = n - 1;
            for (i, &w) in weights.iter().enumerate() {
                acc += w;
                if acc >= r {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            // all remaining weights zero (duplicate points): uniform draw
            rng.random_range(0..n)
        };
        centers.push(table.vectors[next].clone());
        for (i, w) in weights.iter_mut().enumerate() {
            let d = sq_dist(&table.vectors[i], centers.last().unwrap());
            if d < *w {
                *w = d;
            }
        }
    }
    centers
}

/// Result of a k-means run, before membership probabilities are attached.
#[derive(Debug)]
pub struct KMeansRun {
    pub assignment: Vec<ClassId>,
    pub inertia: f64,
    pub iterations: usize,
}

/// Raw Lloyd iterations over the table; exposed so tests can compare
/// against an oracle without a vocabulary.
pub fn kmeans_run(
    table: &EmbeddingTable,
    k: usize,
    seed: u64,
    max_iterations: usize,
) -> Result<KMeansRun> {
    let n = table.len();
    if k < 1 || k > n {
        return Err(Error::argument(format!(
            "num_classes {k} out of range for {n} points"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = seed_centers(table, k, &mut rng);
    let mut assignment = vec![0 as ClassId; n];
    let mut iterations = 0;
    for _ in 0..max_iterations {
        iterations += 1;
        let mut changed = false;
        for (i, v) in table.vectors.iter().enumerate() {
            let mut best = (f64::INFINITY, 0 as ClassId);
            for (c, center) in centers.iter().enumerate() {
                let d = sq_dist(v, center);
                if d < best.0 {
                    best = (d, c as ClassId);
                }
            }
            if assignment[i] != best.1 {
                assignment[i] = best.1;
                changed = true;
            }
        }
        // re-seed empty clusters with the farthest point of a donor cluster
        let mut sizes = vec![0usize; k];
        for &c in &assignment {
            sizes[c as usize] += 1;
        }
        for c in 0..k {
            if sizes[c] > 0 {
                continue;
            }
            let mut farthest: Option<(f64, usize)> = None;
            for (i, v) in table.vectors.iter().enumerate() {
                if sizes[assignment[i] as usize] < 2 {
                    continue;
                }
                let d = sq_dist(v, &centers[assignment[i] as usize]);
                if farthest.map_or(true, |(fd, _)| d > fd) {
                    farthest = Some((d, i));
                }
            }
            if let Some((_, i)) = farthest {
                sizes[assignment[i] as usize] -= 1;
                assignment[i] = c as ClassId;
                sizes[c] = 1;
                changed = true;
            }
        }
        // recompute means
        let mut sums = vec![vec![0.0; table.dim]; k];
        let mut counts = vec![0usize; k];
        for (i, v) in table.vectors.iter().enumerate() {
            let c = assignment[i] as usize;
            counts[c] += 1;
            for (s, x) in sums[c].iter_mut().zip(v) {
                *s += x;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                for s in sums[c].iter_mut() {
                    *s /= counts[c] as f64;
                }
                centers[c] = sums[c].clone();
            }
        }
        if !changed {
            break;
        }
    }
    let inertia = table
        .vectors
        .iter()
        .enumerate()
        .map(|(i, v)| sq_dist(v, &centers[assignment[i] as usize]))
        .sum();
    Ok(KMeansRun {
        assignment,
        inertia,
        iterations,
    })
}

/// Clusters vocabulary words by their embeddings into `num_classes` word
/// classes; membership probabilities come from the vocabulary counts.
pub fn kmeans_cluster(
    table: &EmbeddingTable,
    vocab: &Vocabulary,
    num_classes: usize,
    seed: u64,
    max_iterations: usize,
) -> Result<ClassMap> {
    if table.len() != vocab.num_regular() {
        return Err(Error::argument(format!(
            "embedding table covers {} words, vocabulary has {}",
            table.len(),
            vocab.num_regular()
        )));
    }
    if num_classes < 2 {
        return Err(Error::argument("num_classes must be >= 2"));
    }
    let run = kmeans_run(table, num_classes, seed, max_iterations)?;
    ClassMap::new(vocab, &run.assignment, num_classes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(points: &[&[f64]]) -> EmbeddingTable {
        EmbeddingTable::new(points[0].len(), points.iter().map(|p| p.to_vec()).collect())
            .unwrap()
    }

    #[test]
    fn separable_clouds_recovered() {
        let pts: Vec<Vec<f64>> = (0..20)
            .map(|i| {
                let base = if i < 10 { 0.0 } else { 100.0 };
                vec![base + (i % 10) as f64 * 0.1, base - (i % 5) as f64 * 0.1]
            })
            .collect();
        let t = EmbeddingTable::new(2, pts).unwrap();
        let run = kmeans_run(&t, 2, 7, 100).unwrap();
        for i in 0..10 {
            assert_eq!(run.assignment[i], run.assignment[0]);
            assert_eq!(run.assignment[10 + i], run.assignment[10]);
        }
        assert_ne!(run.assignment[0], run.assignment[10]);
    }

    #[test]
    fn identical_points_still_produce_k_clusters() {
        let t = table(&[&[1.0, 1.0], &[1.0, 1.0], &[1.0, 1.0], &[1.0, 1.0]]);
        let run = kmeans_run(&t, 2, 3, 50).unwrap();
        let mut sizes = [0usize; 2];
        for &c in &run.assignment {
            sizes[c as usize] += 1;
        }
        assert!(sizes[0] > 0 && sizes[1] > 0, "re-seeding failed: {sizes:?}");
    }

    #[test]
    fn too_many_classes_rejected() {
        let t = table(&[&[0.0], &[1.0]]);
        assert!(kmeans_run(&t, 3, 0, 10).is_err());
    }

    /// Reimplementation oracle following the exact seeding protocol in the
    /// module docs, written without reference to `kmeans_run`'s internals.
    fn oracle_lloyd(t: &EmbeddingTable, k: usize, seed: u64, max_iter: usize) -> (Vec<u32>, f64) {
        let n = t.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d2 = |a: &[f64], b: &[f64]| -> f64 {
            a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
        };
        let first: usize = rng.random_range(0..n);
        let mut centers: Vec<Vec<f64>> = vec![t.vector(first as u32).to_vec()];
        let mut w: Vec<f64> = (0..n)
            .map(|i| d2(t.vector(i as u32), &centers[0]))
            .collect();
        while centers.len() < k {
            let total: f64 = w.iter().sum();
            let idx = if total > 0.0 {
                let r = rng.random::<f64>() * total;
                let mut acc = 0.0;
                let mut chosen = n - 1;
                for (i, &wi) in w.iter().enumerate() {
                    acc += wi;
                    if acc >= r {
                        chosen = i;
                        break;
                    }
                }
                chosen
            } else {
                rng.random_range(0..n)
            };
            centers.push(t.vector(idx as u32).to_vec());
            for i in 0..n {
                let d = d2(t.vector(i as u32), centers.last().unwrap());
                if d < w[i] {
                    w[i] = d;
                }
            }
        }
        let mut assign = vec![0u32; n];
        for _ in 0..max_iter {
            let mut changed = false;
            for i in 0..n {
                let mut best = (f64::INFINITY, 0u32);
                for (c, center) in centers.iter().enumerate() {
                    let d = d2(t.vector(i as u32), center);
                    if d < best.0 {
                        best = (d, c as u32);
                    }
                }
                if assign[i] != best.1 {
                    assign[i] = best.1;
                    changed = true;
                }
            }
            let mut sizes = vec![0usize; k];
            for &c in &assign {
                sizes[c as usize] += 1;
            }
            for c in 0..k {
                if sizes[c] > 0 {
                    continue;
                }
                let mut far: Option<(f64, usize)> = None;
                for i in 0..n {
                    if sizes[assign[i] as usize] < 2 {
                        continue;
                    }
                    let d = d2(t.vector(i as u32), &centers[assign[i] as usize]);
                    if far.map_or(true, |(fd, _)| d > fd) {
                        far = Some((d, i));
                    }
                }
                if let Some((_, i)) = far {
                    sizes[assign[i] as usize] -= 1;
                    assign[i] = c as u32;
                    sizes[c] = 1;
                    changed = true;
                }
            }
            let mut sums = vec![vec![0.0; t.dim()]; k];
            let mut counts = vec![0usize; k];
            for i in 0..n {
                let c = assign[i] as usize;
                counts[c] += 1;
                for (s, x) in sums[c].iter_mut().zip(t.vector(i as u32)) {
                    *s += x;
                }
            }
            for c in 0..k {
                if counts[c] > 0 {
                    for s in sums[c].iter_mut() {
                        *s /= counts[c] as f64;
                    }
                    centers[c] = sums[c].clone();
                }
            }
            if !changed {
                break;
            }
        }
        let inertia = (0..n)
            .map(|i| d2(t.vector(i as u32), &centers[assign[i] as usize]))
            .sum();
        (assign, inertia)
    }

    #[test]
    fn inertia_matches_reference_implementation() {
        // 100 points in 2D, k = 4, fixed seed.
        let mut state = 42u64;
        let mut next = || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        let pts: Vec<Vec<f64>> = (0..100)
            .map(|_| vec![next() * 10.0, next() * 10.0])
            .collect();
        let t = EmbeddingTable::new(2, pts).unwrap();
        let run = kmeans_run(&t, 4, 12345, 200).unwrap();
        let (assign, inertia) = oracle_lloyd(&t, 4, 12345, 200);
        assert_eq!(run.assignment, assign);
        assert!((run.inertia - inertia).abs() < 1e-9);
    }

    #[test]
    fn inertia_non_increasing_over_iterations() {
        let mut state = 9u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        let pts: Vec<Vec<f64>> = (0..50).map(|_| vec![next(), next(), next()]).collect();
        let t = EmbeddingTable::new(3, pts).unwrap();
        let mut last = f64::INFINITY;
        for iters in 1..8 {
            let run = kmeans_run(&t, 3, 99, iters).unwrap();
            assert!(run.inertia <= last + 1e-9, "inertia grew at {iters}");
            last = run.inertia;
        }
    }
}
