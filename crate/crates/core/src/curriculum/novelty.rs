//! Character n-gram Jaccard similarity and the near-duplicate filter.

use std::collections::hash_map::DefaultHasher;
use std::collections::{BTreeSet, HashMap};
use std::hash::{Hash, Hasher};

use crate::error::{CoreError, Result};
use crate::tasks::Example;

/// Character n-grams of `s` as a set; a string shorter than `n` is its own single gram.
pub fn ngram_set(s: &str, n: usize) -> BTreeSet<String> {
    let chars: Vec<char> = s.chars().collect();
    if chars.len() < n.max(1) {
        return BTreeSet::from([s.to_string()]);
    }
    chars
        .windows(n.max(1))
        .map(|w| w.iter().collect())
        .collect()
}

pub fn ngram_jaccard(a: &str, b: &str, n: usize) -> f64 {
    let (x, y) = (ngram_set(a, n), ngram_set(b, n));
    let inter = x.intersection(&y).count();
    let union = x.len() + y.len() - inter;
    inter as f64 / union as f64
}

fn gram_code(gram: &[char]) -> u64 {
    if gram.len() <= 7 && gram.iter().all(char::is_ascii) {
        let body = gram.iter().fold(0u64, |acc, &c| acc << 8 | c as u64);
        body | (gram.len() as u64) << 56
    } else {
        let mut h = DefaultHasher::new();
        gram.hash(&mut h);
        h.finish() | 1 << 63
    }
}

/// Sorted, deduplicated gram codes of `s`.
fn gram_codes(s: &str, n: usize) -> Vec<u64> {
    let chars: Vec<char> = s.chars().collect();
    let mut codes: Vec<u64> = if chars.len() < n {
        vec![gram_code(&chars)]
    } else {
        chars.windows(n).map(gram_code).collect()
    };
    codes.sort_unstable();
    codes.dedup();
    codes
}

fn overlap(a: &[u64], b: &[u64]) -> usize {
    let (mut i, mut j, mut k) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                k += 1;
                i += 1;
                j += 1;
            }
        }
    }
    k
}

/// Gram sets indexed by prefix so that only plausible near-duplicates are compared exactly.
struct NoveltyIndex {
    n: usize,
    threshold: f64,
    sets: Vec<Vec<u64>>,
    postings: HashMap<u64, Vec<u32>>,
    stamp: Vec<u32>,
    query: u32,
}

impl NoveltyIndex {
    fn new(n: usize, threshold: f64) -> Self {
        Self {
            n,
            threshold,
            sets: Vec::new(),
            postings: HashMap::new(),
            stamp: Vec::new(),
            query: 0,
        }
    }

    /// Any set sharing more than `threshold` of its union with `g` shares a gram within both prefixes.
    fn prefix(&self, size: usize) -> usize {
        let need = (self.threshold * size as f64 - 1e-9).ceil().max(1.0) as usize;
        (size + 1).saturating_sub(need).clamp(1, size)
    }

    fn insert(&mut self, codes: Vec<u64>) {
        let id = self.sets.len() as u32;
        for &g in &codes[..self.prefix(codes.len())] {
            self.postings.entry(g).or_default().push(id);
        }
        self.sets.push(codes);
        self.stamp.push(0);
    }

    fn has_near_duplicate(&mut self, codes: &[u64]) -> bool {
        self.query += 1;
        for &g in &codes[..self.prefix(codes.len())] {
            let Some(ids) = self.postings.get(&g) else {
                continue;
            };
            for &id in ids {
                let id = id as usize;
                if self.stamp[id] == self.query {
                    continue;
                }
                self.stamp[id] = self.query;
                let other = &self.sets[id];
                let inter = overlap(codes, other);
                let union = codes.len() + other.len() - inter;
                if inter as f64 / union as f64 > self.threshold {
                    return true;
                }
            }
        }
        false
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoveltyOutcome {
    pub kept: Vec<Example>,
    pub duplicates: usize,
}

/// Keeps, in order, each candidate whose input is within `threshold` n-gram Jaccard of every
/// existing input and every candidate kept before it.
pub fn filter_novel(
    candidates: &[Example],
    existing: &[Example],
    threshold: f64,
    n: usize,
) -> Result<NoveltyOutcome> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(CoreError::Config(format!(
            "diversity threshold {threshold} outside (0, 1]"
        )));
    }
    if n == 0 {
        return Err(CoreError::Config("n-gram size must be at least 1".into()));
    }
    let mut index = NoveltyIndex::new(n, threshold);
    for ex in existing {
        index.insert(gram_codes(&ex.input, index.n));
    }
    let mut kept = Vec::new();
    let mut duplicates = 0;
    for c in candidates {
        let codes = gram_codes(&c.input, n);
        if index.has_near_duplicate(&codes) {
            duplicates += 1;
        } else {
            index.insert(codes);
            kept.push(c.clone());
        }
    }
    Ok(NoveltyOutcome { kept, duplicates })
}
