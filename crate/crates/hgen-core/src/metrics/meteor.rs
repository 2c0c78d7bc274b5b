//! METEOR with exact-match alignment and the fragmentation penalty.
//!
//! Among all maximum-cardinality unigram matchings the scorer picks one with
//! the fewest chunks (maximal runs of pairs contiguous in both sequences).
//! The search is an exact memoized DFS over candidate positions with a
//! used-reference bitmask; a deterministic greedy alignment bounds the result
//! and serves as fallback if the search budget is ever exhausted.

use std::collections::HashMap;
use std::hash::Hash;

const GAMMA: f64 = 0.5;
const BETA: i32 = 3;
const NODE_BUDGET: usize = 2_000_000;
/// Reference side longer than this skips the exact search (mask width).
const EXACT_LIMIT: usize = 128;

/// METEOR score: harmonic-mean F (recall-weighted 9:1) times one minus the
/// fragmentation penalty gamma * (chunks/matches)^beta. Zero when nothing
/// matches.
pub fn meteor<T: Eq + Hash>(candidate: &[T], reference: &[T]) -> f64 {
    let (matches, chunks) = align(candidate, reference);
    if matches == 0 {
        return 0.0;
    }
    let p = matches as f64 / candidate.len() as f64;
    let r = matches as f64 / reference.len() as f64;
    let penalty = GAMMA * (chunks as f64 / matches as f64).powi(BETA);
    f_mean(p, r) * (1.0 - penalty)
}

pub(crate) fn f_mean(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        10.0 * p * r / (r + 9.0 * p)
    }
}

/// (matches, chunks) of a chunk-minimal maximum matching.
pub(crate) fn align<T: Eq + Hash>(candidate: &[T], reference: &[T]) -> (usize, usize) {
    // intern tokens as dense ids
    let mut ids: HashMap<&T, u32> = HashMap::new();
    let mut intern = |tok| {
        let next = ids.len() as u32;
        *ids.entry(tok).or_insert(next)
    };
    let cand: Vec<u32> = candidate.iter().map(&mut intern).collect();
    let refr: Vec<u32> = reference.iter().map(&mut intern).collect();

    let max_matches = maximum_matches(&cand, &refr);
    if max_matches == 0 {
        return (0, 0);
    }
    let greedy_links = greedy_align_links(&cand, &refr);
    let links = if refr.len() <= EXACT_LIMIT {
        let mut search = Search::new(&cand, &refr, max_matches);
        match search.best_links() {
            Some(exact) => exact.max(greedy_links),
            None => greedy_links,
        }
    } else {
        greedy_links
    };
    (max_matches, max_matches - links)
}

fn type_counts(tokens: &[u32]) -> HashMap<u32, usize> {
    let mut counts = HashMap::new();
    for &t in tokens {
        *counts.entry(t).or_insert(0) += 1;
    }
    counts
}

fn maximum_matches(cand: &[u32], refr: &[u32]) -> usize {
    let c = type_counts(cand);
    let r = type_counts(refr);
    c.iter()
        .map(|(t, &n)| n.min(r.get(t).copied().unwrap_or(0)))
        .sum()
}

/// Deterministic maximum matching: scan the candidate left to right, prefer
/// extending the previous pair's reference run, otherwise take the lowest
/// unused reference position of the same token. Per-type quotas keep the
/// matching at maximum cardinality.
fn greedy_align_links(cand: &[u32], refr: &[u32]) -> usize {
    let ref_counts = type_counts(refr);
    let mut budget: HashMap<u32, usize> = type_counts(cand)
        .into_iter()
        .map(|(t, n)| (t, n.min(ref_counts.get(&t).copied().unwrap_or(0))))
        .collect();
    let mut used = vec![false; refr.len()];
    let mut links = 0usize;
    let mut prev: Option<usize> = None;
    for &tok in cand {
        let has_quota = budget.get(&tok).is_some_and(|&q| q > 0);
        if !has_quota {
            prev = None;
            continue;
        }
        let continuation = prev
            .map(|p| p + 1)
            .filter(|&j| j < refr.len() && !used[j] && refr[j] == tok);
        let slot =
            continuation.or_else(|| (0..refr.len()).find(|&j| !used[j] && refr[j] == tok));
        match slot {
            Some(j) => {
                if prev.is_some_and(|p| p + 1 == j) {
                    links += 1;
                }
                used[j] = true;
                *budget.get_mut(&tok).unwrap() -= 1;
                prev = Some(j);
            }
            None => prev = None,
        }
    }
    links
}

struct Search<'a> {
    cand: &'a [u32],
    refr: &'a [u32],
    max_matches: usize,
    /// per-token reference positions
    positions: HashMap<u32, Vec<usize>>,
    /// suffix type counts of the candidate from index i
    suffix_counts: Vec<HashMap<u32, usize>>,
    ref_counts: HashMap<u32, usize>,
    memo: HashMap<(usize, u128, usize), Option<usize>>,
    nodes: usize,
}

impl<'a> Search<'a> {
    fn new(cand: &'a [u32], refr: &'a [u32], max_matches: usize) -> Self {
        let mut positions: HashMap<u32, Vec<usize>> = HashMap::new();
        for (j, &t) in refr.iter().enumerate() {
            positions.entry(t).or_default().push(j);
        }
        let mut suffix_counts = vec![HashMap::new(); cand.len() + 1];
        for i in (0..cand.len()).rev() {
            let mut counts = suffix_counts[i + 1].clone();
            *counts.entry(cand[i]).or_insert(0) += 1;
            suffix_counts[i] = counts;
        }
        Search {
            cand,
            refr,
            max_matches,
            positions,
            suffix_counts,
            ref_counts: type_counts(refr),
            memo: HashMap::new(),
            nodes: 0,
        }
    }

    /// Maximum adjacency links over all maximum matchings, or None if the
    /// node budget ran out before the proof completed.
    fn best_links(&mut self) -> Option<usize> {
        let mut ref_remaining = self.ref_counts.clone();
        self.dfs(0, 0u128, usize::MAX, &mut ref_remaining)
    }

    fn upper_bound(&self, i: usize, ref_remaining: &HashMap<u32, usize>) -> usize {
        self.suffix_counts[i]
            .iter()
            .map(|(t, &n)| n.min(ref_remaining.get(t).copied().unwrap_or(0)))
            .sum()
    }

    fn dfs(
        &mut self,
        i: usize,
        mask: u128,
        prev: usize,
        ref_remaining: &mut HashMap<u32, usize>,
    ) -> Option<usize> {
        let matched = mask.count_ones() as usize;
        if i == self.cand.len() {
            return if matched == self.max_matches {
                Some(0)
            } else {
                None
            };
        }
        if matched + self.upper_bound(i, ref_remaining) < self.max_matches {
            return None;
        }
        self.nodes += 1;
        if self.nodes > NODE_BUDGET {
            return None;
        }
        let key = (i, mask, prev);
        if let Some(&cached) = self.memo.get(&key) {
            return cached;
        }

        let tok = self.cand[i];
        let mut best: Option<usize> = None;
        let slots: Vec<usize> = self
            .positions
            .get(&tok)
            .map(|v| {
                let mut ordered: Vec<usize> = v
                    .iter()
                    .copied()
                    .filter(|&j| mask & (1u128 << j) == 0)
                    .collect();
                // continuation first gives good incumbents early
                if prev != usize::MAX {
                    ordered.sort_by_key(|&j| (j != prev + 1, j));
                }
                ordered
            })
            .unwrap_or_default();
        for j in slots {
            let gain = usize::from(prev != usize::MAX && j == prev + 1);
            *ref_remaining.get_mut(&self.refr[j]).unwrap() -= 1;
            let sub = self.dfs(i + 1, mask | (1u128 << j), j, ref_remaining);
            *ref_remaining.get_mut(&self.refr[j]).unwrap() += 1;
            if let Some(links) = sub {
                let total = links + gain;
                if best.is_none_or(|b| total > b) {
                    best = Some(total);
                }
            }
        }
        // skipping candidate i is only allowed if a maximum matching remains reachable
        if let Some(links) = self.dfs(i + 1, mask, usize::MAX, ref_remaining) {
            if best.is_none_or(|b| links > b) {
                best = Some(links);
            }
        }
        self.memo.insert(key, best);
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<&str> {
        s.split_whitespace().collect()
    }

    #[test]
    fn identity_four_tokens() {
        let x = toks("w1 w2 w3 w4");
        let score = meteor(&x, &x);
        assert!((score - 0.9921875).abs() < 1e-12);
    }

    #[test]
    fn identity_penalty_formula() {
        for m in 1..=8usize {
            let x: Vec<String> = (0..m).map(|i| format!("t{i}")).collect();
            let expected = 1.0 - 0.5 / (m as f64).powi(3);
            assert!((meteor(&x, &x) - expected).abs() < 1e-12, "m={m}");
        }
    }

    #[test]
    fn zero_matches_is_zero() {
        assert_eq!(meteor(&toks("a b"), &toks("c d")), 0.0);
        assert_eq!(meteor::<&str>(&[], &toks("a")), 0.0);
    }

    #[test]
    fn f_mean_equals_x_when_p_equals_r() {
        for x in [0.1, 0.5, 0.9] {
            assert!((f_mean(x, x) - x).abs() < 1e-12);
        }
    }

    #[test]
    fn fully_scattered_alignment_hits_full_penalty() {
        // every match is its own chunk: 4 chunks of 4 matches
        let (matches, chunks) = align(&toks("a b c d"), &toks("a c b d"));
        assert_eq!((matches, chunks), (4, 4));
        let score = meteor(&toks("a b c d"), &toks("a c b d"));
        assert!((score - 0.5).abs() < 1e-12);
    }

    #[test]
    fn crossing_is_used_when_it_maximizes_matches() {
        let (matches, chunks) = align(&toks("a b"), &toks("b a"));
        assert_eq!((matches, chunks), (2, 2));
    }

    #[test]
    fn duplicates_pick_the_chunk_minimal_assignment() {
        // a a b vs a b a: matching a0->2, a1->0, b->1 keeps "a b" as one chunk
        let (matches, chunks) = align(&toks("a a b"), &toks("a b a"));
        assert_eq!((matches, chunks), (3, 2));
    }

    #[test]
    fn contiguous_run_is_one_chunk() {
        let (matches, chunks) = align(&toks("x p q r y"), &toks("z p q r w"));
        assert_eq!((matches, chunks), (3, 1));
    }

    #[test]
    fn greedy_fallback_matches_exact_on_plain_cases() {
        let cand = toks("the cat sat on the mat");
        let refr = toks("the cat is on the mat");
        let (matches, chunks) = align(&cand, &refr);
        // matches: the x2, cat, on, mat = 5; chunks: "the cat" + "on the mat"
        assert_eq!((matches, chunks), (5, 2));
    }
}
