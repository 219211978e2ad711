//! Interaction tallies, interaction strength, the congruity matrix `C = P - N`,
//! the four-way pair taxonomy and cosine user similarity.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{IdMap, SocialGraph, SparseRatings, UserId, UserPairMatrix};
use crate::error::{Error, Result};
use crate::ingest::HelpfulnessEvent;

/// Which helpfulness scores count as positive or negative interactions.
/// Scores in neither set are neutral and ignored.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Thresholds {
    pub positive: BTreeSet<u8>,
    pub negative: BTreeSet<u8>,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            positive: [4, 5].into(),
            negative: [1, 2].into(),
        }
    }
}

impl Thresholds {
    pub fn new(positive: impl IntoIterator<Item = u8>, negative: impl IntoIterator<Item = u8>) -> Result<Self> {
        let t = Thresholds {
            positive: positive.into_iter().collect(),
            negative: negative.into_iter().collect(),
        };
        if let Some(s) = t.positive.iter().chain(&t.negative).find(|s| !(1..=5).contains(*s)) {
            return Err(Error::Config(format!("helpfulness score {s} is outside 1..=5")));
        }
        if let Some(s) = t.positive.intersection(&t.negative).next() {
            return Err(Error::Config(format!("score {s} is both positive and negative")));
        }
        Ok(t)
    }
}

/// Pooled positive/negative tallies per unordered user pair.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct InteractionCounts {
    n_users: usize,
    pairs: BTreeMap<(UserId, UserId), (u32, u32)>,
}

impl InteractionCounts {
    pub fn n_users(&self) -> usize {
        self.n_users
    }

    /// `(p, n)` for the pair, in either orientation.
    pub fn get(&self, a: UserId, b: UserId) -> (u32, u32) {
        let key = if a < b { (a, b) } else { (b, a) };
        self.pairs.get(&key).copied().unwrap_or((0, 0))
    }

    /// Stored pairs as `((a, b), (p, n))` with `a < b`, ascending.
    pub fn iter(&self) -> impl Iterator<Item = ((UserId, UserId), (u32, u32))> + '_ {
        self.pairs.iter().map(|(&k, &v)| (k, v))
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

pub fn count_interactions(
    n_users: usize,
    events: &[HelpfulnessEvent],
    thresholds: &Thresholds,
) -> Result<InteractionCounts> {
    let mut pairs: BTreeMap<(UserId, UserId), (u32, u32)> = BTreeMap::new();
    for e in events {
        if e.rater >= n_users || e.author >= n_users {
            return Err(Error::IndexOutOfRange {
                what: "user",
                index: e.rater.max(e.author),
                size: n_users,
            });
        }
        if e.rater == e.author {
            return Err(Error::Config(format!("user {} rates their own review", e.rater)));
        }
        let key = (e.rater.min(e.author), e.rater.max(e.author));
        if thresholds.positive.contains(&e.score) {
            pairs.entry(key).or_default().0 += 1;
        } else if thresholds.negative.contains(&e.score) {
            pairs.entry(key).or_default().1 += 1;
        }
    }
    Ok(InteractionCounts { n_users, pairs })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum StrengthKind {
    /// `max(0, 1 - 1/log(x + 1))` for `x >= 1`, `0` at `x = 0`.
    #[default]
    PaperClamped,
    /// `1 - 1/(1 + log(1 + x))`, nonnegative without clamping.
    BoundedAlternative,
}

/// Maps an interaction count to a strength in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StrengthFunction {
    pub kind: StrengthKind,
    /// Logarithm base; natural log by default.
    pub log_base: f64,
}

impl Default for StrengthFunction {
    fn default() -> Self {
        StrengthFunction {
            kind: StrengthKind::PaperClamped,
            log_base: std::f64::consts::E,
        }
    }
}

impl StrengthFunction {
    pub fn new(kind: StrengthKind, log_base: f64) -> Result<Self> {
        if !(log_base.is_finite() && log_base > 1.0) {
            return Err(Error::Config(format!("log base must be > 1, got {log_base}")));
        }
        Ok(StrengthFunction { kind, log_base })
    }

    pub fn eval(&self, x: u32) -> f64 {
        if x == 0 {
            return 0.0;
        }
        let log = (f64::from(x) + 1.0).ln() / self.log_base.ln();
        match self.kind {
            StrengthKind::PaperClamped => (1.0 - 1.0 / log).max(0.0),
            StrengthKind::BoundedAlternative => 1.0 - 1.0 / (1.0 + log),
        }
    }
}

pub fn strength(g: &StrengthFunction, x: u32) -> f64 {
    g.eval(x)
}

/// The positive and negative interaction strength matrices `P` and `N`.
pub fn interaction_strengths(
    counts: &InteractionCounts,
    g: &StrengthFunction,
) -> Result<(UserPairMatrix, UserPairMatrix)> {
    let p = UserPairMatrix::symmetric_from_pairs(
        counts.n_users,
        counts.iter().map(|((a, b), (p, _))| (a, b, g.eval(p))),
    )?;
    let n = UserPairMatrix::symmetric_from_pairs(
        counts.n_users,
        counts.iter().map(|((a, b), (_, n))| (a, b, g.eval(n))),
    )?;
    Ok((p, n))
}

/// `C = P - N`. Pairs whose congruity is exactly zero are not stored.
pub fn build_congruity(counts: &InteractionCounts, g: &StrengthFunction) -> Result<UserPairMatrix> {
    UserPairMatrix::symmetric_from_pairs(
        counts.n_users,
        counts
            .iter()
            .map(|((a, b), (p, n))| (a, b, g.eval(p) - g.eval(n))),
    )
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PairTaxonomy {
    pub friends_congruent: u64,
    pub friends_incongruent: u64,
    pub strangers_congruent: u64,
    pub strangers_incongruent: u64,
}

impl PairTaxonomy {
    pub fn total(&self) -> u64 {
        self.friends_congruent + self.friends_incongruent + self.strangers_congruent + self.strangers_incongruent
    }
}

/// Partitions every unordered user pair by friendship and by `C > 0`.
pub fn pair_taxonomy(congruity: &UserPairMatrix, graph: &SocialGraph) -> Result<PairTaxonomy> {
    let n = congruity.n_users();
    if graph.n_users() != n {
        return Err(Error::Config(format!(
            "congruity has {n} users but the graph has {}",
            graph.n_users()
        )));
    }
    let mut t = PairTaxonomy::default();
    for (a, b) in graph.edges() {
        if congruity.get(a, b) > 0.0 {
            t.friends_congruent += 1;
        } else {
            t.friends_incongruent += 1;
        }
    }
    let congruent_pairs = congruity
        .iter()
        .filter(|&(a, b, c)| a < b && c > 0.0)
        .count() as u64;
    t.strangers_congruent = congruent_pairs - t.friends_congruent;
    let n = n as u64;
    let all = n * n.saturating_sub(1) / 2;
    t.strangers_incongruent = all - t.friends_congruent - t.friends_incongruent - t.strangers_congruent;
    Ok(t)
}

fn row_norms(ratings: &SparseRatings) -> Vec<f64> {
    (0..ratings.n_users())
        .map(|u| {
            ratings
                .user_row(u)
                .iter()
                .map(|r| r.value * r.value)
                .sum::<f64>()
                .sqrt()
        })
        .collect()
}

/// Cosine similarity of two users' full rating vectors.
pub fn cosine_between(ratings: &SparseRatings, a: UserId, b: UserId) -> f64 {
    let (ra, rb) = (ratings.user_row(a), ratings.user_row(b));
    let (mut i, mut j) = (0, 0);
    let mut dot = 0.0;
    while i < ra.len() && j < rb.len() {
        match ra[i].item.cmp(&rb[j].item) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                dot += ra[i].value * rb[j].value;
                i += 1;
                j += 1;
            }
        }
    }
    let norm = |row: &[crate::data::Rating]| row.iter().map(|r| r.value * r.value).sum::<f64>().sqrt();
    let denom = norm(ra) * norm(rb);
    if dot == 0.0 || denom == 0.0 {
        0.0
    } else {
        (dot / denom).min(1.0)
    }
}

/// Cosine user-user similarity over co-rated items, normalized by each
/// user's full rating vector. Pairs without a co-rated item are absent.
pub fn cosine_user_similarity(ratings: &SparseRatings) -> UserPairMatrix {
    let n = ratings.n_users();
    let norms = row_norms(ratings);
    let mut acc = vec![0.0f64; n];
    let mut touched: Vec<UserId> = Vec::new();
    let mut entries = Vec::new();
    for u in 0..n {
        for r in ratings.user_row(u) {
            for other in ratings.item_column(r.item) {
                if other.user == u {
                    continue;
                }
                if acc[other.user] == 0.0 {
                    touched.push(other.user);
                }
                acc[other.user] += r.value * other.value;
            }
        }
        touched.sort_unstable();
        for &w in &touched {
            let denom = norms[u] * norms[w];
            if denom > 0.0 {
                entries.push((u, w, (acc[w] / denom).min(1.0)));
            }
            acc[w] = 0.0;
        }
        touched.clear();
    }
    UserPairMatrix::from_entries(n, entries).expect("entries are unique and finite")
}

/// Writes `user_a,user_b,p,n,c` for every pair with at least one counted interaction.
pub fn write_congruity(
    counts: &InteractionCounts,
    congruity: &UserPairMatrix,
    users: &IdMap,
    path: &Path,
) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(["user_a", "user_b", "p", "n", "c"])?;
    for ((a, b), (p, n)) in counts.iter() {
        w.write_record([
            users.external(a).to_owned(),
            users.external(b).to_owned(),
            p.to_string(),
            n.to_string(),
            congruity.get(a, b).to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(rater: usize, author: usize, score: u8) -> HelpfulnessEvent {
        HelpfulnessEvent { rater, author, score }
    }

    #[test]
    fn counts_pool_both_directions() {
        let c = count_interactions(2, &[ev(0, 1, 5), ev(1, 0, 4), ev(0, 1, 1)], &Thresholds::default()).unwrap();
        assert_eq!(c.get(0, 1), (2, 1));
        assert_eq!(c.get(1, 0), (2, 1));
    }

    #[test]
    fn neutral_and_empty() {
        let c = count_interactions(2, &[ev(0, 1, 3)], &Thresholds::default()).unwrap();
        assert!(c.is_empty());
        let c = count_interactions(2, &[], &Thresholds::default()).unwrap();
        assert!(c.is_empty());
    }

    #[test]
    fn thresholds_validated() {
        assert!(Thresholds::new([4, 5], [1, 2]).is_ok());
        assert!(Thresholds::new([3, 4], [3]).is_err());
        assert!(Thresholds::new([6], [1]).is_err());
    }

    #[test]
    fn strength_values() {
        let g = StrengthFunction::default();
        assert_eq!(g.eval(0), 0.0);
        // 1 - 1/ln 2 < 0, clamped
        assert_eq!(g.eval(1), 0.0);
        assert!((g.eval(10) - 0.5829676085757537).abs() < 1e-12);
        assert!((g.eval(2) - 0.08976077337316268).abs() < 1e-12);
        let alt = StrengthFunction::new(StrengthKind::BoundedAlternative, std::f64::consts::E).unwrap();
        assert_eq!(alt.eval(0), 0.0);
        assert!((alt.eval(1) - (1.0 - 1.0 / (1.0 + 2f64.ln()))).abs() < 1e-15);
        let b10 = StrengthFunction::new(StrengthKind::PaperClamped, 10.0).unwrap();
        assert!((b10.eval(99) - 0.5).abs() < 1e-12);
        assert!(StrengthFunction::new(StrengthKind::PaperClamped, 1.0).is_err());
    }

    #[test]
    fn congruity_examples() {
        let g = StrengthFunction::default();
        let mut events = vec![ev(0, 1, 5); 10];
        events.extend(vec![ev(2, 1, 1); 10]);
        events.extend([ev(0, 2, 4), ev(2, 0, 2)]);
        let counts = count_interactions(3, &events, &Thresholds::default()).unwrap();
        let c = build_congruity(&counts, &g).unwrap();
        assert!((c.get(0, 1) - 0.5829676085757537).abs() < 1e-12);
        assert!((c.get(1, 2) + 0.5829676085757537).abs() < 1e-12);
        // p = n: zero congruity, not stored
        assert_eq!(c.row(0).iter().filter(|(k, _)| *k == 2).count(), 0);
        assert!(c.is_symmetric());
        let (p, n) = interaction_strengths(&counts, &g).unwrap();
        assert!((p.get(1, 0) - c.get(1, 0)).abs() < 1e-15);
        assert!((n.get(2, 1) + c.get(1, 2)).abs() < 1e-15);
    }

    #[test]
    fn taxonomy_small_cases() {
        let g = SocialGraph::from_edges(2, [(0, 1)]).unwrap();
        let c = UserPairMatrix::symmetric_from_pairs(2, [(0, 1, 0.4)]).unwrap();
        let t = pair_taxonomy(&c, &g).unwrap();
        assert_eq!((t.friends_congruent, t.friends_incongruent, t.strangers_congruent, t.strangers_incongruent), (1, 0, 0, 0));

        let t = pair_taxonomy(&UserPairMatrix::empty(3), &SocialGraph::empty(3)).unwrap();
        assert_eq!((t.friends_congruent, t.friends_incongruent, t.strangers_congruent, t.strangers_incongruent), (0, 0, 0, 3));
    }

    #[test]
    fn cosine_examples() {
        // u:(i1=4,i2=2), w:(i1=2,i2=4) -> 16/20 = 0.8
        let r = SparseRatings::new(4, 4, [(0, 0, 4.0), (0, 1, 2.0), (1, 0, 2.0), (1, 1, 4.0), (2, 0, 4.0), (2, 1, 2.0), (3, 2, 5.0), (3, 3, 1.0)]).unwrap();
        let s = cosine_user_similarity(&r);
        assert!((s.get(0, 1) - 0.8).abs() < 1e-12);
        assert!((s.get(0, 2) - 1.0).abs() < 1e-12);
        assert_eq!(s.get(0, 3), 0.0);
        assert!(s.is_symmetric());
        for (a, b, v) in s.iter() {
            assert!((cosine_between(&r, a, b) - v).abs() < 1e-15);
        }
        assert_eq!(cosine_between(&r, 1, 3), 0.0);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn strength_monotone_and_bounded(x in 0u32..1_000_000, y in 0u32..1_000_000) {
                let (lo, hi) = if x <= y { (x, y) } else { (y, x) };
                for g in [StrengthFunction::default(), StrengthFunction::new(StrengthKind::BoundedAlternative, std::f64::consts::E).unwrap()] {
                    prop_assert!(g.eval(lo) <= g.eval(hi));
                    prop_assert!((0.0..=1.0).contains(&g.eval(hi)));
                }
            }

            #[test]
            fn cosine_routes_agree(
                cells in proptest::collection::btree_map((0usize..8, 0usize..6), 1u8..=5, 0..40)
            ) {
                let r = SparseRatings::new(8, 6, cells.iter().map(|(&(u, i), &v)| (u, i, v as f64))).unwrap();
                let s = cosine_user_similarity(&r);
                for a in 0..8 {
                    for b in 0..8 {
                        if a == b { continue; }
                        let direct = cosine_between(&r, a, b);
                        prop_assert!((s.get(a, b) - direct).abs() < 1e-12);
                        prop_assert!((0.0..=1.0).contains(&direct));
                        prop_assert_eq!(s.get(a, b), s.get(b, a));
                    }
                }
            }
        }
    }
}
