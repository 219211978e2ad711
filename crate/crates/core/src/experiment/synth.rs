//! Planted-cluster synthetic datasets in the ingest file formats.
//!
//! Users fall into `d` equally sized clusters and `U*` is the one-hot cluster
//! membership, so user `i` rates item `j` around `V*[c(i), j]`. Entries of `V*`
//! are `3 + rating_spread * N(0, 1)`. Because `U*` is one-hot the rounded,
//! clipped noise-free ratings are still exactly rank `d`.
//!
//! Observation is preference-driven: cell `(i, j)` is rated with probability
//! `2 * density * sigmoid(selection_bias * z)`, where `z` is the standardized
//! `V*[c(i), j]`.
//!
//! Congruity targets follow the cosine of the centered memberships: `+scale`
//! inside a cluster and `-scale / (d - 1)` across clusters. A target `c` is
//! realized as `round(e^(1/(1 - |c|)) - 1)` helpfulness events of matching sign,
//! which the default strength function maps back to roughly `|c|`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{RawRating, MAX_RATING, MIN_RATING};
use crate::error::{Error, Result};
use crate::ingest::{write_dataset, RawDataset, RawHelpfulness};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub n_users: usize,
    pub n_items: usize,
    /// Latent dimension, also the number of clusters.
    pub d: usize,
    /// Mean probability that a given user-item cell is rated.
    pub observation_density: f64,
    /// How strongly users prefer to rate items their cluster likes; 0 gives a
    /// uniform observation mask.
    pub selection_bias: f64,
    /// Fraction of user pairs with helpfulness interactions.
    pub congruity_density: f64,
    /// Fraction of users taking part in helpfulness interactions at all.
    pub congruity_coverage: f64,
    /// Fraction of user pairs that are friends.
    pub friend_density: f64,
    pub noise_sigma: f64,
    /// Magnitude of within-cluster congruity, in (0, 1).
    pub congruity_scale: f64,
    /// Sampling weight of a same-cluster pair relative to a cross-cluster pair.
    pub affinity: f64,
    pub rating_spread: f64,
    /// Assign interacting pairs and congruity signs without regard to clusters.
    pub independent_congruity: bool,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_users: 200,
            n_items: 150,
            d: 5,
            observation_density: 0.1,
            selection_bias: 0.5,
            congruity_density: 0.05,
            congruity_coverage: 1.0,
            friend_density: 0.02,
            noise_sigma: 0.5,
            congruity_scale: 0.6,
            affinity: 10.0,
            rating_spread: 1.2,
            independent_congruity: false,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.n_users < 2 || self.n_items < 1 {
            return bad(format!("need at least 2 users and 1 item, got {} and {}", self.n_users, self.n_items));
        }
        if self.d < 1 || self.d > self.n_users {
            return bad(format!("d must lie in 1..={}, got {}", self.n_users, self.d));
        }
        for (name, v) in [
            ("observation_density", self.observation_density),
            ("congruity_density", self.congruity_density),
            ("friend_density", self.friend_density),
            ("congruity_coverage", self.congruity_coverage),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} must lie in [0, 1], got {v}"));
            }
        }
        if self.observation_density == 0.0 {
            return bad("observation_density must be positive".into());
        }
        if !(self.selection_bias >= 0.0 && self.selection_bias.is_finite()) {
            return bad(format!("selection_bias must be finite and >= 0, got {}", self.selection_bias));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad(format!("noise_sigma must be finite and >= 0, got {}", self.noise_sigma));
        }
        if !(self.congruity_scale > 0.0 && self.congruity_scale < 1.0) {
            return bad(format!("congruity_scale must lie in (0, 1), got {}", self.congruity_scale));
        }
        if !(self.affinity > 0.0 && self.affinity.is_finite()) {
            return bad(format!("affinity must be finite and > 0, got {}", self.affinity));
        }
        if !(self.rating_spread >= 0.0 && self.rating_spread.is_finite()) {
            return bad(format!("rating_spread must be finite and >= 0, got {}", self.rating_spread));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub raw: RawDataset,
    /// Cluster of each user, indexed like the `u{:05}` ids.
    pub clusters: Vec<usize>,
}

pub fn user_id(i: usize) -> String {
    format!("u{i:05}")
}

pub fn item_id(j: usize) -> String {
    format!("i{j:05}")
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

#[derive(PartialEq)]
struct Keyed(f64, usize, usize);

impl Eq for Keyed {}

impl PartialOrd for Keyed {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Keyed {
    // reversed so the heap keeps the largest keys
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then((other.1, other.2).cmp(&(self.1, self.2)))
    }
}

/// Weighted sampling of `count` unordered pairs without replacement
/// (Efraimidis–Spirakis keys), returned in ascending order. Pairs with zero
/// weight are never drawn.
fn sample_pairs(
    n: usize,
    count: usize,
    weight: impl Fn(usize, usize) -> f64,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<(usize, usize)>> {
    if count == 0 {
        return Ok(Vec::new());
    }
    let mut eligible = 0usize;
    let mut heap = BinaryHeap::with_capacity(count + 1);
    for i in 0..n {
        for k in i + 1..n {
            let u: f64 = rng.random();
            if weight(i, k) <= 0.0 {
                continue;
            }
            eligible += 1;
            let key = u.ln() / weight(i, k);
            heap.push(Keyed(key, i, k));
            if heap.len() > count {
                heap.pop();
            }
        }
    }
    if eligible < count {
        return Err(Error::Config(format!("cannot place {count} pairs among {eligible} eligible pairs")));
    }
    let mut pairs: Vec<_> = heap.into_iter().map(|Keyed(_, i, k)| (i, k)).collect();
    pairs.sort_unstable();
    Ok(pairs)
}

fn event_count(c: f64) -> usize {
    ((1.0 / (1.0 - c.abs())).exp() - 1.0).round() as usize
}

pub fn generate_synthetic(config: &SynthConfig) -> Result<SyntheticData> {
    config.validate()?;
    let (n, m, d) = (config.n_users, config.n_items, config.d);

    let mut clusters: Vec<usize> = (0..n).map(|i| i % d).collect();
    clusters.shuffle(&mut stream(config.seed, 0));

    let mut rng = stream(config.seed, 1);
    let z: Vec<f64> = (0..d * m).map(|_| StandardNormal.sample(&mut rng)).collect();
    let item_means: Vec<f64> = z.iter().map(|z| 3.0 + config.rating_spread * z).collect();
    // 2 * sigmoid(b z) averages to 1 over symmetric z, keeping the mean density
    let propensity: Vec<f64> = z
        .iter()
        .map(|z| (config.observation_density * 2.0 / (1.0 + (-config.selection_bias * z).exp())).min(1.0))
        .collect();

    let noise = Normal::new(0.0, config.noise_sigma).expect("validated sigma");
    let mut rng = stream(config.seed, 2);
    let mut ratings = Vec::new();
    for (i, &c) in clusters.iter().enumerate() {
        for j in 0..m {
            if rng.random_bool(propensity[c * m + j]) {
                let x = item_means[c * m + j] + noise.sample(&mut rng);
                ratings.push(RawRating {
                    user: user_id(i),
                    item: item_id(j),
                    rating: x.round().clamp(MIN_RATING, MAX_RATING),
                });
            }
        }
    }

    let total_pairs = n * (n - 1) / 2;
    let affinity = |i: usize, k: usize| if clusters[i] == clusters[k] { config.affinity } else { 1.0 };
    let positive = config.congruity_scale;
    let negative = if d > 1 { -positive / (d - 1) as f64 } else { -positive };

    let mut covered = vec![false; n];
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream(config.seed, 6));
    for &i in &order[..(config.congruity_coverage * n as f64).round() as usize] {
        covered[i] = true;
    }
    let n_interacting = (config.congruity_density * total_pairs as f64).round() as usize;
    let mut rng = stream(config.seed, 3);
    let mut events = Vec::new();
    let interacting = sample_pairs(
        n,
        n_interacting,
        |i, k| match (covered[i] && covered[k], config.independent_congruity) {
            (false, _) => 0.0,
            (true, true) => 1.0,
            (true, false) => affinity(i, k),
        },
        &mut rng,
    )?;
    // share of same-cluster pairs under affinity sampling, used for random signs
    let same: usize = (0..d)
        .map(|c| clusters.iter().filter(|&&x| x == c).count())
        .map(|s: usize| s * s.saturating_sub(1) / 2)
        .sum();
    let same_mass = config.affinity * same as f64;
    let p_positive = same_mass / (same_mass + (total_pairs - same) as f64);
    let mut rng_events = stream(config.seed, 4);
    for (i, k) in interacting {
        let target = if config.independent_congruity {
            if rng_events.random_bool(p_positive) { positive } else { negative }
        } else if clusters[i] == clusters[k] {
            positive
        } else {
            negative
        };
        for _ in 0..event_count(target) {
            let (rater, author) = if rng_events.random_bool(0.5) { (i, k) } else { (k, i) };
            let score = if target > 0.0 {
                rng_events.random_range(4..=5)
            } else {
                rng_events.random_range(1..=2)
            };
            events.push(RawHelpfulness {
                rater: user_id(rater),
                author: user_id(author),
                score,
            });
        }
    }

    let n_friends = (config.friend_density * total_pairs as f64).round() as usize;
    let friendships = sample_pairs(n, n_friends, affinity, &mut stream(config.seed, 5))?
        .into_iter()
        .map(|(a, b)| (user_id(a), user_id(b)))
        .collect();

    Ok(SyntheticData {
        raw: RawDataset {
            ratings,
            friendships,
            helpfulness: events,
        },
        clusters,
    })
}

#[derive(Serialize)]
struct Manifest<'a> {
    config: &'a SynthConfig,
    counts: Counts,
}

#[derive(Serialize)]
struct Counts {
    ratings: usize,
    friendships: usize,
    helpfulness_events: usize,
}

/// Writes `ratings.csv`, `trust.csv`, `helpfulness.csv` and `manifest.toml`.
pub fn write_synthetic(data: &SyntheticData, config: &SynthConfig, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_dataset(&data.raw, dir)?;
    let manifest = Manifest {
        config,
        counts: Counts {
            ratings: data.raw.ratings.len(),
            friendships: data.raw.friendships.len(),
            helpfulness_events: data.raw.helpfulness.len(),
        },
    };
    let text = toml::to_string(&manifest).map_err(|e| Error::Config(e.to_string()))?;
    let path = dir.join("manifest.toml");
    fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::congruity::{build_congruity, count_interactions, StrengthFunction, Thresholds};
    use crate::ingest::preprocess;

    #[test]
    fn defaults_survive_preprocessing() {
        let cfg = SynthConfig::default();
        let data = generate_synthetic(&cfg).unwrap();
        let (ds, _) = preprocess(&data.raw).unwrap();
        assert!(ds.n_users() as f64 > 0.8 * cfg.n_users as f64, "kept {}", ds.n_users());
    }

    #[test]
    fn same_seed_same_data() {
        let cfg = SynthConfig { n_users: 40, n_items: 30, ..Default::default() };
        assert_eq!(generate_synthetic(&cfg).unwrap(), generate_synthetic(&cfg).unwrap());
        let other = generate_synthetic(&SynthConfig { seed: 1, ..cfg.clone() }).unwrap();
        assert_ne!(generate_synthetic(&cfg).unwrap().raw, other.raw);
    }

    #[test]
    fn noise_free_ratings_are_cluster_constant() {
        let cfg = SynthConfig { n_users: 30, n_items: 10, d: 3, observation_density: 1.0, selection_bias: 0.0, noise_sigma: 0.0, ..Default::default() };
        let data = generate_synthetic(&cfg).unwrap();
        assert_eq!(data.raw.ratings.len(), 300);
        for a in 0..30 {
            for b in 0..30 {
                if data.clusters[a] == data.clusters[b] {
                    for j in 0..10 {
                        assert_eq!(data.raw.ratings[a * 10 + j].rating, data.raw.ratings[b * 10 + j].rating);
                    }
                }
            }
        }
    }

    #[test]
    fn congruity_signs_follow_clusters() {
        let cfg = SynthConfig { n_users: 60, n_items: 20, observation_density: 0.4, friend_density: 0.1, ..Default::default() };
        let data = generate_synthetic(&cfg).unwrap();
        let (ds, _) = preprocess(&data.raw).unwrap();
        let counts = count_interactions(ds.n_users(), &ds.events, &Thresholds::default()).unwrap();
        let c = build_congruity(&counts, &StrengthFunction::default()).unwrap();
        assert!(!c.is_empty());
        for (a, b, v) in c.iter() {
            let ca = data.clusters[ds.users.external(a)[1..].parse::<usize>().unwrap()];
            let cb = data.clusters[ds.users.external(b)[1..].parse::<usize>().unwrap()];
            assert_eq!(ca == cb, v > 0.0);
            assert!(v.abs() <= cfg.congruity_scale + 0.05);
        }
    }

    #[test]
    fn zero_congruity_density_emits_no_events() {
        let cfg = SynthConfig { congruity_density: 0.0, n_users: 30, n_items: 20, ..Default::default() };
        assert!(generate_synthetic(&cfg).unwrap().raw.helpfulness.is_empty());
    }

    #[test]
    fn infeasible_parameters_are_rejected() {
        for cfg in [
            SynthConfig { n_users: 0, ..Default::default() },
            SynthConfig { friend_density: 1.5, ..Default::default() },
            SynthConfig { congruity_density: -0.1, ..Default::default() },
            SynthConfig { observation_density: 0.0, ..Default::default() },
            SynthConfig { d: 300, ..Default::default() },
            SynthConfig { congruity_scale: 1.0, ..Default::default() },
            SynthConfig { congruity_coverage: 0.1, congruity_density: 0.5, ..Default::default() },
        ] {
            assert!(matches!(generate_synthetic(&cfg), Err(Error::Config(_))), "{cfg:?}");
        }
    }

    #[test]
    fn files_round_trip_through_ingest() {
        let cfg = SynthConfig { n_users: 50, n_items: 40, ..Default::default() };
        let data = generate_synthetic(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_synthetic(&data, &cfg, dir.path()).unwrap();
        let raw = RawDataset::load(
            &dir.path().join("ratings.csv"),
            &dir.path().join("trust.csv"),
            Some(&dir.path().join("helpfulness.csv")),
        )
        .unwrap();
        assert_eq!(raw, data.raw);
        let manifest = fs::read_to_string(dir.path().join("manifest.toml")).unwrap();
        assert!(manifest.contains("seed = 0"));
    }
}
