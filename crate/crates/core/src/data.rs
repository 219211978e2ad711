//! Shared sparse containers: dense id maps, the rating matrix, the friendship
//! graph and the weighted user-pair matrix used for P, N, C, S and L.
//!
//! Everything here is immutable after construction.

use std::collections::{BTreeSet, HashMap};

use crate::error::{Error, Result};

/// Dense user index in `0..n`.
pub type UserId = usize;
/// Dense item index in `0..m`.
pub type ItemId = usize;

/// Bijection between external string ids and dense indices.
///
/// Dense ids follow the lexicographic order of the external ids so that the
/// same input always yields the same numbering.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IdMap {
    external: Vec<String>,
    dense: HashMap<String, usize>,
}

impl IdMap {
    pub fn from_ids<I, S>(ids: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let sorted: BTreeSet<String> = ids.into_iter().map(|s| s.as_ref().to_owned()).collect();
        let external: Vec<String> = sorted.into_iter().collect();
        let dense = external
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i))
            .collect();
        IdMap { external, dense }
    }

    pub fn len(&self) -> usize {
        self.external.len()
    }

    pub fn is_empty(&self) -> bool {
        self.external.is_empty()
    }

    pub fn dense(&self, external: &str) -> Option<usize> {
        self.dense.get(external).copied()
    }

    pub fn external(&self, dense: usize) -> &str {
        &self.external[dense]
    }

    pub fn externals(&self) -> &[String] {
        &self.external
    }
}

/// One rating record with external ids, as read from a ratings file.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRating {
    pub user: String,
    pub item: String,
    pub rating: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rating {
    pub user: UserId,
    pub item: ItemId,
    pub value: f64,
}

pub const MIN_RATING: f64 = 1.0;
pub const MAX_RATING: f64 = 5.0;

/// User-by-item rating matrix with row and column views.
///
/// `entries` is sorted by `(user, item)`; the item view is an index permutation
/// sorted by `(item, user)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseRatings {
    n_users: usize,
    n_items: usize,
    entries: Vec<Rating>,
    user_ptr: Vec<usize>,
    item_ptr: Vec<usize>,
    item_order: Vec<usize>,
}

impl SparseRatings {
    pub fn new<I>(n_users: usize, n_items: usize, triplets: I) -> Result<Self>
    where
        I: IntoIterator<Item = (UserId, ItemId, f64)>,
    {
        let mut entries = Vec::new();
        for (user, item, value) in triplets {
            if user >= n_users {
                return Err(Error::IndexOutOfRange {
                    what: "user",
                    index: user,
                    size: n_users,
                });
            }
            if item >= n_items {
                return Err(Error::IndexOutOfRange {
                    what: "item",
                    index: item,
                    size: n_items,
                });
            }
            if !(MIN_RATING..=MAX_RATING).contains(&value) {
                return Err(Error::Config(format!(
                    "rating {value} for user {user}, item {item} is outside [1, 5]"
                )));
            }
            entries.push(Rating { user, item, value });
        }
        entries.sort_by_key(|r| (r.user, r.item));
        if let Some(w) = entries
            .windows(2)
            .find(|w| (w[0].user, w[0].item) == (w[1].user, w[1].item))
        {
            return Err(Error::DuplicateRating {
                user: w[0].user.to_string(),
                item: w[0].item.to_string(),
            });
        }
        Ok(Self::from_sorted(n_users, n_items, entries))
    }

    fn from_sorted(n_users: usize, n_items: usize, entries: Vec<Rating>) -> Self {
        let mut user_ptr = vec![0usize; n_users + 1];
        let mut item_ptr = vec![0usize; n_items + 1];
        for r in &entries {
            user_ptr[r.user + 1] += 1;
            item_ptr[r.item + 1] += 1;
        }
        for i in 0..n_users {
            user_ptr[i + 1] += user_ptr[i];
        }
        for j in 0..n_items {
            item_ptr[j + 1] += item_ptr[j];
        }
        let mut item_order: Vec<usize> = (0..entries.len()).collect();
        // stable: users stay ascending within an item
        item_order.sort_by_key(|&e| entries[e].item);
        SparseRatings {
            n_users,
            n_items,
            entries,
            user_ptr,
            item_ptr,
            item_order,
        }
    }

    /// Keeps the entries at the given positions of `entries()`; dimensions are unchanged.
    pub fn select(&self, positions: &[usize]) -> Self {
        let mut picked: Vec<Rating> = positions.iter().map(|&p| self.entries[p]).collect();
        picked.sort_by_key(|r| (r.user, r.item));
        picked.dedup_by_key(|r| (r.user, r.item));
        Self::from_sorted(self.n_users, self.n_items, picked)
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[Rating] {
        &self.entries
    }

    pub fn user_row(&self, user: UserId) -> &[Rating] {
        &self.entries[self.user_ptr[user]..self.user_ptr[user + 1]]
    }

    pub fn item_column(&self, item: ItemId) -> impl Iterator<Item = &Rating> + '_ {
        self.item_order[self.item_ptr[item]..self.item_ptr[item + 1]]
            .iter()
            .map(move |&e| &self.entries[e])
    }

    pub fn user_degree(&self, user: UserId) -> usize {
        self.user_ptr[user + 1] - self.user_ptr[user]
    }

    pub fn item_degree(&self, item: ItemId) -> usize {
        self.item_ptr[item + 1] - self.item_ptr[item]
    }

    pub fn get(&self, user: UserId, item: ItemId) -> Option<f64> {
        let row = self.user_row(user);
        row.binary_search_by_key(&item, |r| r.item)
            .ok()
            .map(|k| row[k].value)
    }
}

/// Assigns dense ids (sorted external order) and builds the rating matrix.
pub fn remap_ids(records: &[RawRating]) -> Result<(IdMap, IdMap, SparseRatings)> {
    let users = IdMap::from_ids(records.iter().map(|r| r.user.as_str()));
    let items = IdMap::from_ids(records.iter().map(|r| r.item.as_str()));
    let mut seen = HashMap::with_capacity(records.len());
    let mut triplets = Vec::with_capacity(records.len());
    for r in records {
        let u = users.dense(&r.user).expect("user id collected above");
        let i = items.dense(&r.item).expect("item id collected above");
        if seen.insert((u, i), ()).is_some() {
            return Err(Error::DuplicateRating {
                user: r.user.clone(),
                item: r.item.clone(),
            });
        }
        triplets.push((u, i, r.rating));
    }
    let ratings = SparseRatings::new(users.len(), items.len(), triplets)?;
    Ok((users, items, ratings))
}

/// Undirected friendship graph without self-loops.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SocialGraph {
    adjacency: Vec<Vec<UserId>>,
    n_edges: usize,
}

impl SocialGraph {
    /// Builds the graph from (possibly repeated, possibly one-directional) pairs.
    pub fn from_edges<I>(n_users: usize, pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (UserId, UserId)>,
    {
        let mut adjacency = vec![Vec::new(); n_users];
        for (a, b) in pairs {
            for x in [a, b] {
                if x >= n_users {
                    return Err(Error::IndexOutOfRange {
                        what: "user",
                        index: x,
                        size: n_users,
                    });
                }
            }
            if a == b {
                return Err(Error::SelfLoop(a.to_string()));
            }
            adjacency[a].push(b);
            adjacency[b].push(a);
        }
        let mut n_edges = 0;
        for row in &mut adjacency {
            row.sort_unstable();
            row.dedup();
            n_edges += row.len();
        }
        Ok(SocialGraph {
            adjacency,
            n_edges: n_edges / 2,
        })
    }

    pub fn empty(n_users: usize) -> Self {
        SocialGraph {
            adjacency: vec![Vec::new(); n_users],
            n_edges: 0,
        }
    }

    pub fn n_users(&self) -> usize {
        self.adjacency.len()
    }

    pub fn n_edges(&self) -> usize {
        self.n_edges
    }

    pub fn friends(&self, user: UserId) -> &[UserId] {
        &self.adjacency[user]
    }

    pub fn degree(&self, user: UserId) -> usize {
        self.adjacency[user].len()
    }

    pub fn are_friends(&self, a: UserId, b: UserId) -> bool {
        self.adjacency[a].binary_search(&b).is_ok()
    }

    /// Each undirected edge once, as `(a, b)` with `a < b`, in ascending order.
    pub fn edges(&self) -> impl Iterator<Item = (UserId, UserId)> + '_ {
        self.adjacency.iter().enumerate().flat_map(|(a, row)| {
            row.iter()
                .copied()
                .filter(move |&b| b > a)
                .map(move |b| (a, b))
        })
    }
}

/// Sparse real-valued matrix over ordered user pairs. Absent means zero and
/// zeros are never stored.
#[derive(Debug, Clone, PartialEq)]
pub struct UserPairMatrix {
    rows: Vec<Vec<(UserId, f64)>>,
}

impl UserPairMatrix {
    pub fn empty(n_users: usize) -> Self {
        UserPairMatrix {
            rows: vec![Vec::new(); n_users],
        }
    }

    /// Builds from ordered `(i, k, value)` entries. Zeros are dropped;
    /// duplicate pairs, self pairs and non-finite values are rejected.
    pub fn from_entries<I>(n_users: usize, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (UserId, UserId, f64)>,
    {
        let mut rows = vec![Vec::new(); n_users];
        for (i, k, v) in entries {
            for x in [i, k] {
                if x >= n_users {
                    return Err(Error::IndexOutOfRange {
                        what: "user",
                        index: x,
                        size: n_users,
                    });
                }
            }
            if i == k {
                return Err(Error::Config(format!("self pair ({i}, {i}) in user-pair matrix")));
            }
            if !v.is_finite() {
                return Err(Error::Config(format!("non-finite value at ({i}, {k})")));
            }
            if v != 0.0 {
                rows[i].push((k, v));
            }
        }
        for (i, row) in rows.iter_mut().enumerate() {
            row.sort_by_key(|&(k, _)| k);
            if let Some(w) = row.windows(2).find(|w| w[0].0 == w[1].0) {
                return Err(Error::Config(format!(
                    "duplicate pair ({i}, {}) in user-pair matrix",
                    w[0].0
                )));
            }
        }
        Ok(UserPairMatrix { rows })
    }

    /// Builds a symmetric matrix from unordered pairs; each pair is stored in both orientations.
    pub fn symmetric_from_pairs<I>(n_users: usize, pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (UserId, UserId, f64)>,
    {
        let both = pairs
            .into_iter()
            .flat_map(|(i, k, v)| [(i, k, v), (k, i, v)])
            .collect::<Vec<_>>();
        Self::from_entries(n_users, both)
    }

    pub fn n_users(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, i: UserId) -> &[(UserId, f64)] {
        &self.rows[i]
    }

    pub fn get(&self, i: UserId, k: UserId) -> f64 {
        let row = &self.rows[i];
        match row.binary_search_by_key(&k, |&(c, _)| c) {
            Ok(p) => row[p].1,
            Err(_) => 0.0,
        }
    }

    /// Number of stored ordered pairs.
    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.iter().all(Vec::is_empty)
    }

    /// All stored entries in row-major order.
    pub fn iter(&self) -> impl Iterator<Item = (UserId, UserId, f64)> + '_ {
        self.rows
            .iter()
            .enumerate()
            .flat_map(|(i, row)| row.iter().map(move |&(k, v)| (i, k, v)))
    }

    pub fn is_symmetric(&self) -> bool {
        self.iter().all(|(i, k, v)| self.get(k, i) == v)
    }

    /// Applies `f` to every stored value, dropping entries that map to zero.
    pub fn map_values(&self, mut f: impl FnMut(UserId, UserId, f64) -> f64) -> Self {
        let rows = self
            .rows
            .iter()
            .enumerate()
            .map(|(i, row)| {
                row.iter()
                    .filter_map(|&(k, v)| {
                        let w = f(i, k, v);
                        (w != 0.0).then_some((k, w))
                    })
                    .collect()
            })
            .collect();
        UserPairMatrix { rows }
    }
}
