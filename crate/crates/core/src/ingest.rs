//! File loaders and the rating/friendship preprocessing filters.
//!
//! File schemas (UTF-8 CSV with a header row):
//!
//! | file        | header                       |
//! |-------------|------------------------------|
//! | ratings     | `user_id,item_id,rating`     |
//! | trust       | `user_id,friend_id`          |
//! | helpfulness | `rater_id,author_id,score`   |
//! | report      | `external_id,dense_id,n_ratings,n_friends` |

use std::collections::{BTreeSet, HashSet};
use std::fs::File;
use std::path::Path;

use csv::{ReaderBuilder, StringRecord, Trim, WriterBuilder};

use crate::data::{IdMap, RawRating, SocialGraph, SparseRatings, UserId};
use crate::error::{Error, Result};

pub const RATINGS_HEADER: [&str; 3] = ["user_id", "item_id", "rating"];
pub const TRUST_HEADER: [&str; 2] = ["user_id", "friend_id"];
pub const HELPFULNESS_HEADER: [&str; 3] = ["rater_id", "author_id", "score"];
pub const REPORT_HEADER: [&str; 4] = ["external_id", "dense_id", "n_ratings", "n_friends"];

/// Minimum number of ratings a retained user or item must have.
pub const MIN_RATINGS: usize = 3;
/// Minimum number of friends a retained user must have.
pub const MIN_FRIENDS: usize = 1;

/// A helpfulness score with external ids, as read from file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawHelpfulness {
    pub rater: String,
    pub author: String,
    pub score: u8,
}

/// One user rating another user's review, on dense ids.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HelpfulnessEvent {
    pub rater: UserId,
    pub author: UserId,
    pub score: u8,
}

/// Everything loaded from the three input files, still on external ids.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawDataset {
    pub ratings: Vec<RawRating>,
    /// Unordered friend pairs, each stored once as `(a, b)` with `a < b`.
    pub friendships: Vec<(String, String)>,
    pub helpfulness: Vec<RawHelpfulness>,
}

impl RawDataset {
    pub fn load(ratings: &Path, trust: &Path, helpfulness: Option<&Path>) -> Result<Self> {
        Ok(RawDataset {
            ratings: load_ratings(ratings)?,
            friendships: load_social(trust)?,
            helpfulness: match helpfulness {
                Some(p) => load_helpfulness(p)?,
                None => Vec::new(),
            },
        })
    }
}

/// A preprocessed dataset on dense ids.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub users: IdMap,
    pub items: IdMap,
    pub ratings: SparseRatings,
    pub graph: SocialGraph,
    pub events: Vec<HelpfulnessEvent>,
}

impl Dataset {
    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn n_items(&self) -> usize {
        self.items.len()
    }

    /// Converts back to external ids (the inverse of preprocessing on a fixpoint).
    pub fn to_raw(&self) -> RawDataset {
        let ratings = self
            .ratings
            .entries()
            .iter()
            .map(|r| RawRating {
                user: self.users.external(r.user).to_owned(),
                item: self.items.external(r.item).to_owned(),
                rating: r.value,
            })
            .collect();
        let friendships = self
            .graph
            .edges()
            .map(|(a, b)| canonical_pair(self.users.external(a), self.users.external(b)))
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let helpfulness = self
            .events
            .iter()
            .map(|e| RawHelpfulness {
                rater: self.users.external(e.rater).to_owned(),
                author: self.users.external(e.author).to_owned(),
                score: e.score,
            })
            .collect();
        RawDataset {
            ratings,
            friendships,
            helpfulness,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RetainedUser {
    pub external_id: String,
    pub dense_id: usize,
    pub n_ratings: usize,
    pub n_friends: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RetentionReport {
    pub users: Vec<RetainedUser>,
    /// Filtering passes until nothing changed (the last pass removes nothing).
    pub passes: usize,
    pub dropped_users: usize,
    pub dropped_items: usize,
    pub dropped_events: usize,
}

fn canonical_pair(a: &str, b: &str) -> (String, String) {
    if a <= b {
        (a.to_owned(), b.to_owned())
    } else {
        (b.to_owned(), a.to_owned())
    }
}

fn open_reader(path: &Path, header: &[&str]) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = ReaderBuilder::new()
        .has_headers(true)
        .trim(Trim::All)
        .from_reader(file);
    let found = reader.headers().map_err(|e| csv_to_parse(path, e))?.clone();
    if found.iter().ne(header.iter().copied()) {
        return Err(Error::Parse {
            path: path.to_owned(),
            line: 1,
            message: format!(
                "expected header `{}`, found `{}`",
                header.join(","),
                found.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }
    Ok(reader)
}

fn csv_to_parse(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    Error::Parse {
        path: path.to_owned(),
        line,
        message: e.to_string(),
    }
}

fn read_records<T>(
    path: &Path,
    header: &[&str],
    mut parse: impl FnMut(u64, &StringRecord) -> Result<T>,
) -> Result<Vec<T>> {
    let mut reader = open_reader(path, header)?;
    let mut out = Vec::new();
    let mut record = StringRecord::new();
    loop {
        match reader.read_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {
                let line = record.position().map(|p| p.line()).unwrap_or(0);
                out.push(parse(line, &record)?);
            }
            Err(e) => return Err(csv_to_parse(path, e)),
        }
    }
    Ok(out)
}

fn field<'r>(path: &Path, line: u64, record: &'r StringRecord, idx: usize) -> Result<&'r str> {
    match record.get(idx) {
        Some(s) if !s.is_empty() => Ok(s),
        _ => Err(Error::Parse {
            path: path.to_owned(),
            line,
            message: format!("missing field {}", idx + 1),
        }),
    }
}

fn score_field(path: &Path, line: u64, raw: &str, what: &str) -> Result<u8> {
    let value: i64 = raw.parse().map_err(|_| Error::Parse {
        path: path.to_owned(),
        line,
        message: format!("{what} `{raw}` is not an integer"),
    })?;
    if !(1..=5).contains(&value) {
        return Err(Error::Validation {
            path: path.to_owned(),
            line,
            message: format!("{what} {value} is outside 1..=5"),
        });
    }
    Ok(value as u8)
}

pub fn load_ratings(path: &Path) -> Result<Vec<RawRating>> {
    read_records(path, &RATINGS_HEADER, |line, rec| {
        let user = field(path, line, rec, 0)?;
        let item = field(path, line, rec, 1)?;
        let rating = score_field(path, line, field(path, line, rec, 2)?, "rating")?;
        Ok(RawRating {
            user: user.to_owned(),
            item: item.to_owned(),
            rating: f64::from(rating),
        })
    })
}

/// Loads friendship rows; `(a, b)` and `(b, a)` denote the same undirected edge.
/// Returns each edge once as a sorted pair, in ascending order.
pub fn load_social(path: &Path) -> Result<Vec<(String, String)>> {
    let rows = read_records(path, &TRUST_HEADER, |line, rec| {
        let a = field(path, line, rec, 0)?;
        let b = field(path, line, rec, 1)?;
        if a == b {
            return Err(Error::Validation {
                path: path.to_owned(),
                line,
                message: format!("self-loop friendship for user `{a}`"),
            });
        }
        Ok(canonical_pair(a, b))
    })?;
    Ok(rows.into_iter().collect::<BTreeSet<_>>().into_iter().collect())
}

/// Loads helpfulness rows. Repeated rows are kept: each is a separate interaction.
pub fn load_helpfulness(path: &Path) -> Result<Vec<RawHelpfulness>> {
    read_records(path, &HELPFULNESS_HEADER, |line, rec| {
        let rater = field(path, line, rec, 0)?;
        let author = field(path, line, rec, 1)?;
        let score = score_field(path, line, field(path, line, rec, 2)?, "score")?;
        if rater == author {
            return Err(Error::Validation {
                path: path.to_owned(),
                line,
                message: format!("user `{rater}` rates their own review"),
            });
        }
        Ok(RawHelpfulness {
            rater: rater.to_owned(),
            author: author.to_owned(),
            score,
        })
    })
}

/// Drops users with fewer than three ratings or no friends and items with
/// fewer than three ratings, repeating until no entity violates a rule.
///
/// Friendships and helpfulness events touching dropped users are discarded;
/// helpfulness does not take part in the filters. Surviving ids are re-densified
/// in sorted external order.
pub fn preprocess(raw: &RawDataset) -> Result<(Dataset, RetentionReport)> {
    let all_users = IdMap::from_ids(
        raw.ratings
            .iter()
            .map(|r| r.user.as_str())
            .chain(raw.friendships.iter().flat_map(|(a, b)| [a.as_str(), b.as_str()])),
    );
    let all_items = IdMap::from_ids(raw.ratings.iter().map(|r| r.item.as_str()));

    let mut seen = HashSet::with_capacity(raw.ratings.len());
    let mut cells = Vec::with_capacity(raw.ratings.len());
    for r in &raw.ratings {
        let u = all_users.dense(&r.user).expect("collected");
        let i = all_items.dense(&r.item).expect("collected");
        if !seen.insert((u, i)) {
            return Err(Error::DuplicateRating {
                user: r.user.clone(),
                item: r.item.clone(),
            });
        }
        cells.push((u, i, r.rating));
    }
    let mut edges = Vec::with_capacity(raw.friendships.len());
    for (a, b) in &raw.friendships {
        if a == b {
            return Err(Error::SelfLoop(a.clone()));
        }
        edges.push((all_users.dense(a).expect("collected"), all_users.dense(b).expect("collected")));
    }

    let mut user_alive = vec![true; all_users.len()];
    let mut item_alive = vec![true; all_items.len()];
    let mut passes = 0;
    loop {
        passes += 1;
        let mut changed = false;

        let mut user_ratings = vec![0usize; all_users.len()];
        for &(u, i, _) in &cells {
            if user_alive[u] && item_alive[i] {
                user_ratings[u] += 1;
            }
        }
        let mut user_friends = vec![0usize; all_users.len()];
        for &(a, b) in &edges {
            if user_alive[a] && user_alive[b] {
                user_friends[a] += 1;
                user_friends[b] += 1;
            }
        }
        for u in 0..all_users.len() {
            if user_alive[u] && (user_ratings[u] < MIN_RATINGS || user_friends[u] < MIN_FRIENDS) {
                user_alive[u] = false;
                changed = true;
            }
        }

        let mut item_ratings = vec![0usize; all_items.len()];
        for &(u, i, _) in &cells {
            if user_alive[u] && item_alive[i] {
                item_ratings[i] += 1;
            }
        }
        for i in 0..all_items.len() {
            if item_alive[i] && item_ratings[i] < MIN_RATINGS {
                item_alive[i] = false;
                changed = true;
            }
        }

        if !changed {
            break;
        }
    }

    let users = IdMap::from_ids(
        (0..all_users.len())
            .filter(|&u| user_alive[u])
            .map(|u| all_users.external(u)),
    );
    let items = IdMap::from_ids(
        (0..all_items.len())
            .filter(|&i| item_alive[i])
            .map(|i| all_items.external(i)),
    );
    if users.is_empty() || items.is_empty() {
        return Err(Error::EmptyAfterPreprocessing);
    }
    let user_dense = |u: usize| users.dense(all_users.external(u)).expect("retained");
    let item_dense = |i: usize| items.dense(all_items.external(i)).expect("retained");

    let ratings = SparseRatings::new(
        users.len(),
        items.len(),
        cells
            .iter()
            .filter(|&&(u, i, _)| user_alive[u] && item_alive[i])
            .map(|&(u, i, v)| (user_dense(u), item_dense(i), v)),
    )?;
    let graph = SocialGraph::from_edges(
        users.len(),
        edges
            .iter()
            .filter(|&&(a, b)| user_alive[a] && user_alive[b])
            .map(|&(a, b)| (user_dense(a), user_dense(b))),
    )?;
    let events: Vec<HelpfulnessEvent> = raw
        .helpfulness
        .iter()
        .filter_map(|h| {
            let rater = users.dense(&h.rater)?;
            let author = users.dense(&h.author)?;
            Some(HelpfulnessEvent {
                rater,
                author,
                score: h.score,
            })
        })
        .collect();

    let report = RetentionReport {
        users: (0..users.len())
            .map(|u| RetainedUser {
                external_id: users.external(u).to_owned(),
                dense_id: u,
                n_ratings: ratings.user_degree(u),
                n_friends: graph.degree(u),
            })
            .collect(),
        passes,
        dropped_users: all_users.len() - users.len(),
        dropped_items: all_items.len() - items.len(),
        dropped_events: raw.helpfulness.len() - events.len(),
    };
    let dataset = Dataset {
        users,
        items,
        ratings,
        graph,
        events,
    };
    Ok((dataset, report))
}

fn create_writer(path: &Path) -> Result<csv::Writer<File>> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(WriterBuilder::new().from_writer(file))
}

fn finish(mut w: csv::Writer<File>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_ratings(raw: &[RawRating], path: &Path) -> Result<()> {
    let mut w = create_writer(path)?;
    w.write_record(RATINGS_HEADER)?;
    for r in raw {
        w.write_record([r.user.as_str(), r.item.as_str(), &format!("{}", r.rating as i64)])?;
    }
    finish(w, path)
}

pub fn write_social(pairs: &[(String, String)], path: &Path) -> Result<()> {
    let mut w = create_writer(path)?;
    w.write_record(TRUST_HEADER)?;
    for (a, b) in pairs {
        w.write_record([a, b])?;
    }
    finish(w, path)
}

pub fn write_helpfulness(events: &[RawHelpfulness], path: &Path) -> Result<()> {
    let mut w = create_writer(path)?;
    w.write_record(HELPFULNESS_HEADER)?;
    for h in events {
        w.write_record([h.rater.as_str(), h.author.as_str(), &h.score.to_string()])?;
    }
    finish(w, path)
}

pub fn write_report(report: &RetentionReport, path: &Path) -> Result<()> {
    let mut w = create_writer(path)?;
    w.write_record(REPORT_HEADER)?;
    for u in &report.users {
        w.write_record([
            u.external_id.clone(),
            u.dense_id.to_string(),
            u.n_ratings.to_string(),
            u.n_friends.to_string(),
        ])?;
    }
    finish(w, path)
}

/// Writes all three files of a dataset into `dir` as `ratings.csv`, `trust.csv`
/// and `helpfulness.csv`.
pub fn write_dataset(raw: &RawDataset, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_ratings(&raw.ratings, &dir.join("ratings.csv"))?;
    write_social(&raw.friendships, &dir.join("trust.csv"))?;
    write_helpfulness(&raw.helpfulness, &dir.join("helpfulness.csv"))
}
