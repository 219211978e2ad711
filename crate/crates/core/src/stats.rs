//! Welch's two-sample t-test and the two congruity analyses built on it.

use std::fs::File;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::function::beta::beta_reg;

use crate::congruity::cosine_between;
use crate::data::{SocialGraph, SparseRatings, UserPairMatrix};
use crate::error::{Error, Result};

/// Significance level used by the analyses unless overridden.
pub const DEFAULT_ALPHA: f64 = 0.01;

/// Upper tail `P(T > t)` of Student's t with `df` degrees of freedom.
pub fn student_t_sf(t: f64, df: f64) -> f64 {
    assert!(df > 0.0, "degrees of freedom must be positive");
    if t == 0.0 {
        return 0.5;
    }
    if t.is_infinite() {
        return if t > 0.0 { 0.0 } else { 1.0 };
    }
    let tail = 0.5 * beta_reg(df / 2.0, 0.5, df / (df + t * t));
    if t > 0.0 {
        tail
    } else {
        1.0 - tail
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tail {
    /// H1: mean(a) > mean(b).
    OneSidedGreater,
    TwoSided,
}

impl Tail {
    pub fn name(self) -> &'static str {
        match self {
            Tail::OneSidedGreater => "one-sided-greater",
            Tail::TwoSided => "two-sided",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TTestResult {
    pub t_statistic: f64,
    pub degrees_of_freedom: f64,
    pub p_value: f64,
    pub tail: Tail,
    pub n_a: usize,
    pub n_b: usize,
}

impl TTestResult {
    pub fn rejects(&self, alpha: f64) -> bool {
        self.p_value < alpha
    }
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Welch's unequal-variance t-test with Welch–Satterthwaite degrees of freedom.
///
/// When both samples are constant but their means differ the statistic is
/// infinite and `df` falls back to `n_a + n_b - 2`.
pub fn welch_t_test(a: &[f64], b: &[f64], tail: Tail) -> Result<TTestResult> {
    let (n_a, n_b) = (a.len(), b.len());
    if n_a < 2 || n_b < 2 {
        return Err(Error::SampleTooSmall { n_a, n_b });
    }
    if a.iter().chain(b).any(|x| !x.is_finite()) {
        return Err(Error::InsufficientData("samples contain non-finite values".into()));
    }
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let (sa, sb) = (va / n_a as f64, vb / n_b as f64);
    let se2 = sa + sb;
    let (t, df) = if se2 == 0.0 {
        if ma == mb {
            return Err(Error::DegenerateSample);
        }
        let t = if ma > mb { f64::INFINITY } else { f64::NEG_INFINITY };
        (t, (n_a + n_b - 2) as f64)
    } else {
        let t = (ma - mb) / se2.sqrt();
        let df = se2 * se2 / (sa * sa / (n_a - 1) as f64 + sb * sb / (n_b - 1) as f64);
        (t, df)
    };
    let p_value = match tail {
        Tail::OneSidedGreater => student_t_sf(t, df),
        Tail::TwoSided => (2.0 * student_t_sf(t.abs(), df)).min(1.0),
    };
    Ok(TTestResult {
        t_statistic: t,
        degrees_of_freedom: df,
        p_value,
        tail,
        n_a,
        n_b,
    })
}

#[derive(Debug, Clone)]
pub struct FriendCongruence {
    pub result: TTestResult,
    pub c_min: Vec<f64>,
    pub c_max: Vec<f64>,
}

/// Are all friends congruent? Compares each user's minimum and maximum
/// congruity over their friends (absent pairs count as zero), two-sided.
pub fn friend_congruence_test(congruity: &UserPairMatrix, graph: &SocialGraph) -> Result<FriendCongruence> {
    if congruity.n_users() != graph.n_users() {
        return Err(Error::Config("congruity and graph cover different user sets".into()));
    }
    let mut c_min = Vec::new();
    let mut c_max = Vec::new();
    for u in 0..graph.n_users() {
        let friends = graph.friends(u);
        if friends.is_empty() {
            continue;
        }
        let values = friends.iter().map(|&f| congruity.get(u, f));
        let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), c| (lo.min(c), hi.max(c)));
        c_min.push(lo);
        c_max.push(hi);
    }
    if c_min.is_empty() {
        return Err(Error::InsufficientData("no user has a friend".into()));
    }
    let result = welch_t_test(&c_min, &c_max, Tail::TwoSided)?;
    Ok(FriendCongruence { result, c_min, c_max })
}

#[derive(Debug, Clone)]
pub struct PreferenceTest {
    pub result: TTestResult,
    /// Rating similarity of each congruent pair.
    pub c_p: Vec<f64>,
    /// Rating similarity of the anchor user with a sampled incongruent user.
    pub c_r: Vec<f64>,
}

/// Do congruent users share preferences more than incongruent ones?
///
/// For every unordered pair `i < j` with `C_ij > 0` (ascending order), one user
/// `k != i` with `C_ik <= 0` is drawn uniformly. Pair number `p` draws from a
/// ChaCha8 generator seeded with `seed` on stream `p`, so any pair can be
/// evaluated independently. The test is one-sided (`c_p > c_r`).
pub fn congruity_preference_test(
    congruity: &UserPairMatrix,
    ratings: &SparseRatings,
    seed: u64,
) -> Result<PreferenceTest> {
    let n = congruity.n_users();
    if ratings.n_users() != n {
        return Err(Error::Config("congruity and ratings cover different user sets".into()));
    }
    let positive_degree: Vec<usize> = (0..n)
        .map(|i| congruity.row(i).iter().filter(|&&(_, c)| c > 0.0).count())
        .collect();
    let pairs: Vec<(usize, usize)> = congruity
        .iter()
        .filter(|&(i, j, c)| i < j && c > 0.0)
        .map(|(i, j, _)| (i, j))
        .collect();
    if pairs.is_empty() {
        return Err(Error::InsufficientData("no pair has positive congruity".into()));
    }
    let mut c_p = Vec::with_capacity(pairs.len());
    let mut c_r = Vec::with_capacity(pairs.len());
    for (p, &(i, j)) in pairs.iter().enumerate() {
        if n - 1 - positive_degree[i] == 0 {
            return Err(Error::InsufficientData(format!("user {i} has no incongruent user")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(p as u64);
        let k = loop {
            let k = rng.random_range(0..n);
            if k != i && congruity.get(i, k) <= 0.0 {
                break k;
            }
        };
        c_p.push(cosine_between(ratings, i, j));
        c_r.push(cosine_between(ratings, i, k));
    }
    let result = welch_t_test(&c_p, &c_r, Tail::OneSidedGreater)?;
    Ok(PreferenceTest { result, c_p, c_r })
}

#[derive(Debug, Clone)]
pub struct AnalysisRow {
    pub test_name: String,
    /// `None` when the test could not be carried out (e.g. degenerate samples).
    pub result: Option<TTestResult>,
    pub alpha: f64,
}

/// Writes `test_name,t,df,p,n_a,n_b,alpha,rejected`; tests that could not be
/// run get `NA` fields and `rejected = false`.
pub fn write_analysis_report(rows: &[AnalysisRow], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(["test_name", "t", "df", "p", "n_a", "n_b", "alpha", "rejected"])?;
    for row in rows {
        let fields = match &row.result {
            Some(r) => [
                r.t_statistic.to_string(),
                r.degrees_of_freedom.to_string(),
                r.p_value.to_string(),
                r.n_a.to_string(),
                r.n_b.to_string(),
                r.rejects(row.alpha).to_string(),
            ],
            None => ["NA", "NA", "NA", "NA", "NA", "false"].map(String::from),
        };
        let [t, df, p, na, nb, rejected] = fields;
        w.write_record([row.test_name.clone(), t, df, p, na, nb, row.alpha.to_string(), rejected])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
