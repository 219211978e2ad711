use crate::data::{SocialGraph, UserPairMatrix};
use crate::error::{Error, Result};

use super::Method;

/// The matrices a closeness variant may draw on.
#[derive(Debug, Clone, Copy, Default)]
pub struct ClosenessInputs<'a> {
    pub congruity: Option<&'a UserPairMatrix>,
    pub similarity: Option<&'a UserPairMatrix>,
    pub graph: Option<&'a SocialGraph>,
}

fn require<'a, T>(m: Option<&'a T>, what: &str, method: Method) -> Result<&'a T> {
    m.ok_or_else(|| Error::Config(format!("method {method} requires the {what} matrix")))
}

fn check_size(n_users: usize, got: usize, what: &str) -> Result<()> {
    if got == n_users {
        Ok(())
    } else {
        Err(Error::Config(format!("{what} has {got} users, expected {n_users}")))
    }
}

/// Builds the closeness matrix `L`; the neighbor set `T_i` is its row support.
///
/// * MF: empty.
/// * SMF: `L = S`.
/// * SoReg: `L_ik = S_ik` on friend pairs.
/// * CR: `L = C` (negative entries dropped when `clamp_nonnegative`).
/// * CSRR: `L_ik = delta * G_ik + (1 - delta) * (C_ik + 1) / 2` over friend
///   pairs (when `delta > 0`) and pairs with stored congruity (when `delta < 1`).
pub fn build_closeness(
    method: Method,
    n_users: usize,
    inputs: ClosenessInputs<'_>,
    delta: f64,
    clamp_nonnegative: bool,
) -> Result<UserPairMatrix> {
    if !(0.0..=1.0).contains(&delta) {
        return Err(Error::Config(format!("delta must lie in [0, 1], got {delta}")));
    }
    match method {
        Method::Mf => Ok(UserPairMatrix::empty(n_users)),
        Method::Smf => {
            let s = require(inputs.similarity, "similarity", method)?;
            check_size(n_users, s.n_users(), "similarity")?;
            Ok(s.clone())
        }
        Method::SoReg => {
            let s = require(inputs.similarity, "similarity", method)?;
            let g = require(inputs.graph, "friendship", method)?;
            check_size(n_users, s.n_users(), "similarity")?;
            check_size(n_users, g.n_users(), "friendship graph")?;
            Ok(s.map_values(|i, k, v| if g.are_friends(i, k) { v } else { 0.0 }))
        }
        Method::Cr => {
            let c = require(inputs.congruity, "congruity", method)?;
            check_size(n_users, c.n_users(), "congruity")?;
            Ok(if clamp_nonnegative {
                c.map_values(|_, _, v| v.max(0.0))
            } else {
                c.clone()
            })
        }
        Method::Csrr => {
            let c = require(inputs.congruity, "congruity", method)?;
            let g = require(inputs.graph, "friendship", method)?;
            check_size(n_users, c.n_users(), "congruity")?;
            check_size(n_users, g.n_users(), "friendship graph")?;
            let mut entries = Vec::new();
            for i in 0..n_users {
                let friends = if delta > 0.0 { g.friends(i) } else { &[] };
                let congruent = if delta < 1.0 { c.row(i) } else { &[] };
                // merge the two sorted supports
                let (mut a, mut b) = (0, 0);
                while a < friends.len() || b < congruent.len() {
                    let fa = friends.get(a).copied();
                    let cb = congruent.get(b).map(|&(k, _)| k);
                    let (k, is_friend, cval) = match (fa, cb) {
                        (Some(f), Some(ck)) if f == ck => {
                            a += 1;
                            b += 1;
                            (f, true, congruent[b - 1].1)
                        }
                        (Some(f), Some(ck)) if f < ck => {
                            a += 1;
                            (f, true, c.get(i, f))
                        }
                        (Some(f), None) => {
                            a += 1;
                            (f, true, c.get(i, f))
                        }
                        (_, Some(ck)) => {
                            b += 1;
                            (ck, false, congruent[b - 1].1)
                        }
                        (None, None) => unreachable!(),
                    };
                    let gval = if is_friend { 1.0 } else { 0.0 };
                    entries.push((i, k, delta * gval + (1.0 - delta) * (cval + 1.0) / 2.0));
                }
            }
            UserPairMatrix::from_entries(n_users, entries)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixtures() -> (UserPairMatrix, UserPairMatrix, SocialGraph) {
        let c = UserPairMatrix::symmetric_from_pairs(4, [(0, 1, 0.4), (1, 2, -0.6), (2, 3, -1.0)]).unwrap();
        let s = UserPairMatrix::symmetric_from_pairs(4, [(0, 1, 0.9), (0, 2, 0.3), (2, 3, 0.5)]).unwrap();
        let g = SocialGraph::from_edges(4, [(0, 1), (0, 3), (2, 3)]).unwrap();
        (c, s, g)
    }

    fn all<'a>(c: &'a UserPairMatrix, s: &'a UserPairMatrix, g: &'a SocialGraph) -> ClosenessInputs<'a> {
        ClosenessInputs {
            congruity: Some(c),
            similarity: Some(s),
            graph: Some(g),
        }
    }

    #[test]
    fn csrr_blend() {
        let (c, s, g) = fixtures();
        let l = build_closeness(Method::Csrr, 4, all(&c, &s, &g), 0.3, false).unwrap();
        // friends with C = 0.4: 0.3 + 0.7 * 0.7
        assert!((l.get(0, 1) - 0.79).abs() < 1e-12);
        // friends without congruity: 0.3 + 0.7 * 0.5
        assert!((l.get(0, 3) - 0.65).abs() < 1e-12);
        // congruity only, C = -0.6
        assert!((l.get(1, 2) - 0.7 * 0.2).abs() < 1e-12);
        // friends with C = -1
        assert!((l.get(2, 3) - 0.3).abs() < 1e-12);
        assert!(l.is_symmetric());
        assert!(l.iter().all(|(_, _, v)| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn csrr_delta_one_is_friendship() {
        let (c, s, g) = fixtures();
        let l = build_closeness(Method::Csrr, 4, all(&c, &s, &g), 1.0, false).unwrap();
        let want: Vec<_> = g.edges().flat_map(|(a, b)| [(a, b), (b, a)]).collect();
        let mut got: Vec<_> = l.iter().map(|(a, b, _)| (a, b)).collect();
        got.sort();
        let mut want = want;
        want.sort();
        assert_eq!(got, want);
        assert!(l.iter().all(|(_, _, v)| v == 1.0));
    }

    #[test]
    fn csrr_delta_zero_ignores_friendship() {
        let (c, s, g) = fixtures();
        let l = build_closeness(Method::Csrr, 4, all(&c, &s, &g), 0.0, false).unwrap();
        assert_eq!(l.get(0, 3), 0.0);
        assert!((l.get(0, 1) - 0.7).abs() < 1e-12);
        // C = -1 rescales to 0 and is dropped
        assert_eq!(l.get(2, 3), 0.0);
        assert_eq!(l.nnz(), 4);
    }

    #[test]
    fn cr_soreg_smf_mf() {
        let (c, s, g) = fixtures();
        let cr = build_closeness(Method::Cr, 4, all(&c, &s, &g), 0.3, false).unwrap();
        assert_eq!(cr, c);
        let crc = build_closeness(Method::Cr, 4, all(&c, &s, &g), 0.3, true).unwrap();
        assert_eq!(crc.nnz(), 2);
        let so = build_closeness(Method::SoReg, 4, all(&c, &s, &g), 0.3, false).unwrap();
        assert_eq!(so.get(0, 1), 0.9);
        assert_eq!(so.get(0, 2), 0.0);
        assert_eq!(so.get(3, 2), 0.5);
        assert_eq!(so.nnz(), 4);
        let smf = build_closeness(Method::Smf, 4, all(&c, &s, &g), 0.3, false).unwrap();
        assert_eq!(smf, s);
        assert!(build_closeness(Method::Mf, 4, ClosenessInputs::default(), 0.3, false).unwrap().is_empty());
        let empty = UserPairMatrix::empty(4);
        let cr_empty = build_closeness(Method::Cr, 4, ClosenessInputs { congruity: Some(&empty), ..Default::default() }, 0.3, false).unwrap();
        assert!(cr_empty.is_empty());
    }

    #[test]
    fn missing_inputs_are_config_errors() {
        let (c, s, _) = fixtures();
        for (m, inputs) in [
            (Method::Smf, ClosenessInputs::default()),
            (Method::SoReg, ClosenessInputs { similarity: Some(&s), ..Default::default() }),
            (Method::Cr, ClosenessInputs::default()),
            (Method::Csrr, ClosenessInputs { congruity: Some(&c), ..Default::default() }),
        ] {
            assert!(matches!(build_closeness(m, 4, inputs, 0.3, false), Err(Error::Config(_))));
        }
    }
}
