use ndarray::Array2;

use crate::data::{SparseRatings, UserPairMatrix};

use super::{dot, FactorModel, GradientMode};

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `sum_i sum_{k in T_i} L_ik |U_i - U_k|^2` over every stored ordered pair.
pub fn closeness_penalty(model: &FactorModel, closeness: &UserPairMatrix) -> f64 {
    let d = model.dim();
    let u = model.users.as_slice().expect("standard layout");
    closeness
        .iter()
        .map(|(i, k, l)| l * sq_dist(&u[i * d..(i + 1) * d], &u[k * d..(k + 1) * d]))
        .sum()
}

pub fn objective(
    model: &FactorModel,
    ratings: &SparseRatings,
    closeness: &UserPairMatrix,
    lambda: f64,
    gamma: f64,
) -> f64 {
    let data: f64 = ratings
        .entries()
        .iter()
        .map(|r| {
            let e = r.value - model.score(r.user, r.item);
            e * e
        })
        .sum();
    let frob: f64 = model.users.iter().chain(model.items.iter()).map(|x| x * x).sum();
    let mut j = data + lambda * frob;
    if gamma != 0.0 {
        j += gamma * closeness_penalty(model, closeness);
    }
    j
}

/// Gradient of [`objective`] with respect to `U` and `V`.
///
/// In [`GradientMode::Full`] this is the exact derivative. In
/// [`GradientMode::PaperFaithful`] each ordered pair `(i, k)` only pushes on
/// `U_i`, omitting its effect on `U_k`; for a symmetric `L` that halves the
/// closeness contribution.
pub fn gradient(
    model: &FactorModel,
    ratings: &SparseRatings,
    closeness: &UserPairMatrix,
    lambda: f64,
    gamma: f64,
    mode: GradientMode,
) -> (Array2<f64>, Array2<f64>) {
    let d = model.dim();
    let u = model.users.as_slice().expect("standard layout");
    let v = model.items.as_slice().expect("standard layout");
    let mut du = model.users.mapv(|x| 2.0 * lambda * x);
    let mut dv = model.items.mapv(|x| 2.0 * lambda * x);
    {
        let gu = du.as_slice_mut().expect("standard layout");
        let gv = dv.as_slice_mut().expect("standard layout");
        for r in ratings.entries() {
            let (ui, vj) = (&u[r.user * d..(r.user + 1) * d], &v[r.item * d..(r.item + 1) * d]);
            let scaled = -2.0 * (r.value - dot(ui, vj));
            for f in 0..d {
                gu[r.user * d + f] += scaled * vj[f];
                gv[r.item * d + f] += scaled * ui[f];
            }
        }
        if gamma != 0.0 {
            for (i, k, l) in closeness.iter() {
                let w = 2.0 * gamma * l;
                for f in 0..d {
                    let diff = u[i * d + f] - u[k * d + f];
                    gu[i * d + f] += w * diff;
                    if mode == GradientMode::Full {
                        gu[k * d + f] -= w * diff;
                    }
                }
            }
        }
    }
    (du, dv)
}
