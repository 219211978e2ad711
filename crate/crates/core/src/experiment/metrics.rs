use crate::data::SparseRatings;
use crate::error::{Error, Result};
use crate::factorization::FactorModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Metric {
    Rmse,
    Mae,
}

impl Metric {
    pub const ALL: [Metric; 2] = [Metric::Rmse, Metric::Mae];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Rmse => "rmse",
            Metric::Mae => "mae",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub rmse: f64,
    pub mae: f64,
    /// Number of test ratings scored.
    pub n: usize,
}

impl Metrics {
    pub fn get(&self, metric: Metric) -> f64 {
        match metric {
            Metric::Rmse => self.rmse,
            Metric::Mae => self.mae,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EvalOptions {
    pub clamp_predictions: bool,
    /// Skip test ratings whose user or item has no training rating.
    pub exclude_cold_start: bool,
}

/// Metrics over residuals `prediction - truth`.
pub fn from_residuals(residuals: &[f64]) -> Result<Metrics> {
    if residuals.is_empty() {
        return Err(Error::EmptyEvaluation);
    }
    let n = residuals.len() as f64;
    let sq: f64 = residuals.iter().map(|e| e * e).sum();
    let abs: f64 = residuals.iter().map(|e| e.abs()).sum();
    Ok(Metrics {
        rmse: (sq / n).sqrt(),
        mae: abs / n,
        n: residuals.len(),
    })
}

fn residuals(model: &FactorModel, test: &SparseRatings, clamp: bool) -> Result<Vec<f64>> {
    test.entries()
        .iter()
        .map(|r| Ok(model.predict(r.user, r.item, clamp)? - r.value))
        .collect()
}

/// Root mean squared error of unclamped predictions.
pub fn rmse(model: &FactorModel, test: &SparseRatings) -> Result<f64> {
    Ok(from_residuals(&residuals(model, test, false)?)?.rmse)
}

/// Mean absolute error of unclamped predictions.
pub fn mae(model: &FactorModel, test: &SparseRatings) -> Result<f64> {
    Ok(from_residuals(&residuals(model, test, false)?)?.mae)
}

/// RMSE and MAE on `test`, with `train` deciding which entries are cold-start.
pub fn evaluate(model: &FactorModel, train: &SparseRatings, test: &SparseRatings, options: EvalOptions) -> Result<Metrics> {
    let mut res = Vec::with_capacity(test.len());
    for r in test.entries() {
        if options.exclude_cold_start && (train.user_degree(r.user) == 0 || train.item_degree(r.item) == 0) {
            continue;
        }
        res.push(model.predict(r.user, r.item, options.clamp_predictions)? - r.value);
    }
    from_residuals(&res)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn worked_residuals() {
        let m = from_residuals(&[1.0, -1.0]).unwrap();
        assert_eq!((m.rmse, m.mae), (1.0, 1.0));
        let m = from_residuals(&[3.0, 0.0, 0.0]).unwrap();
        assert!((m.rmse - 3f64.sqrt()).abs() < 1e-12);
        assert!((m.mae - 1.0).abs() < 1e-12);
        assert!(matches!(from_residuals(&[]), Err(Error::EmptyEvaluation)));
    }

    #[test]
    fn perfect_model_scores_zero() {
        let model = FactorModel {
            users: array![[1.0, 1.0], [2.0, 0.5]],
            items: array![[2.0, 1.0], [1.0, 2.0]],
        };
        let test = SparseRatings::new(2, 2, [(0, 0, 3.0), (0, 1, 3.0), (1, 0, 4.5), (1, 1, 3.0)]).unwrap();
        assert_eq!(rmse(&model, &test).unwrap(), 0.0);
        assert_eq!(mae(&model, &test).unwrap(), 0.0);
    }

    #[test]
    fn cold_start_exclusion() {
        let model = FactorModel::zeros(3, 2, 1);
        let train = SparseRatings::new(3, 2, [(0, 0, 4.0), (1, 0, 2.0)]).unwrap();
        let test = SparseRatings::new(3, 2, [(0, 0, 4.0), (2, 0, 1.0), (1, 1, 5.0)]).unwrap();
        let all = evaluate(&model, &train, &test, EvalOptions::default()).unwrap();
        assert_eq!(all.n, 3);
        let warm = evaluate(&model, &train, &test, EvalOptions { exclude_cold_start: true, ..Default::default() }).unwrap();
        assert_eq!(warm.n, 1);
        assert_eq!(warm.rmse, 4.0);
        let none = SparseRatings::new(3, 2, [(2, 1, 1.0)]).unwrap();
        assert!(matches!(
            evaluate(&model, &train, &none, EvalOptions { exclude_cold_start: true, ..Default::default() }),
            Err(Error::EmptyEvaluation)
        ));
    }

    #[test]
    fn clamped_predictions() {
        let model = FactorModel { users: array![[3.0]], items: array![[3.0]] };
        let test = SparseRatings::new(1, 1, [(0, 0, 5.0)]).unwrap();
        let raw = evaluate(&model, &test, &test, EvalOptions::default()).unwrap();
        assert_eq!(raw.mae, 4.0);
        let clamped = evaluate(&model, &test, &test, EvalOptions { clamp_predictions: true, ..Default::default() }).unwrap();
        assert_eq!(clamped.mae, 0.0);
    }

    proptest! {
        #[test]
        fn rmse_dominates_mae(res in proptest::collection::vec(-6.0f64..6.0, 1..50)) {
            let m = from_residuals(&res).unwrap();
            prop_assert!(m.mae >= 0.0);
            prop_assert!(m.rmse >= m.mae - 1e-12);
        }
    }
}
