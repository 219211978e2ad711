use std::fs::File;
use std::path::Path;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::data::{SparseRatings, UserPairMatrix};
use crate::error::{Error, Result};

use super::{gradient, objective, FactorModel, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceEntry {
    pub iter: usize,
    pub objective: f64,
    /// `(J_{t-1} - J_t) / |J_{t-1}|`; zero for the initial row.
    pub delta_rel: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Converged,
    MaxIters,
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub model: FactorModel,
    /// Row 0 is the objective at initialization.
    pub trace: Vec<TraceEntry>,
    pub stop: StopReason,
}

fn init_model(n_users: usize, n_items: usize, config: &TrainConfig) -> FactorModel {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = FactorModel::zeros(n_users, n_items, config.d);
    if config.init_scale > 0.0 {
        let normal = Normal::new(0.0, config.init_scale).expect("validated scale");
        for x in model.users.iter_mut().chain(model.items.iter_mut()) {
            *x = normal.sample(&mut rng);
        }
    }
    model
}

fn step(target: &mut Array2<f64>, grad: &Array2<f64>, lr: f64) {
    target.zip_mut_with(grad, |x, g| *x -= lr * g);
}

/// Full-batch gradient descent with a fixed step.
///
/// Factors start from `N(0, init_scale^2)` drawn in row-major order (users
/// first) from a ChaCha8 stream seeded with `config.seed`.
pub fn train(ratings: &SparseRatings, closeness: &UserPairMatrix, config: &TrainConfig) -> Result<TrainOutput> {
    config.validate()?;
    if closeness.n_users() != ratings.n_users() {
        return Err(Error::Config(format!(
            "closeness matrix has {} users but ratings have {}",
            closeness.n_users(),
            ratings.n_users()
        )));
    }
    let mut model = init_model(ratings.n_users(), ratings.n_items(), config);
    let mut prev = objective(&model, ratings, closeness, config.lambda, config.gamma);
    let mut trace = vec![TraceEntry {
        iter: 0,
        objective: prev,
        delta_rel: 0.0,
    }];
    let mut stop = StopReason::MaxIters;
    for iter in 1..=config.max_iters {
        let (du, dv) = gradient(&model, ratings, closeness, config.lambda, config.gamma, config.gradient_mode);
        step(&mut model.users, &du, config.learning_rate);
        step(&mut model.items, &dv, config.learning_rate);
        let current = objective(&model, ratings, closeness, config.lambda, config.gamma);
        if !model.is_finite() || !current.is_finite() {
            return Err(Error::Divergence { iteration: iter });
        }
        let delta_rel = (prev - current) / prev.abs().max(f64::MIN_POSITIVE);
        trace.push(TraceEntry {
            iter,
            objective: current,
            delta_rel,
        });
        prev = current;
        // an increase is not convergence; keep going and let divergence surface
        if (0.0..config.tol).contains(&delta_rel) {
            stop = StopReason::Converged;
            break;
        }
    }
    Ok(TrainOutput { model, trace, stop })
}

/// Writes `iter,objective,delta_rel`.
pub fn write_trace(trace: &[TraceEntry], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(["iter", "objective", "delta_rel"])?;
    for t in trace {
        w.write_record([t.iter.to_string(), t.objective.to_string(), t.delta_rel.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
