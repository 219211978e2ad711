use std::fs::File;
use std::path::Path;

use rayon::prelude::*;

use crate::congruity::{build_congruity, count_interactions, cosine_user_similarity, StrengthFunction, Thresholds};
use crate::data::{SocialGraph, SparseRatings, UserPairMatrix};
use crate::error::{Error, Result};
use crate::factorization::{build_closeness, train, ClosenessInputs, FactorModel, Method, TraceEntry, TrainConfig};
use crate::ingest::Dataset;
use crate::stats::{welch_t_test, Tail};

use super::metrics::{evaluate, EvalOptions, Metric, Metrics};
use super::split::{derive_seed, split, SeedPurpose, SplitSpec};

/// Ratings, friendships and congruity of one preprocessed dataset.
#[derive(Debug, Clone)]
pub struct ExperimentInputs {
    pub ratings: SparseRatings,
    pub graph: SocialGraph,
    pub congruity: UserPairMatrix,
}

impl ExperimentInputs {
    pub fn from_dataset(dataset: &Dataset, thresholds: &Thresholds, g: &StrengthFunction) -> Result<Self> {
        let counts = count_interactions(dataset.n_users(), &dataset.events, thresholds)?;
        Ok(ExperimentInputs {
            ratings: dataset.ratings.clone(),
            graph: dataset.graph.clone(),
            congruity: build_congruity(&counts, g)?,
        })
    }
}

/// One named method configuration in a comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct Arm {
    pub name: String,
    pub method: Method,
    /// `seed` is ignored; each run derives its own.
    pub config: TrainConfig,
}

impl Arm {
    pub fn new(method: Method, config: TrainConfig) -> Self {
        Arm {
            name: method.name().to_owned(),
            method,
            config,
        }
    }
}

/// The four ablation variants around a CSRR configuration.
pub fn ablation_arms(config: &TrainConfig, delta: f64) -> Vec<Arm> {
    let with = |name: &str, delta: f64, gamma: f64| Arm {
        name: name.to_owned(),
        method: Method::Csrr,
        config: TrainConfig { delta, gamma, ..config.clone() },
    };
    vec![
        with("csrr", delta, config.gamma),
        with("csrr-s", 0.0, config.gamma),
        with("csrr-c", 1.0, config.gamma),
        with("csrr-cs", delta, 0.0),
    ]
}

#[derive(Debug, Clone, PartialEq)]
pub struct Protocol {
    pub train_fractions: Vec<f64>,
    pub runs: usize,
    pub base_seed: u64,
    pub exclude_cold_start: bool,
}

impl Protocol {
    fn validate(&self) -> Result<()> {
        if self.runs < 2 {
            return Err(Error::Config(format!("at least 2 runs are required, got {}", self.runs)));
        }
        if self.train_fractions.is_empty() {
            return Err(Error::Config("no train fraction given".into()));
        }
        for &x in &self.train_fractions {
            SplitSpec { train_fraction: x, seed: 0 }.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SingleRun {
    /// The arm's configuration with the derived initialization seed filled in.
    pub config: TrainConfig,
    pub model: FactorModel,
    pub trace: Vec<TraceEntry>,
    pub metrics: Metrics,
}

struct Prepared {
    train: SparseRatings,
    test: SparseRatings,
    init_seed: u64,
    similarity: Option<UserPairMatrix>,
}

fn prepare(inputs: &ExperimentInputs, arms: &[Arm], fraction: f64, run: usize, base_seed: u64) -> Result<Prepared> {
    let spec = SplitSpec {
        train_fraction: fraction,
        seed: derive_seed(base_seed, fraction, run, SeedPurpose::Split),
    };
    let (train, test) = split(&inputs.ratings, spec)?;
    // similarity only ever sees training ratings
    let needs_s = arms.iter().any(|a| matches!(a.method, Method::Smf | Method::SoReg));
    let similarity = needs_s.then(|| cosine_user_similarity(&train));
    Ok(Prepared {
        train,
        test,
        init_seed: derive_seed(base_seed, fraction, run, SeedPurpose::Init),
        similarity,
    })
}

fn fit(inputs: &ExperimentInputs, arm: &Arm, prepared: &Prepared, exclude_cold_start: bool) -> Result<SingleRun> {
    let n = inputs.ratings.n_users();
    let closeness = build_closeness(
        arm.method,
        n,
        ClosenessInputs {
            congruity: Some(&inputs.congruity),
            similarity: prepared.similarity.as_ref(),
            graph: Some(&inputs.graph),
        },
        arm.config.delta,
        arm.config.clamp_closeness_nonnegative,
    )?;
    let config = TrainConfig {
        seed: prepared.init_seed,
        ..arm.config.clone()
    };
    let out = train(&prepared.train, &closeness, &config)?;
    let metrics = evaluate(
        &out.model,
        &prepared.train,
        &prepared.test,
        EvalOptions {
            clamp_predictions: config.clamp_predictions,
            exclude_cold_start,
        },
    )?;
    Ok(SingleRun {
        config,
        model: out.model,
        trace: out.trace,
        metrics,
    })
}

/// Trains and evaluates one arm on the split of run `run`, exactly as
/// [`run_comparison`] does, keeping the model and trace.
pub fn run_single(
    inputs: &ExperimentInputs,
    arm: &Arm,
    train_fraction: f64,
    run: usize,
    base_seed: u64,
    exclude_cold_start: bool,
) -> Result<SingleRun> {
    let prepared = prepare(inputs, std::slice::from_ref(arm), train_fraction, run, base_seed)?;
    fit(inputs, arm, &prepared, exclude_cold_start)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub method: String,
    pub train_fraction: f64,
    pub metric: Metric,
    /// `None` when every run failed.
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub runs: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseRow {
    pub method_a: String,
    pub method_b: String,
    pub train_fraction: f64,
    pub metric: Metric,
    /// Two-sided Welch p-value; `None` when the test is undefined.
    pub p_value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSample {
    pub method: String,
    pub train_fraction: f64,
    pub run: usize,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FailedRun {
    pub method: String,
    pub train_fraction: f64,
    pub run: usize,
    pub iteration: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub summary: Vec<SummaryRow>,
    pub pairwise: Vec<PairwiseRow>,
    /// Successful runs in (fraction, run, arm) order.
    pub samples: Vec<RunSample>,
    pub failures: Vec<FailedRun>,
}

impl ComparisonReport {
    pub fn mean(&self, method: &str, train_fraction: f64, metric: Metric) -> Option<f64> {
        self.summary
            .iter()
            .find(|r| r.method == method && r.train_fraction == train_fraction && r.metric == metric)
            .and_then(|r| r.mean)
    }

    pub fn p_value(&self, a: &str, b: &str, train_fraction: f64, metric: Metric) -> Option<f64> {
        self.pairwise
            .iter()
            .find(|r| {
                r.train_fraction == train_fraction
                    && r.metric == metric
                    && ((r.method_a == a && r.method_b == b) || (r.method_a == b && r.method_b == a))
            })
            .and_then(|r| r.p_value)
    }

    /// Per-run values for one method, fraction and metric, in run order.
    pub fn values(&self, method: &str, train_fraction: f64, metric: Metric) -> Vec<f64> {
        self.samples
            .iter()
            .filter(|s| s.method == method && s.train_fraction == train_fraction)
            .map(|s| s.metrics.get(metric))
            .collect()
    }
}

fn mean_std(xs: &[f64]) -> (Option<f64>, Option<f64>) {
    if xs.is_empty() {
        return (None, None);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let std = if xs.len() < 2 {
        0.0
    } else {
        (xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    (Some(mean), Some(std))
}

/// Runs every arm `protocol.runs` times per train fraction.
///
/// Each `(fraction, run)` draws a fresh split; all arms share it and the same
/// initialization seed. Runs execute in parallel on the current rayon pool and
/// are merged in index order, so the report does not depend on scheduling.
/// Diverged runs are listed in `failures` and left out of every aggregate.
pub fn run_comparison(inputs: &ExperimentInputs, arms: &[Arm], protocol: &Protocol) -> Result<ComparisonReport> {
    protocol.validate()?;
    if arms.is_empty() {
        return Err(Error::Config("no method given".into()));
    }
    for (i, a) in arms.iter().enumerate() {
        a.config.validate()?;
        if arms[..i].iter().any(|b| b.name == a.name) {
            return Err(Error::Config(format!("method `{}` listed twice", a.name)));
        }
    }
    let jobs: Vec<(f64, usize)> = protocol
        .train_fractions
        .iter()
        .flat_map(|&x| (0..protocol.runs).map(move |r| (x, r)))
        .collect();
    let results: Vec<Vec<std::result::Result<Metrics, usize>>> = jobs
        .par_iter()
        .map(|&(x, run)| {
            let prepared = prepare(inputs, arms, x, run, protocol.base_seed)?;
            arms.iter()
                .map(|arm| match fit(inputs, arm, &prepared, protocol.exclude_cold_start) {
                    Ok(single) => Ok(Ok(single.metrics)),
                    Err(Error::Divergence { iteration }) => Ok(Err(iteration)),
                    Err(e) => Err(e),
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;

    let mut samples = Vec::new();
    let mut failures = Vec::new();
    for (&(x, run), per_arm) in jobs.iter().zip(&results) {
        for (arm, outcome) in arms.iter().zip(per_arm) {
            match *outcome {
                Ok(metrics) => samples.push(RunSample {
                    method: arm.name.clone(),
                    train_fraction: x,
                    run,
                    metrics,
                }),
                Err(iteration) => failures.push(FailedRun {
                    method: arm.name.clone(),
                    train_fraction: x,
                    run,
                    iteration,
                }),
            }
        }
    }

    let mut report = ComparisonReport {
        summary: Vec::new(),
        pairwise: Vec::new(),
        samples,
        failures,
    };
    for &x in &protocol.train_fractions {
        for metric in Metric::ALL {
            for arm in arms {
                let values = report.values(&arm.name, x, metric);
                let (mean, std) = mean_std(&values);
                report.summary.push(SummaryRow {
                    method: arm.name.clone(),
                    train_fraction: x,
                    metric,
                    mean,
                    std,
                    runs: values.len(),
                });
            }
            for (i, a) in arms.iter().enumerate() {
                for b in &arms[i + 1..] {
                    let va = report.values(&a.name, x, metric);
                    let vb = report.values(&b.name, x, metric);
                    let p_value = welch_t_test(&va, &vb, Tail::TwoSided).ok().map(|r| r.p_value);
                    report.pairwise.push(PairwiseRow {
                        method_a: a.name.clone(),
                        method_b: b.name.clone(),
                        train_fraction: x,
                        metric,
                        p_value,
                    });
                }
            }
        }
    }
    Ok(report)
}

/// CSRR with `delta` against its three ablations, under [`run_comparison`].
pub fn run_ablation(inputs: &ExperimentInputs, config: &TrainConfig, delta: f64, protocol: &Protocol) -> Result<ComparisonReport> {
    if inputs.graph.n_edges() == 0 || inputs.congruity.is_empty() {
        return Err(Error::InsufficientData("ablation needs both friendships and congruity".into()));
    }
    run_comparison(inputs, &ablation_arms(config, delta), protocol)
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| "NA".to_owned(), |v| v.to_string())
}

fn writer(path: &Path) -> Result<csv::Writer<File>> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

/// Writes `method,train_fraction,metric,mean,std,runs`.
pub fn write_summary(report: &ComparisonReport, path: &Path) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["method", "train_fraction", "metric", "mean", "std", "runs"])?;
    for r in &report.summary {
        w.write_record([
            r.method.clone(),
            r.train_fraction.to_string(),
            r.metric.name().to_owned(),
            opt(r.mean),
            opt(r.std),
            r.runs.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes `method_a,method_b,train_fraction,metric,p_value`.
pub fn write_pairwise(report: &ComparisonReport, path: &Path) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["method_a", "method_b", "train_fraction", "metric", "p_value"])?;
    for r in &report.pairwise {
        w.write_record([
            r.method_a.clone(),
            r.method_b.clone(),
            r.train_fraction.to_string(),
            r.metric.name().to_owned(),
            opt(r.p_value),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Long-format per-run values: `method,train_fraction,run,metric,value`.
pub fn write_plot_data(report: &ComparisonReport, path: &Path) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["method", "train_fraction", "run", "metric", "value"])?;
    for s in &report.samples {
        for metric in Metric::ALL {
            w.write_record([
                s.method.clone(),
                s.train_fraction.to_string(),
                s.run.to_string(),
                metric.name().to_owned(),
                s.metrics.get(metric).to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes `method,train_fraction,run,iteration` for diverged runs.
pub fn write_failures(report: &ComparisonReport, path: &Path) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["method", "train_fraction", "run", "iteration"])?;
    for f in &report.failures {
        w.write_record([
            f.method.clone(),
            f.train_fraction.to_string(),
            f.run.to_string(),
            f.iteration.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inputs() -> ExperimentInputs {
        let n = 12;
        let mut cells = Vec::new();
        for u in 0..n {
            for i in 0..8 {
                if (u * 3 + i) % 4 != 0 {
                    cells.push((u, i, ((u % 3) + (i % 2) + 2) as f64));
                }
            }
        }
        let ratings = SparseRatings::new(n, 8, cells).unwrap();
        let graph = SocialGraph::from_edges(n, (0..n).map(|u| (u, (u + 3) % n))).unwrap();
        let congruity = UserPairMatrix::symmetric_from_pairs(n, (0..n).map(|u| (u, (u + 1) % n, if u % 2 == 0 { 0.5 } else { -0.2 }))).unwrap();
        ExperimentInputs { ratings, graph, congruity }
    }

    fn cfg() -> TrainConfig {
        TrainConfig {
            d: 2,
            lambda: 0.1,
            gamma: 0.5,
            learning_rate: 5e-3,
            max_iters: 50,
            ..Default::default()
        }
    }

    fn protocol() -> Protocol {
        Protocol {
            train_fractions: vec![0.8],
            runs: 3,
            base_seed: 5,
            exclude_cold_start: false,
        }
    }

    #[test]
    fn single_method_has_no_pairwise_rows() {
        let report = run_comparison(&inputs(), &[Arm::new(Method::Mf, cfg())], &protocol()).unwrap();
        assert!(report.pairwise.is_empty());
        assert_eq!(report.summary.len(), 2);
        assert!(report.summary.iter().all(|r| r.runs == 3 && r.std.unwrap() >= 0.0));
    }

    #[test]
    fn report_is_deterministic_and_complete() {
        let arms: Vec<Arm> = Method::ALL.iter().map(|&m| Arm::new(m, cfg())).collect();
        let a = run_comparison(&inputs(), &arms, &protocol()).unwrap();
        let b = run_comparison(&inputs(), &arms, &protocol()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.samples.len(), 15);
        assert_eq!(a.pairwise.len(), 2 * 10);
        for s in &a.samples {
            assert!(s.metrics.rmse >= s.metrics.mae);
        }
    }

    #[test]
    fn run_single_matches_comparison_sample() {
        let arms = [Arm::new(Method::Cr, cfg())];
        let report = run_comparison(&inputs(), &arms, &protocol()).unwrap();
        let single = run_single(&inputs(), &arms[0], 0.8, 2, 5, false).unwrap();
        assert_eq!(report.samples[2].metrics, single.metrics);
    }

    #[test]
    fn csrr_cs_equals_mf_bitwise() {
        let arms = ablation_arms(&cfg(), 0.3);
        let cs = arms.iter().find(|a| a.name == "csrr-cs").unwrap();
        let mf = Arm::new(Method::Mf, cfg());
        for run in 0..2 {
            let a = run_single(&inputs(), cs, 0.8, run, 9, false).unwrap();
            let b = run_single(&inputs(), &mf, 0.8, run, 9, false).unwrap();
            assert_eq!(a.trace, b.trace);
            assert_eq!(a.model, b.model);
        }
    }

    #[test]
    fn csrr_s_shares_cr_configuration_but_not_closeness() {
        let base = cfg();
        let arms = ablation_arms(&base, 0.3);
        let s = &arms[1];
        assert_eq!(s.config, TrainConfig { delta: 0.0, ..base.clone() });
        let inp = inputs();
        let l_s = build_closeness(Method::Csrr, 12, ClosenessInputs { congruity: Some(&inp.congruity), graph: Some(&inp.graph), ..Default::default() }, 0.0, false).unwrap();
        let l_cr = build_closeness(Method::Cr, 12, ClosenessInputs { congruity: Some(&inp.congruity), ..Default::default() }, 0.0, false).unwrap();
        // congruity -0.2 becomes 0.4 after rescaling
        assert_eq!(l_cr.get(1, 2), -0.2);
        assert!((l_s.get(1, 2) - 0.4).abs() < 1e-12);
    }

    #[test]
    fn divergence_is_recorded_not_fatal() {
        let arms = [
            Arm::new(Method::Mf, cfg()),
            Arm {
                name: "mf-hot".into(),
                method: Method::Mf,
                config: TrainConfig { learning_rate: 5.0, ..cfg() },
            },
        ];
        let report = run_comparison(&inputs(), &arms, &protocol()).unwrap();
        assert_eq!(report.failures.len(), 3);
        assert!(report.failures.iter().all(|f| f.method == "mf-hot"));
        let hot = report.summary.iter().find(|r| r.method == "mf-hot").unwrap();
        assert_eq!((hot.runs, hot.mean), (0, None));
        assert_eq!(report.pairwise[0].p_value, None);
    }

    #[test]
    fn protocol_errors() {
        let arms = [Arm::new(Method::Mf, cfg())];
        let mut p = protocol();
        p.runs = 1;
        assert!(matches!(run_comparison(&inputs(), &arms, &p), Err(Error::Config(_))));
        let p = Protocol { train_fractions: vec![1.0], ..protocol() };
        assert!(matches!(run_comparison(&inputs(), &arms, &p), Err(Error::InvalidSplit(_))));
        let twice = [Arm::new(Method::Mf, cfg()), Arm::new(Method::Mf, cfg())];
        assert!(run_comparison(&inputs(), &twice, &protocol()).is_err());
    }
}
