//! Command-line front end; `main` only forwards to [`run`].
//!
//! Option values come from flags, then `CONGREC_*` environment variables, then
//! a flat TOML file given with `--config`, then built-in defaults.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::congruity::{
    build_congruity, count_interactions, pair_taxonomy, write_congruity, PairTaxonomy, StrengthFunction,
    StrengthKind, Thresholds,
};
use crate::error::{Error, Result};
use crate::experiment::{
    derive_seed, evaluate, generate_synthetic, run_ablation, run_comparison, run_single, split, write_failures,
    write_pairwise, write_plot_data, write_summary, write_synthetic, Arm, ComparisonReport, EvalOptions,
    ExperimentInputs, Metric, Protocol, SeedPurpose, SplitSpec, SynthConfig,
};
use crate::factorization::{config_hash, load_model, save_model, write_trace, GradientMode, Method, TrainConfig};
use crate::ingest::{preprocess, write_dataset, write_report, Dataset, RawDataset, RetentionReport};
use crate::stats::{congruity_preference_test, friend_congruence_test, write_analysis_report, AnalysisRow, DEFAULT_ALPHA};

#[derive(Debug, Parser)]
#[command(name = "congrec", version, about = "Congruity-regularized matrix factorization toolkit")]
pub struct Cli {
    /// Flat TOML file with option values (keys are the long flag names with `_`).
    #[arg(long, global = true, env = "CONGREC_CONFIG")]
    pub config: Option<PathBuf>,

    /// Print the merged configuration as TOML and exit.
    #[arg(long, global = true)]
    pub print_config: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Apply the rating and friendship filters and write the filtered dataset.
    Preprocess(Options),
    /// Build the congruity matrix from helpfulness scores.
    Congruity(Options),
    /// Pair taxonomy and the two congruity hypothesis tests.
    Analyze(Options),
    /// Train one method on the first split and save the model.
    Train(Options),
    /// Score a saved model on the test part of its split.
    Evaluate(Options),
    /// Multi-run comparison of several methods.
    Compare(Options),
    /// CSRR against its three ablations.
    Ablate(Options),
    /// Sweep lambda and gamma for one method and mark the lowest mean error.
    Grid(Options),
    /// Generate a planted-cluster synthetic dataset.
    Synth(Options),
}

impl Command {
    fn options(&self) -> &Options {
        match self {
            Command::Preprocess(o)
            | Command::Congruity(o)
            | Command::Analyze(o)
            | Command::Train(o)
            | Command::Evaluate(o)
            | Command::Compare(o)
            | Command::Ablate(o)
            | Command::Grid(o)
            | Command::Synth(o) => o,
        }
    }
}

/// Every configurable value. All fields are optional so that flags, the
/// environment and the config file can be layered.
#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Options {
    /// Ratings CSV (`user_id,item_id,rating`).
    #[arg(long, env = "CONGREC_RATINGS")]
    pub ratings: Option<PathBuf>,
    /// Friendship CSV (`user_id,friend_id`).
    #[arg(long, env = "CONGREC_TRUST")]
    pub trust: Option<PathBuf>,
    /// Helpfulness CSV (`rater_id,author_id,score`).
    #[arg(long, env = "CONGREC_HELPFULNESS")]
    pub helpfulness: Option<PathBuf>,
    /// Output directory [default: out].
    #[arg(long, env = "CONGREC_OUT")]
    pub out: Option<PathBuf>,
    /// Model file for `evaluate` [default: <out>/model.bin].
    #[arg(long, env = "CONGREC_MODEL")]
    pub model: Option<PathBuf>,
    /// Also write the retained-user report when preprocessing.
    #[arg(long, env = "CONGREC_REPORT", num_args = 0..=1, default_missing_value = "true")]
    pub report: Option<bool>,

    /// Method for `train` and `evaluate`: mf, smf, soreg, cr, csrr [default: cr].
    #[arg(long, env = "CONGREC_METHOD")]
    pub method: Option<String>,
    /// Comma-separated methods for `compare` [default: all].
    #[arg(long, env = "CONGREC_METHODS", value_delimiter = ',')]
    pub methods: Option<Vec<String>>,

    /// Latent dimension [default: 15].
    #[arg(long, env = "CONGREC_D")]
    pub d: Option<usize>,
    /// Frobenius regularization weight [default: 0.01].
    #[arg(long, env = "CONGREC_LAMBDA")]
    pub lambda: Option<f64>,
    /// Closeness regularization weight [default: 100].
    #[arg(long, env = "CONGREC_GAMMA")]
    pub gamma: Option<f64>,
    /// CSRR friendship blend weight [default: 0.3].
    #[arg(long, env = "CONGREC_DELTA")]
    pub delta: Option<f64>,
    /// Gradient descent step [default: 1e-4].
    #[arg(long, env = "CONGREC_LEARNING_RATE")]
    pub learning_rate: Option<f64>,
    /// Iteration budget [default: 500].
    #[arg(long, env = "CONGREC_MAX_ITERS")]
    pub max_iters: Option<usize>,
    /// Relative objective decrease that stops training [default: 1e-5].
    #[arg(long, env = "CONGREC_TOL")]
    pub tol: Option<f64>,
    /// Standard deviation of the factor initialization [default: 0.1].
    #[arg(long, env = "CONGREC_INIT_SCALE")]
    pub init_scale: Option<f64>,
    /// `full` or `paper-faithful` [default: full].
    #[arg(long, env = "CONGREC_GRADIENT_MODE")]
    pub gradient_mode: Option<String>,
    /// Clip predictions to [1, 5] when scoring.
    #[arg(long, env = "CONGREC_CLAMP_PREDICTIONS", num_args = 0..=1, default_missing_value = "true")]
    pub clamp_predictions: Option<bool>,
    /// Drop negative congruity from the CR closeness matrix.
    #[arg(long, env = "CONGREC_CLAMP_CLOSENESS_NONNEGATIVE", num_args = 0..=1, default_missing_value = "true")]
    pub clamp_closeness_nonnegative: Option<bool>,

    /// Comma-separated training fractions [default: 0.9].
    #[arg(long, env = "CONGREC_TRAIN_FRACTIONS", value_delimiter = ',')]
    pub train_fractions: Option<Vec<f64>>,
    /// Runs per method and fraction [default: 20].
    #[arg(long, env = "CONGREC_RUNS")]
    pub runs: Option<usize>,
    /// Source of all randomness [default: 0].
    #[arg(long, env = "CONGREC_BASE_SEED")]
    pub base_seed: Option<u64>,
    /// Leave out test ratings of users or items unseen in training.
    #[arg(long, env = "CONGREC_EXCLUDE_COLD_START", num_args = 0..=1, default_missing_value = "true")]
    pub exclude_cold_start: Option<bool>,
    /// Comma-separated lambda values for `grid` [default: --lambda].
    #[arg(long, env = "CONGREC_GRID_LAMBDA", value_delimiter = ',')]
    pub grid_lambda: Option<Vec<f64>>,
    /// Comma-separated gamma values for `grid` [default: --gamma].
    #[arg(long, env = "CONGREC_GRID_GAMMA", value_delimiter = ',')]
    pub grid_gamma: Option<Vec<f64>>,
    /// Worker threads for independent runs [default: all cores].
    #[arg(long, env = "CONGREC_JOBS")]
    pub jobs: Option<usize>,

    /// Helpfulness scores counted as positive [default: 4,5].
    #[arg(long, env = "CONGREC_POSITIVE", value_delimiter = ',')]
    pub positive: Option<Vec<u8>>,
    /// Helpfulness scores counted as negative [default: 1,2].
    #[arg(long, env = "CONGREC_NEGATIVE", value_delimiter = ',')]
    pub negative: Option<Vec<u8>>,
    /// Strength function: `paper-clamped` or `bounded-alternative` [default: paper-clamped].
    #[arg(long, env = "CONGREC_STRENGTH")]
    pub strength: Option<String>,
    /// Logarithm base of the strength function [default: e].
    #[arg(long, env = "CONGREC_LOG_BASE")]
    pub log_base: Option<f64>,
    /// Significance level of the analyses [default: 0.01].
    #[arg(long, env = "CONGREC_ALPHA")]
    pub alpha: Option<f64>,

    /// Synthetic users [default: 200].
    #[arg(long, env = "CONGREC_SYNTH_USERS")]
    pub synth_users: Option<usize>,
    /// Synthetic items [default: 150].
    #[arg(long, env = "CONGREC_SYNTH_ITEMS")]
    pub synth_items: Option<usize>,
    /// Planted latent dimension and cluster count [default: 5].
    #[arg(long, env = "CONGREC_SYNTH_DIM")]
    pub synth_dim: Option<usize>,
    /// Mean probability that a cell is rated [default: 0.1].
    #[arg(long, env = "CONGREC_SYNTH_OBSERVATION_DENSITY")]
    pub synth_observation_density: Option<f64>,
    /// Preference-driven observation strength [default: 0.5].
    #[arg(long, env = "CONGREC_SYNTH_SELECTION_BIAS")]
    pub synth_selection_bias: Option<f64>,
    /// Fraction of user pairs with helpfulness interactions [default: 0.05].
    #[arg(long, env = "CONGREC_SYNTH_CONGRUITY_DENSITY")]
    pub synth_congruity_density: Option<f64>,
    /// Fraction of users taking part in helpfulness interactions [default: 1].
    #[arg(long, env = "CONGREC_SYNTH_CONGRUITY_COVERAGE")]
    pub synth_congruity_coverage: Option<f64>,
    /// Fraction of user pairs that are friends [default: 0.02].
    #[arg(long, env = "CONGREC_SYNTH_FRIEND_DENSITY")]
    pub synth_friend_density: Option<f64>,
    /// Rating noise standard deviation [default: 0.5].
    #[arg(long, env = "CONGREC_SYNTH_NOISE_SIGMA")]
    pub synth_noise_sigma: Option<f64>,
    /// Within-cluster congruity magnitude [default: 0.6].
    #[arg(long, env = "CONGREC_SYNTH_CONGRUITY_SCALE")]
    pub synth_congruity_scale: Option<f64>,
    /// Same-cluster pair sampling weight [default: 10].
    #[arg(long, env = "CONGREC_SYNTH_AFFINITY")]
    pub synth_affinity: Option<f64>,
    /// Spread of planted item ratings [default: 1.2].
    #[arg(long, env = "CONGREC_SYNTH_RATING_SPREAD")]
    pub synth_rating_spread: Option<f64>,
    /// Assign congruity independently of the clusters.
    #[arg(long, env = "CONGREC_SYNTH_INDEPENDENT_CONGRUITY", num_args = 0..=1, default_missing_value = "true")]
    pub synth_independent_congruity: Option<bool>,
}

macro_rules! layer {
    ($top:expr, $bottom:expr; $($field:ident),* $(,)?) => {
        Options { $($field: $top.$field.or($bottom.$field)),* }
    };
}

impl Options {
    /// Values from `self` win; gaps are filled from `lower`.
    pub fn layered_over(self, lower: Options) -> Options {
        layer!(self, lower;
            ratings, trust, helpfulness, out, model, report, method, methods,
            d, lambda, gamma, delta, learning_rate, max_iters, tol, init_scale, gradient_mode,
            clamp_predictions, clamp_closeness_nonnegative,
            train_fractions, runs, base_seed, exclude_cold_start, grid_lambda, grid_gamma, jobs,
            positive, negative, strength, log_base, alpha,
            synth_users, synth_items, synth_dim, synth_observation_density, synth_selection_bias,
            synth_congruity_density, synth_congruity_coverage, synth_friend_density, synth_noise_sigma,
            synth_congruity_scale, synth_affinity, synth_rating_spread, synth_independent_congruity,
        )
    }

    pub fn from_toml(text: &str) -> Result<Options> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("options serialize")
    }

    fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("out"))
    }

    fn base_seed(&self) -> u64 {
        self.base_seed.unwrap_or(0)
    }

    fn first_fraction(&self) -> Result<f64> {
        match self.train_fractions.as_deref() {
            None => Ok(0.9),
            Some([x, ..]) => Ok(*x),
            Some([]) => Err(Error::Config("train_fractions is empty".into())),
        }
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let def = TrainConfig::default();
        let config = TrainConfig {
            d: self.d.unwrap_or(def.d),
            lambda: self.lambda.unwrap_or(def.lambda),
            gamma: self.gamma.unwrap_or(def.gamma),
            delta: self.delta.unwrap_or(def.delta),
            learning_rate: self.learning_rate.unwrap_or(def.learning_rate),
            max_iters: self.max_iters.unwrap_or(def.max_iters),
            tol: self.tol.unwrap_or(def.tol),
            seed: def.seed,
            init_scale: self.init_scale.unwrap_or(def.init_scale),
            gradient_mode: match &self.gradient_mode {
                Some(s) => s.parse()?,
                None => GradientMode::default(),
            },
            clamp_predictions: self.clamp_predictions.unwrap_or(def.clamp_predictions),
            clamp_closeness_nonnegative: self.clamp_closeness_nonnegative.unwrap_or(def.clamp_closeness_nonnegative),
        };
        config.validate()?;
        Ok(config)
    }

    pub fn thresholds(&self) -> Result<Thresholds> {
        let def = Thresholds::default();
        Thresholds::new(
            self.positive.clone().unwrap_or_else(|| def.positive.iter().copied().collect()),
            self.negative.clone().unwrap_or_else(|| def.negative.iter().copied().collect()),
        )
    }

    pub fn strength(&self) -> Result<StrengthFunction> {
        let kind = match self.strength.as_deref() {
            None | Some("paper-clamped") => StrengthKind::PaperClamped,
            Some("bounded-alternative") => StrengthKind::BoundedAlternative,
            Some(other) => {
                return Err(Error::Config(format!(
                    "unknown strength `{other}` (expected paper-clamped or bounded-alternative)"
                )))
            }
        };
        StrengthFunction::new(kind, self.log_base.unwrap_or(std::f64::consts::E))
    }

    fn method(&self) -> Result<Method> {
        self.method.as_deref().map_or(Ok(Method::Cr), str::parse)
    }

    fn methods(&self) -> Result<Vec<Method>> {
        match &self.methods {
            None => Ok(Method::ALL.to_vec()),
            Some(list) => list.iter().map(|s| s.parse()).collect(),
        }
    }

    fn protocol(&self) -> Protocol {
        Protocol {
            train_fractions: self.train_fractions.clone().unwrap_or_else(|| vec![0.9]),
            runs: self.runs.unwrap_or(20),
            base_seed: self.base_seed(),
            exclude_cold_start: self.exclude_cold_start.unwrap_or(false),
        }
    }

    pub fn synth_config(&self) -> SynthConfig {
        let def = SynthConfig::default();
        SynthConfig {
            n_users: self.synth_users.unwrap_or(def.n_users),
            n_items: self.synth_items.unwrap_or(def.n_items),
            d: self.synth_dim.unwrap_or(def.d),
            observation_density: self.synth_observation_density.unwrap_or(def.observation_density),
            selection_bias: self.synth_selection_bias.unwrap_or(def.selection_bias),
            congruity_density: self.synth_congruity_density.unwrap_or(def.congruity_density),
            congruity_coverage: self.synth_congruity_coverage.unwrap_or(def.congruity_coverage),
            friend_density: self.synth_friend_density.unwrap_or(def.friend_density),
            noise_sigma: self.synth_noise_sigma.unwrap_or(def.noise_sigma),
            congruity_scale: self.synth_congruity_scale.unwrap_or(def.congruity_scale),
            affinity: self.synth_affinity.unwrap_or(def.affinity),
            rating_spread: self.synth_rating_spread.unwrap_or(def.rating_spread),
            independent_congruity: self.synth_independent_congruity.unwrap_or(def.independent_congruity),
            seed: self.base_seed(),
        }
    }
}

fn required<'a>(path: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    path.as_deref()
        .ok_or_else(|| Error::Config(format!("missing required option --{flag}")))
}

fn load(opts: &Options, need_helpfulness: bool) -> Result<(Dataset, RetentionReport)> {
    let ratings = required(&opts.ratings, "ratings")?;
    let trust = required(&opts.trust, "trust")?;
    if need_helpfulness {
        required(&opts.helpfulness, "helpfulness")?;
    }
    let raw = RawDataset::load(ratings, trust, opts.helpfulness.as_deref())?;
    preprocess(&raw)
}

fn create_out(opts: &Options) -> Result<PathBuf> {
    let dir = opts.out_dir();
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    Ok(dir)
}

fn inputs_for(opts: &Options, dataset: &Dataset, methods: &[Method]) -> Result<ExperimentInputs> {
    let needs_c = methods.iter().any(|m| matches!(m, Method::Cr | Method::Csrr));
    if needs_c && opts.helpfulness.is_none() {
        return Err(Error::Config("methods cr and csrr need --helpfulness".into()));
    }
    ExperimentInputs::from_dataset(dataset, &opts.thresholds()?, &opts.strength()?)
}

fn cmd_preprocess(opts: &Options) -> Result<()> {
    let (dataset, report) = load(opts, false)?;
    let dir = create_out(opts)?;
    let mut raw = dataset.to_raw();
    if opts.helpfulness.is_none() {
        raw.helpfulness.clear();
    }
    write_dataset(&raw, &dir)?;
    if opts.report.unwrap_or(false) {
        write_report(&report, &dir.join("retained_users.csv"))?;
    }
    println!(
        "kept {} users, {} items, {} ratings, {} friendships after {} passes (dropped {} users, {} items)",
        dataset.n_users(),
        dataset.n_items(),
        dataset.ratings.len(),
        dataset.graph.n_edges(),
        report.passes,
        report.dropped_users,
        report.dropped_items
    );
    Ok(())
}

fn write_taxonomy(t: &PairTaxonomy, path: &Path) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(["friends_congruent", "friends_incongruent", "strangers_congruent", "strangers_incongruent", "total"])?;
    w.write_record([t.friends_congruent, t.friends_incongruent, t.strangers_congruent, t.strangers_incongruent, t.total()].map(|x| x.to_string()))?;
    w.flush().map_err(|e| Error::io(path, e))
}

fn cmd_congruity(opts: &Options) -> Result<()> {
    let (dataset, _) = load(opts, true)?;
    let counts = count_interactions(dataset.n_users(), &dataset.events, &opts.thresholds()?)?;
    let c = build_congruity(&counts, &opts.strength()?)?;
    let dir = create_out(opts)?;
    write_congruity(&counts, &c, &dataset.users, &dir.join("congruity.csv"))?;
    println!("{} interacting pairs, {} with nonzero congruity", counts.len(), c.nnz() / 2);
    Ok(())
}

fn cmd_analyze(opts: &Options) -> Result<()> {
    let (dataset, _) = load(opts, true)?;
    let counts = count_interactions(dataset.n_users(), &dataset.events, &opts.thresholds()?)?;
    let c = build_congruity(&counts, &opts.strength()?)?;
    let alpha = opts.alpha.unwrap_or(DEFAULT_ALPHA);
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Config(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let dir = create_out(opts)?;
    let taxonomy = pair_taxonomy(&c, &dataset.graph)?;
    write_taxonomy(&taxonomy, &dir.join("taxonomy.csv"))?;

    let friend = friend_congruence_test(&c, &dataset.graph).map(|r| r.result);
    let preference = congruity_preference_test(&c, &dataset.ratings, opts.base_seed()).map(|r| r.result);
    let mut rows = Vec::new();
    for (name, outcome) in [("friend_congruence", friend), ("congruity_preference", preference)] {
        let result = match outcome {
            Ok(r) => {
                println!("{name}: t = {}, df = {}, p = {}, rejected = {}", r.t_statistic, r.degrees_of_freedom, r.p_value, r.rejects(alpha));
                Some(r)
            }
            Err(e @ (Error::DegenerateSample | Error::SampleTooSmall { .. } | Error::InsufficientData(_))) => {
                eprintln!("warning: {name}: {e}");
                None
            }
            Err(e) => return Err(e),
        };
        rows.push(AnalysisRow {
            test_name: name.to_owned(),
            result,
            alpha,
        });
    }
    write_analysis_report(&rows, &dir.join("analysis.csv"))
}

fn cmd_train(opts: &Options) -> Result<()> {
    let (dataset, _) = load(opts, false)?;
    let method = opts.method()?;
    let inputs = inputs_for(opts, &dataset, &[method])?;
    let arm = Arm::new(method, opts.train_config()?);
    let fraction = opts.first_fraction()?;
    let run = run_single(&inputs, &arm, fraction, 0, opts.base_seed(), opts.exclude_cold_start.unwrap_or(false))?;
    let dir = create_out(opts)?;
    save_model(&dir.join("model.bin"), &run.model, method, &run.config)?;
    write_trace(&run.trace, &dir.join("trace.csv"))?;
    let last = run.trace.last().expect("trace has the initial row");
    println!(
        "{method}: {} iterations, objective {}, test rmse {}, mae {}",
        last.iter, last.objective, run.metrics.rmse, run.metrics.mae
    );
    Ok(())
}

fn cmd_evaluate(opts: &Options) -> Result<()> {
    let (dataset, _) = load(opts, false)?;
    let path = opts.model.clone().unwrap_or_else(|| opts.out_dir().join("model.bin"));
    let (header, model) = load_model(&path)?;
    if (header.n_users, header.n_items) != (dataset.n_users(), dataset.n_items()) {
        return Err(Error::ModelFormat(format!(
            "model covers {} users and {} items but the dataset has {} and {}",
            header.n_users,
            header.n_items,
            dataset.n_users(),
            dataset.n_items()
        )));
    }
    let fraction = opts.first_fraction()?;
    let base = opts.base_seed();
    let expected = TrainConfig {
        seed: derive_seed(base, fraction, 0, SeedPurpose::Init),
        ..opts.train_config()?
    };
    if config_hash(&expected) != header.config_hash {
        eprintln!("warning: model was trained with a different configuration than the current options");
    }
    let spec = SplitSpec {
        train_fraction: fraction,
        seed: derive_seed(base, fraction, 0, SeedPurpose::Split),
    };
    let (train, test) = split(&dataset.ratings, spec)?;
    let metrics = evaluate(
        &model,
        &train,
        &test,
        EvalOptions {
            clamp_predictions: opts.clamp_predictions.unwrap_or(false),
            exclude_cold_start: opts.exclude_cold_start.unwrap_or(false),
        },
    )?;
    let dir = create_out(opts)?;
    let out = dir.join("metrics.csv");
    let file = fs::File::create(&out).map_err(|e| Error::io(&out, e))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(["method", "metric", "value", "n"])?;
    for (name, value) in [("rmse", metrics.rmse), ("mae", metrics.mae)] {
        w.write_record([header.method.name().to_owned(), name.to_owned(), value.to_string(), metrics.n.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(&out, e))?;
    println!("{}: rmse {}, mae {} on {} test ratings", header.method, metrics.rmse, metrics.mae, metrics.n);
    Ok(())
}

fn write_report_files(report: &ComparisonReport, dir: &Path) -> Result<()> {
    for f in &report.failures {
        eprintln!(
            "warning: {} diverged at iteration {} (fraction {}, run {}); excluded from aggregates",
            f.method, f.iteration, f.train_fraction, f.run
        );
    }
    write_summary(report, &dir.join("summary.csv"))?;
    write_pairwise(report, &dir.join("pairwise.csv"))?;
    write_plot_data(report, &dir.join("plot_data.csv"))?;
    write_failures(report, &dir.join("failures.csv"))?;
    for row in &report.summary {
        if let (Some(mean), Some(std)) = (row.mean, row.std) {
            println!("{} x={} {}: {mean:.4} ± {std:.4} ({} runs)", row.method, row.train_fraction, row.metric.name(), row.runs);
        }
    }
    Ok(())
}

fn cmd_compare(opts: &Options) -> Result<()> {
    let methods = opts.methods()?;
    let config = opts.train_config()?;
    let (dataset, _) = load(opts, false)?;
    let inputs = inputs_for(opts, &dataset, &methods)?;
    let arms: Vec<Arm> = methods.iter().map(|&m| Arm::new(m, config.clone())).collect();
    let report = run_comparison(&inputs, &arms, &opts.protocol())?;
    write_report_files(&report, &create_out(opts)?)
}

fn cmd_ablate(opts: &Options) -> Result<()> {
    let config = opts.train_config()?;
    let (dataset, _) = load(opts, true)?;
    let inputs = inputs_for(opts, &dataset, &[Method::Csrr])?;
    let report = run_ablation(&inputs, &config, config.delta, &opts.protocol())?;
    write_report_files(&report, &create_out(opts)?)
}

fn cmd_grid(opts: &Options) -> Result<()> {
    let method = opts.method()?;
    let base = opts.train_config()?;
    let lambdas = opts.grid_lambda.clone().unwrap_or_else(|| vec![base.lambda]);
    let gammas = opts.grid_gamma.clone().unwrap_or_else(|| vec![base.gamma]);
    if lambdas.is_empty() || gammas.is_empty() {
        return Err(Error::Config("grid_lambda and grid_gamma need at least one value".into()));
    }
    let mut arms = Vec::new();
    for &lambda in &lambdas {
        for &gamma in &gammas {
            let config = TrainConfig { lambda, gamma, ..base.clone() };
            config.validate()?;
            arms.push((lambda, gamma, Arm { name: format!("{method}:lambda={lambda}:gamma={gamma}"), method, config }));
        }
    }
    let (dataset, _) = load(opts, false)?;
    let inputs = inputs_for(opts, &dataset, &[method])?;
    let plain: Vec<Arm> = arms.iter().map(|(_, _, a)| a.clone()).collect();
    let report = run_comparison(&inputs, &plain, &opts.protocol())?;
    let dir = create_out(opts)?;
    write_report_files(&report, &dir)?;

    let path = dir.join("grid.csv");
    let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(["method", "lambda", "gamma", "train_fraction", "metric", "mean", "runs", "best"])?;
    for &x in &opts.protocol().train_fractions {
        for metric in Metric::ALL {
            let means: Vec<Option<f64>> = arms.iter().map(|(_, _, a)| report.mean(&a.name, x, metric)).collect();
            let best = means
                .iter()
                .enumerate()
                .filter_map(|(i, m)| m.map(|m| (i, m)))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .map(|(i, _)| i);
            for (i, (lambda, gamma, arm)) in arms.iter().enumerate() {
                let runs = report.values(&arm.name, x, metric).len();
                w.write_record([
                    method.name().to_owned(),
                    lambda.to_string(),
                    gamma.to_string(),
                    x.to_string(),
                    metric.name().to_owned(),
                    means[i].map_or("NA".into(), |m| m.to_string()),
                    runs.to_string(),
                    (best == Some(i)).to_string(),
                ])?;
            }
            if let Some(i) = best {
                println!("best {} at x={x}: lambda {}, gamma {}", metric.name(), arms[i].0, arms[i].1);
            }
        }
    }
    w.flush().map_err(|e| Error::io(&path, e))
}

fn cmd_synth(opts: &Options) -> Result<()> {
    let config = opts.synth_config();
    let data = generate_synthetic(&config)?;
    let dir = opts.out_dir();
    write_synthetic(&data, &config, &dir)?;
    println!(
        "wrote {} ratings, {} friendships, {} helpfulness scores to {}",
        data.raw.ratings.len(),
        data.raw.friendships.len(),
        data.raw.helpfulness.len(),
        dir.display()
    );
    Ok(())
}

/// Flags and environment over the config file.
pub fn resolve(cli: &Cli) -> Result<Options> {
    let file = match &cli.config {
        Some(path) => Options::from_toml(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)?,
        None => Options::default(),
    };
    Ok(cli.command.options().clone().layered_over(file))
}

pub fn execute(cli: &Cli) -> Result<()> {
    let opts = resolve(cli)?;
    if cli.print_config {
        print!("{}", opts.to_toml());
        return Ok(());
    }
    let dispatch = || match &cli.command {
        Command::Preprocess(_) => cmd_preprocess(&opts),
        Command::Congruity(_) => cmd_congruity(&opts),
        Command::Analyze(_) => cmd_analyze(&opts),
        Command::Train(_) => cmd_train(&opts),
        Command::Evaluate(_) => cmd_evaluate(&opts),
        Command::Compare(_) => cmd_compare(&opts),
        Command::Ablate(_) => cmd_ablate(&opts),
        Command::Grid(_) => cmd_grid(&opts),
        Command::Synth(_) => cmd_synth(&opts),
    };
    match opts.jobs {
        Some(0) => Err(Error::Config("jobs must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(e.to_string()))?
            .install(dispatch),
        None => dispatch(),
    }
}

/// Parses `args` (including the program name) and runs the command, returning
/// the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
