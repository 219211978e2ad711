use congrec::congruity::{StrengthFunction, Thresholds};
use congrec::experiment::{generate_synthetic, run_single, write_synthetic, Arm, ExperimentInputs, SynthConfig};
use congrec::factorization::{load_model, save_model, Method, TrainConfig};
use congrec::ingest::{preprocess, RawDataset};

fn quick() -> TrainConfig {
    TrainConfig { d: 3, lambda: 1.0, gamma: 1.0, learning_rate: 5e-3, max_iters: 80, tol: 1e-6, ..Default::default() }
}

fn inputs(config: &SynthConfig) -> ExperimentInputs {
    let (ds, _) = preprocess(&generate_synthetic(config).unwrap().raw).unwrap();
    ExperimentInputs::from_dataset(&ds, &Thresholds::default(), &StrengthFunction::default()).unwrap()
}

#[test]
fn cr_without_congruity_is_mf() {
    let inputs = inputs(&SynthConfig { n_users: 80, n_items: 60, congruity_density: 0.0, seed: 1, ..Default::default() });
    assert!(inputs.congruity.is_empty());
    let cr = run_single(&inputs, &Arm::new(Method::Cr, quick()), 0.8, 0, 3, false).unwrap();
    let mf = run_single(&inputs, &Arm::new(Method::Mf, quick()), 0.8, 0, 3, false).unwrap();
    assert_eq!(cr.trace, mf.trace);
    assert_eq!(cr.model, mf.model);
}

#[test]
fn files_to_saved_model() {
    let tmp = tempfile::tempdir().unwrap();
    let synth = SynthConfig { n_users: 80, n_items: 60, seed: 2, ..Default::default() };
    let data = generate_synthetic(&synth).unwrap();
    write_synthetic(&data, &synth, tmp.path()).unwrap();
    let raw = RawDataset::load(
        &tmp.path().join("ratings.csv"),
        &tmp.path().join("trust.csv"),
        Some(&tmp.path().join("helpfulness.csv")),
    )
    .unwrap();
    let (from_files, _) = preprocess(&raw).unwrap();
    let (in_memory, _) = preprocess(&data.raw).unwrap();
    assert_eq!(from_files, in_memory);

    let inputs = ExperimentInputs::from_dataset(&from_files, &Thresholds::default(), &StrengthFunction::default()).unwrap();
    let run = run_single(&inputs, &Arm::new(Method::Csrr, quick()), 0.9, 0, 5, false).unwrap();
    assert!(run.metrics.rmse >= run.metrics.mae);
    let path = tmp.path().join("model.bin");
    save_model(&path, &run.model, Method::Csrr, &run.config).unwrap();
    let (header, model) = load_model(&path).unwrap();
    assert_eq!(model, run.model);
    assert_eq!(header.method, Method::Csrr);
}

#[test]
fn runs_differ_but_repeat() {
    let inputs = inputs(&SynthConfig { n_users: 80, n_items: 60, seed: 3, ..Default::default() });
    let arm = Arm::new(Method::Cr, quick());
    let a = run_single(&inputs, &arm, 0.8, 0, 11, false).unwrap();
    let b = run_single(&inputs, &arm, 0.8, 1, 11, false).unwrap();
    let again = run_single(&inputs, &arm, 0.8, 0, 11, false).unwrap();
    assert_ne!(a.metrics, b.metrics);
    assert_eq!(a.metrics, again.metrics);
}
