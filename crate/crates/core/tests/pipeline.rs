use std::sync::OnceLock;

use kifa::export::{export_attention, read_attention_export};
use kifa::kinetics::intensity_score;
use kifa::pipeline::{PipelineConfig, PipelineSession, TrainSummary};
use kifa::skeleton::{Action, Intensity, LabeledSample};
use kifa::syngen::{generate_sample, generate_samples, GenParams, MotionTemplate};

fn config() -> PipelineConfig {
    let mut config = PipelineConfig::default();
    config.net.hidden_size = 16;
    config.net.learning_rate = 0.1;
    config.net.epochs = 40;
    config.penalty_epochs = 5;
    config
}

fn corpus() -> &'static [LabeledSample] {
    static CORPUS: OnceLock<Vec<LabeledSample>> = OnceLock::new();
    CORPUS.get_or_init(|| generate_samples(&GenParams { seed: 21, ..GenParams::default() }, 8))
}

fn trained() -> &'static (PipelineSession, TrainSummary) {
    static TRAINED: OnceLock<(PipelineSession, TrainSummary)> = OnceLock::new();
    TRAINED.get_or_init(|| PipelineSession::train(&config(), corpus(), 4).unwrap())
}

fn session() -> &'static PipelineSession {
    &trained().0
}

#[test]
fn training_reduces_loss() {
    let summary = &trained().1;
    assert_eq!(summary.epoch_losses.len(), 40);
    let plain_end = summary.epoch_losses[34];
    assert!(plain_end < 0.5 * summary.initial_loss, "{plain_end} vs {}", summary.initial_loss);
    assert!(summary.fit_losses.iter().all(|(before, after)| after <= before));
}

#[test]
fn frozen_indexing_is_repeatable_and_leaves_state_alone() {
    let mut s = session().clone();
    let seq = &corpus()[3].sequence;
    let a = s.index_sample(seq, true).unwrap();
    let b = s.index_sample(seq, true).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    assert_eq!(&s, session());
}

#[test]
fn unfrozen_indexing_updates_the_predicted_action() {
    let mut s = session().clone();
    let r = s.index_sample(&corpus()[0].sequence, false).unwrap();
    let k = r.action.index();
    assert_eq!(s.fuzzifiers[k].intensity.count, session().fuzzifiers[k].intensity.count + 1);
    for (i, f) in s.fuzzifiers.iter().enumerate() {
        if i != k {
            assert_eq!(f, &session().fuzzifiers[i]);
        }
    }
}

#[test]
fn save_and_load_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = session().clone();
    s.index_sample(&corpus()[5].sequence, false).unwrap();
    s.save(dir.path()).unwrap();
    let loaded = PipelineSession::load(dir.path()).unwrap();
    assert_eq!(loaded, s);
}

#[test]
fn load_rejects_mismatched_checkpoint() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let mut other = session().clone();
    other.seed += 1;
    session().save(a.path()).unwrap();
    other.save(b.path()).unwrap();
    std::fs::copy(b.path().join("network.ckpt"), a.path().join("network.ckpt")).unwrap();
    let err = PipelineSession::load(a.path()).unwrap_err();
    assert_eq!(err.code(), "E_FORMAT");
}

#[test]
fn single_frame_is_too_short() {
    let mut seq = corpus()[0].sequence.clone();
    seq.frames.truncate(1);
    let err = session().clone().index_sample(&seq, true).unwrap_err();
    assert_eq!(err.code(), "E_TOO_SHORT");
}

#[test]
fn noise_free_intense_punch_is_indexed_intense() {
    let template = MotionTemplate::builtin(Action::Punching);
    let clean = GenParams {
        noise_std: 0.0,
        seed: 21,
        ..GenParams::default()
    };
    let sample = generate_sample(&template, Intensity::Intense, &clean, 3);
    let r = session().clone().index_sample(&sample.sequence, true).unwrap();
    assert_eq!(r.action, Action::Punching);
    assert_eq!(r.intensity_index, Intensity::Intense);
}

#[test]
fn attention_export_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let seq = &corpus()[7].sequence;
    let export = export_attention(session(), seq, dir.path(), false).unwrap();
    let back = read_attention_export(dir.path()).unwrap();
    let sum: f64 = back.temporal.iter().sum();
    assert!((sum - 1.0).abs() <= 1e-9);
    let again = intensity_score(&back.temporal, &back.joint, &back.displacement, session().config.eps).unwrap();
    assert!((again.intensity - export.score.intensity).abs() <= 1e-12 * export.score.intensity.abs().max(1.0));

    let err = export_attention(session(), seq, dir.path(), false).unwrap_err();
    assert_eq!(err.code(), "E_IO");
    export_attention(session(), seq, dir.path(), true).unwrap();
}
