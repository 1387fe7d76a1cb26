//! Offline evaluation and timing of a trained model on recorded streams.

use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dictionary::PreparedDictionary;
use crate::error::{Error, Result};
use crate::labels::{map_to_command, StateLabel};
use crate::recognizer::{classify_window, ClassifierKind, Recognizer, RecognizerModel, StepOutput};
use crate::signal::{feature_windows, speed_windows, window_frames, LabeledStream};

/// Truth label of each window ending at frames `W..N`.
///
/// A window that holds more than W/2 frames of one gesture takes that
/// gesture's label. Otherwise it takes the posture covering most of its
/// frames, the later posture on a tie.
pub fn window_truth(truth: &[StateLabel], window: usize) -> Vec<StateLabel> {
    if truth.len() <= window {
        return Vec::new();
    }
    (window..truth.len())
        .map(|end| {
            let span = &truth[window_frames(end, window)];
            let mut counts: Vec<(StateLabel, usize)> = Vec::new();
            for &l in span {
                match counts.iter_mut().find(|(c, _)| *c == l) {
                    Some((_, n)) => *n += 1,
                    None => counts.push((l, 1)),
                }
            }
            if let Some(&(g, _)) = counts.iter().find(|(l, n)| l.is_gesture() && 2 * n > window) {
                return g;
            }
            // scan latest first so that ties keep the later posture
            let mut best: Option<(StateLabel, usize)> = None;
            for &(l, n) in counts.iter().rev().filter(|(l, _)| !l.is_gesture()) {
                if best.is_none_or(|(_, b)| n > b) {
                    best = Some((l, n));
                }
            }
            best.map(|(l, _)| l).unwrap_or(span[span.len() - 1])
        })
        .collect()
}

/// Marks windows within `half` positions of a change in window truth.
pub fn boundary_band(truth: &[StateLabel], half: usize) -> Vec<bool> {
    let mut band = vec![false; truth.len()];
    for i in 1..truth.len() {
        if truth[i] != truth[i - 1] {
            let lo = i.saturating_sub(half);
            let hi = (i + half).min(truth.len());
            band[lo..hi].iter_mut().for_each(|b| *b = true);
        }
    }
    band
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    /// Half-width of the excluded band around truth changes; `None` uses W.
    pub band: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Accuracy {
    pub windows: usize,
    pub raw_errors: usize,
    pub raw_accuracy: f64,
    pub command_errors: usize,
    pub command_accuracy: f64,
}

impl Accuracy {
    fn tally(pairs: impl Iterator<Item = (bool, bool)>) -> Self {
        let (mut windows, mut raw_errors, mut command_errors) = (0, 0, 0);
        for (raw_ok, cmd_ok) in pairs {
            windows += 1;
            raw_errors += usize::from(!raw_ok);
            command_errors += usize::from(!cmd_ok);
        }
        let rate = |e: usize| if windows == 0 { 1.0 } else { 1.0 - e as f64 / windows as f64 };
        Accuracy { windows, raw_errors, raw_accuracy: rate(raw_errors), command_errors, command_accuracy: rate(command_errors) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub band_half_width: usize,
    pub all: Accuracy,
    pub outside_band: Accuracy,
    /// Windows whose truth is a gesture, band included.
    pub gestures: Accuracy,
    /// Rows are truth, columns predictions, both in [`StateLabel::all`] order.
    pub confusion: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub total_seconds: f64,
    pub median_window_seconds: f64,
    pub max_window_seconds: f64,
}

impl Timing {
    fn from_samples(mut samples: Vec<f64>) -> Self {
        let total_seconds = samples.iter().sum();
        samples.sort_by(f64::total_cmp);
        let median_window_seconds = if samples.is_empty() { 0.0 } else { samples[samples.len() / 2] };
        let max_window_seconds = samples.last().copied().unwrap_or(0.0);
        Timing { total_seconds, median_window_seconds, max_window_seconds }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamReport {
    pub name: String,
    pub frames: usize,
    pub windows: usize,
    pub classifier: String,
    pub accuracy: Option<AccuracyReport>,
    pub timing: Timing,
}

pub struct StreamEval {
    pub report: StreamReport,
    pub outputs: Vec<StepOutput>,
}

impl StreamEval {
    /// One event record per line.
    pub fn records(&self) -> String {
        let mut s = String::new();
        for o in &self.outputs {
            s.push_str(&o.to_record());
            s.push('\n');
        }
        s
    }
}

/// Replays `stream` through a fresh [`Recognizer`] and scores it against
/// the stream's truth, when present.
pub fn evaluate_stream(name: &str, stream: &LabeledStream, model: &Arc<RecognizerModel>, opts: &EvalOptions) -> Result<StreamEval> {
    let w = model.window;
    let mut rec = Recognizer::new(Arc::clone(model));
    let mut outputs = Vec::with_capacity(stream.len().saturating_sub(w));
    let mut samples = Vec::with_capacity(outputs.capacity());
    for f in &stream.frames {
        let started = Instant::now();
        let out = rec.step(crate::recognizer::Observation::Present(*f))?;
        let elapsed = started.elapsed().as_secs_f64();
        if let Some(o) = out {
            outputs.push(o);
            samples.push(elapsed);
        }
    }
    let accuracy = match &stream.truth {
        Some(truth) => Some(score(&outputs, &window_truth(truth, w), opts.band.unwrap_or(w))?),
        None => None,
    };
    let report = StreamReport {
        name: name.to_string(),
        frames: stream.len(),
        windows: outputs.len(),
        classifier: model.classifier.name().to_string(),
        accuracy,
        timing: Timing::from_samples(samples),
    };
    Ok(StreamEval { report, outputs })
}

fn score(outputs: &[StepOutput], truth: &[StateLabel], half: usize) -> Result<AccuracyReport> {
    if outputs.len() != truth.len() {
        return Err(Error::DimensionMismatch { expected: truth.len(), got: outputs.len() });
    }
    let all_labels = StateLabel::all();
    let index = |l: StateLabel| all_labels.iter().position(|&x| x == l).expect("label listed");
    let mut confusion = vec![vec![0usize; all_labels.len()]; all_labels.len()];
    let band = boundary_band(truth, half);
    let mut rows = Vec::with_capacity(truth.len());
    for (o, &t) in outputs.iter().zip(truth) {
        let predicted = o.label.ok_or_else(|| Error::BadMessage("evaluated window has no label".into()))?;
        confusion[index(t)][index(predicted)] += 1;
        rows.push((predicted == t, o.command == Some(map_to_command(t))));
    }
    let pick = |keep: &dyn Fn(usize) -> bool| Accuracy::tally(rows.iter().enumerate().filter(|(i, _)| keep(*i)).map(|(_, r)| *r));
    Ok(AccuracyReport {
        band_half_width: half,
        all: pick(&|_| true),
        outside_band: pick(&|i| !band[i]),
        gestures: pick(&|i| truth[i].is_gesture()),
        confusion,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchEntry {
    pub classifier: String,
    pub windows: usize,
    pub timing: Timing,
    /// FNV-1a digest of the predicted labels, for run-to-run comparison.
    pub label_digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    /// Time to rebuild the three ridge projectors, kept out of the
    /// per-window figures.
    pub projector_seconds: f64,
    pub entries: Vec<BenchEntry>,
}

fn digest(labels: &[StateLabel]) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for l in labels {
        for b in l.name().bytes().chain(std::iter::once(b'\n')) {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    format!("{h:016x}")
}

/// Times the two-stage decision on every window of `stream` for each of
/// `classifiers`.
pub fn run_bench(stream: &LabeledStream, model: &RecognizerModel, classifiers: &[ClassifierKind]) -> Result<BenchReport> {
    let started = Instant::now();
    for d in [&model.stage1, &model.postures, &model.gestures] {
        PreparedDictionary::new(d.dictionary.clone())?;
    }
    let projector_seconds = started.elapsed().as_secs_f64();

    let features = feature_windows(&stream.frames, model.window)?;
    let speeds = speed_windows(&stream.frames, model.window)?;
    let mut entries = Vec::new();
    for &kind in classifiers {
        let m = model.with_classifier(kind);
        let mut samples = Vec::with_capacity(features.len());
        let mut labels = Vec::with_capacity(features.len());
        for (s, f) in speeds.iter().zip(&features) {
            let t = Instant::now();
            let (_, label, _) = classify_window(s, f, &m)?;
            samples.push(t.elapsed().as_secs_f64());
            labels.push(label);
        }
        entries.push(BenchEntry {
            classifier: kind.name().to_string(),
            windows: labels.len(),
            timing: Timing::from_samples(samples),
            label_digest: digest(&labels),
        });
    }
    Ok(BenchReport { projector_seconds, entries })
}
