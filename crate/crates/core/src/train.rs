//! Builds a [`RecognizerModel`] from recordings.
//!
//! Each bilateral recording (GoStraight → side → GoStraight) is windowed and
//! split into two clusters by ordered subspace clustering. The cluster
//! boundaries locate the two transitions without any labels. Gesture
//! dictionaries are drawn from the windows around each boundary. Posture
//! dictionaries are sampled from single-posture recordings.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::classify::L1Options;
use crate::cluster::{cluster_training_signal, select_representatives, ClusterAssignment, SignalClustering};
use crate::dictionary::{Dictionary, DictionaryOptions, PreparedDictionary};
use crate::error::{Error, Result};
use crate::labels::{GestureLabel, PostureLabel, StateLabel};
use crate::osc::{stack_columns, OscConfig};
use crate::recognizer::{stage1_column, ClassifierKind, RecognizerModel, STAGE1_POSTURE, STAGE1_TRANSITION};
use crate::signal::{feature_windows, speed_windows, LabeledStream, DEFAULT_WINDOW};
use crate::synth::{bilateral, hold, synth_generate, DEFAULT_NOISE};

/// Length of each synthetic training recording.
pub const TRAINING_SECONDS: f64 = 20.0;

/// Default reference entry of stage-1 columns, mm/s.
pub const STAGE1_REFERENCE_SPEED: f64 = 100.0;

pub const DEFAULT_RIDGE_LAMBDA: f64 = 0.1;

/// The nine recordings the pipeline needs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingSet {
    /// Keyed by the non-GoStraight posture of the GoStraight ↔ side recording.
    pub transitions: BTreeMap<PostureLabel, LabeledStream>,
    pub postures: BTreeMap<PostureLabel, LabeledStream>,
}

pub fn transition_file(side: PostureLabel) -> String {
    format!("transition_{}.stream", side.name())
}

pub fn posture_file(p: PostureLabel) -> String {
    format!("posture_{}.stream", p.name())
}

impl TrainingSet {
    /// Generator recordings with independent per-recording seeds.
    pub fn synthetic(seconds: f64, noise: f64, seed: u64) -> Result<Self> {
        let mut set = TrainingSet::default();
        for (k, side) in PostureLabel::SIDES.into_iter().enumerate() {
            let scenario = bilateral(side, seconds, noise, sub_seed(seed, 100 + k as u64))?;
            set.transitions.insert(side, synth_generate(&scenario)?);
        }
        for (k, p) in PostureLabel::ALL.into_iter().enumerate() {
            set.postures.insert(p, hold(p, seconds, noise, sub_seed(seed, 200 + k as u64))?);
        }
        Ok(set)
    }

    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let mut set = TrainingSet::default();
        for side in PostureLabel::SIDES {
            let path = dir.join(transition_file(side));
            if !path.exists() {
                return Err(Error::MissingRecording(path.display().to_string()));
            }
            set.transitions.insert(side, LabeledStream::load(&path)?);
        }
        for p in PostureLabel::ALL {
            let path = dir.join(posture_file(p));
            if !path.exists() {
                return Err(Error::MissingRecording(path.display().to_string()));
            }
            set.postures.insert(p, LabeledStream::load(&path)?);
        }
        Ok(set)
    }

    pub fn save_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (side, s) in &self.transitions {
            s.save(dir.join(transition_file(*side)))?;
        }
        for (p, s) in &self.postures {
            s.save(dir.join(posture_file(*p)))?;
        }
        Ok(())
    }

    fn check_complete(&self) -> Result<()> {
        for side in PostureLabel::SIDES {
            if !self.transitions.contains_key(&side) {
                return Err(Error::MissingRecording(format!("GoStraight <-> {side} transition recording")));
            }
        }
        for p in PostureLabel::ALL {
            if !self.postures.contains_key(&p) {
                return Err(Error::MissingRecording(format!("{p} posture recording")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub window: usize,
    pub seed: u64,
    pub osc: OscConfig,
    /// Gesture dictionary columns per gesture.
    pub gesture_columns: usize,
    /// Posture dictionary columns per posture.
    pub posture_columns: usize,
    /// Stage-1 columns drawn from each posture recording.
    pub stage1_posture_columns: usize,
    /// Stage-1 columns drawn around each gesture boundary.
    pub stage1_gesture_columns: usize,
    /// Ridge weight for all three dictionaries; `None` picks the data-scaled
    /// default per dictionary. That default is tuned for undercomplete
    /// dictionaries and overfits noise on the 150 × 200 posture block.
    pub lambda: Option<f64>,
    pub center: bool,
    pub classifier: ClassifierKind,
    pub l1: L1Options,
    pub l1_lambda: Option<f64>,
    pub stage1_reference: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            window: DEFAULT_WINDOW,
            seed: 0,
            osc: OscConfig::default(),
            gesture_columns: 100,
            posture_columns: 40,
            stage1_posture_columns: 40,
            stage1_gesture_columns: 25,
            lambda: Some(DEFAULT_RIDGE_LAMBDA),
            center: false,
            classifier: ClassifierKind::Crc,
            l1: L1Options::default(),
            l1_lambda: None,
            stage1_reference: STAGE1_REFERENCE_SPEED,
        }
    }
}

/// Per-recording clustering summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionReport {
    pub side: String,
    pub windows: usize,
    pub cluster_sizes: Vec<usize>,
    /// Every index where the cluster label changes.
    pub boundaries: Vec<usize>,
    /// The two change points of the best GoStraight/side/GoStraight fit.
    pub change_points: [usize; 2],
    /// Windows that disagree with that three-run fit.
    pub fit_mismatches: usize,
    /// Window indices centered on the generator's transitions, when the
    /// recording carries truth labels.
    pub true_midpoints: Option<Vec<usize>>,
    pub silhouette: f64,
    pub osc_iterations: usize,
    pub osc_converged: bool,
    pub final_objective: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub format_version: u32,
    pub window: usize,
    pub seed: u64,
    pub stage1_blocks: Vec<usize>,
    pub posture_blocks: Vec<usize>,
    pub gesture_blocks: Vec<usize>,
    pub transitions: Vec<TransitionReport>,
}

impl TrainingReport {
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::ModelFormat(e.to_string()))
    }
}

pub struct TrainOutput {
    pub model: RecognizerModel,
    pub report: TrainingReport,
    /// The full clustering of each bilateral recording, in `SIDES` order.
    pub clusterings: Vec<(PostureLabel, SignalClustering)>,
}

pub(crate) fn sub_seed(seed: u64, tag: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(tag.wrapping_mul(0xD1B5_4A32_D192_ED03)) ^ tag
}

/// Change points `(b1, b2)` of the labeling `a…a b…b a…a` that disagrees
/// with `labels` the least, and the number of disagreements.
pub fn fit_three_runs(labels: &[usize]) -> Result<(usize, usize, usize)> {
    let n = labels.len();
    if n < 3 {
        return Err(Error::TooSmall { needed: 3, got: n });
    }
    // prefix count of label 0
    let mut zeros = vec![0usize; n + 1];
    for (i, &l) in labels.iter().enumerate() {
        zeros[i + 1] = zeros[i] + usize::from(l == 0);
    }
    let count = |from: usize, to: usize, zero: bool| {
        let z = zeros[to] - zeros[from];
        if zero {
            z
        } else {
            (to - from) - z
        }
    };
    let mut best = (usize::MAX, 0, 0);
    for outer_zero in [true, false] {
        for b1 in 1..n - 1 {
            for b2 in b1 + 1..n {
                let agree = count(0, b1, outer_zero) + count(b1, b2, !outer_zero) + count(b2, n, outer_zero);
                let miss = n - agree;
                if miss < best.0 {
                    best = (miss, b1, b2);
                }
            }
        }
    }
    Ok((best.1, best.2, best.0))
}

/// Window indices centered on each gesture run of `truth`.
pub fn transition_midpoints(truth: &[StateLabel], window: usize) -> Vec<usize> {
    crate::synth::truth_runs(truth)
        .into_iter()
        .filter(|(l, _, _)| l.is_gesture())
        .map(|(_, start, end)| ((start + end - 1) / 2 + window / 2).saturating_sub(window))
        .collect()
}

fn pick(len: usize, count: usize, seed: u64) -> Result<Vec<usize>> {
    let pool = ClusterAssignment { labels: vec![0; len], k: 1 };
    Ok(select_representatives(&pool, count, seed)?.remove(0))
}

fn window_range(center: usize, half: usize, n: usize) -> std::ops::Range<usize> {
    center.saturating_sub(half)..(center + half + 1).min(n)
}

pub fn train_recognizer(set: &TrainingSet, cfg: &TrainConfig) -> Result<TrainOutput> {
    set.check_complete()?;
    let w = cfg.window;
    if w < 2 {
        return Err(Error::InvalidParameter(format!("window must be at least 2, got {w}")));
    }
    let dict_opts = |classes: Vec<String>| DictionaryOptions { lambda: cfg.lambda, center: cfg.center, classes: Some(classes) };

    let mut gesture_cols: Vec<Vec<f64>> = Vec::new();
    let mut gesture_labels: Vec<&'static str> = Vec::new();
    let mut stage1_cols: Vec<Vec<f64>> = Vec::new();
    let mut stage1_labels: Vec<&'static str> = Vec::new();
    let mut reports = Vec::new();
    let mut clusterings = Vec::new();

    for (k, side) in PostureLabel::SIDES.into_iter().enumerate() {
        let stream = &set.transitions[&side];
        let features = feature_windows(&stream.frames, w)?;
        let speeds = speed_windows(&stream.frames, w)?;
        let n = features.len();
        let x = stack_columns(&features.iter().map(|c| c.values.clone()).collect::<Vec<_>>())?;

        let started = Instant::now();
        let clustering = cluster_training_signal(&x, 2, &cfg.osc, sub_seed(cfg.seed, 300 + k as u64))?;
        let seconds = started.elapsed().as_secs_f64();
        for (c, &size) in clustering.assignment.sizes().iter().enumerate() {
            if size < cfg.gesture_columns {
                return Err(Error::ClusterTooSmall { cluster: c, size, needed: cfg.gesture_columns });
            }
        }
        let (b1, b2, mismatches) = fit_three_runs(&clustering.assignment.labels)?;
        if mismatches * 10 > n {
            return Err(Error::ClusterStructure(format!(
                "{side} recording: clusters do not form GoStraight/{side}/GoStraight runs ({mismatches} of {n} windows disagree)"
            )));
        }
        log::info!("{side}: boundaries {b1} and {b2} of {n} windows, silhouette {:.3}", clustering.silhouette);

        // the recording starts at GoStraight, so the first change is the
        // outbound gesture
        let outbound = GestureLabel::between(PostureLabel::GoStraight, side).expect("side posture");
        let inbound = GestureLabel::between(side, PostureLabel::GoStraight).expect("side posture");
        let half = (2 * w).max(cfg.gesture_columns / 2);
        for (g, (b, tag)) in [(outbound, (b1, 0u64)), (inbound, (b2, 1u64))] {
            let pool = window_range(b, half, n);
            let chosen = pick(pool.len(), cfg.gesture_columns, sub_seed(cfg.seed, 400 + 2 * k as u64 + tag))?;
            for i in chosen {
                gesture_cols.push(features[pool.start + i].values.clone());
                gesture_labels.push(g.name());
            }
            let core = window_range(b, cfg.stage1_gesture_columns / 2, n);
            let core = core.start..(core.start + cfg.stage1_gesture_columns).min(n);
            if core.len() < cfg.stage1_gesture_columns {
                return Err(Error::ClusterTooSmall { cluster: tag as usize, size: core.len(), needed: cfg.stage1_gesture_columns });
            }
            for i in core {
                stage1_cols.push(stage1_column(&speeds[i], cfg.stage1_reference));
                stage1_labels.push(STAGE1_TRANSITION);
            }
        }

        reports.push(TransitionReport {
            side: side.name().to_string(),
            windows: n,
            cluster_sizes: clustering.assignment.sizes(),
            boundaries: clustering.assignment.boundaries(),
            change_points: [b1, b2],
            fit_mismatches: mismatches,
            true_midpoints: stream.truth.as_ref().map(|t| transition_midpoints(t, w)),
            silhouette: clustering.silhouette,
            osc_iterations: clustering.osc_iterations,
            osc_converged: clustering.osc_converged,
            final_objective: clustering.final_objective,
            seconds,
        });
        clusterings.push((side, clustering));
    }

    let mut posture_cols: Vec<Vec<f64>> = Vec::new();
    let mut posture_labels: Vec<&'static str> = Vec::new();
    let mut stage1_posture_cols: Vec<Vec<f64>> = Vec::new();
    for (k, p) in PostureLabel::ALL.into_iter().enumerate() {
        let stream = &set.postures[&p];
        let features = feature_windows(&stream.frames, w)?;
        let speeds = speed_windows(&stream.frames, w)?;
        let needed = cfg.posture_columns.max(cfg.stage1_posture_columns);
        if features.len() < needed {
            return Err(Error::ClusterTooSmall { cluster: k, size: features.len(), needed });
        }
        for i in pick(features.len(), cfg.posture_columns, sub_seed(cfg.seed, 500 + k as u64))? {
            posture_cols.push(features[i].values.clone());
            posture_labels.push(p.name());
        }
        for i in pick(speeds.len(), cfg.stage1_posture_columns, sub_seed(cfg.seed, 600 + k as u64))? {
            stage1_posture_cols.push(stage1_column(&speeds[i], cfg.stage1_reference));
        }
    }
    let stage1_posture_count = stage1_posture_cols.len();
    stage1_posture_cols.extend(stage1_cols);
    let mut labels1 = vec![STAGE1_POSTURE; stage1_posture_count];
    labels1.extend(stage1_labels);

    let names = |it: &mut dyn Iterator<Item = &'static str>| it.map(String::from).collect::<Vec<_>>();
    let stage1 = Dictionary::build(&stage1_posture_cols, &labels1, &dict_opts(vec![STAGE1_POSTURE.into(), STAGE1_TRANSITION.into()]))?;
    let postures = Dictionary::build(&posture_cols, &posture_labels, &dict_opts(names(&mut PostureLabel::ALL.iter().map(|p| p.name()))))?;
    let gestures = Dictionary::build(&gesture_cols, &gesture_labels, &dict_opts(names(&mut GestureLabel::ALL.iter().map(|g| g.name()))))?;

    let model = RecognizerModel {
        stage1: PreparedDictionary::new(stage1)?,
        postures: PreparedDictionary::new(postures)?,
        gestures: PreparedDictionary::new(gestures)?,
        window: w,
        classifier: cfg.classifier,
        l1: cfg.l1,
        l1_lambda: cfg.l1_lambda,
        stage1_reference: cfg.stage1_reference,
    };
    model.validate()?;
    let report = TrainingReport {
        format_version: 1,
        window: w,
        seed: cfg.seed,
        stage1_blocks: model.stage1.dictionary.block_sizes(),
        posture_blocks: model.postures.dictionary.block_sizes(),
        gesture_blocks: model.gestures.dictionary.block_sizes(),
        transitions: reports,
    };
    Ok(TrainOutput { model, report, clusterings })
}

/// Synthetic training set at the default noise level.
pub fn default_training_set(seed: u64) -> Result<TrainingSet> {
    TrainingSet::synthetic(TRAINING_SECONDS, DEFAULT_NOISE, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_run_fit_oracle() {
        let mut labels = vec![0; 30];
        labels[10..22].iter_mut().for_each(|v| *v = 1);
        assert_eq!(fit_three_runs(&labels).unwrap(), (10, 22, 0));
        // isolated flips count as mismatches but do not move the fit
        labels[3] = 1;
        labels[15] = 0;
        assert_eq!(fit_three_runs(&labels).unwrap(), (10, 22, 2));
        let inverted: Vec<usize> = labels.iter().map(|v| 1 - v).collect();
        assert_eq!(fit_three_runs(&inverted).unwrap(), (10, 22, 2));
    }

    #[test]
    fn midpoints_from_truth() {
        let s = synth_generate(&bilateral(PostureLabel::TurnLeft, 20.0, 0.0, 1).unwrap()).unwrap();
        let mids = transition_midpoints(s.truth.as_ref().unwrap(), 25);
        assert_eq!(mids.len(), 2);
        let runs = crate::synth::truth_runs(s.truth.as_ref().unwrap());
        // the window at a midpoint index is centered on the gesture run
        for (m, run) in mids.iter().zip(runs.iter().filter(|r| r.0.is_gesture())) {
            let frames = crate::signal::window_frames(m + 25, 25);
            let center = (frames.start + frames.end - 1) / 2;
            assert_eq!(center, (run.1 + run.2 - 1) / 2);
        }
    }

    #[test]
    fn missing_recording_is_reported() {
        let mut set = TrainingSet::synthetic(6.0, 0.02, 3).unwrap();
        set.transitions.remove(&PostureLabel::Stop);
        assert!(matches!(train_recognizer(&set, &TrainConfig::default()), Err(Error::MissingRecording(_))));
        let mut set = TrainingSet::synthetic(6.0, 0.02, 3).unwrap();
        set.postures.remove(&PostureLabel::Reverse);
        assert!(matches!(train_recognizer(&set, &TrainConfig::default()), Err(Error::MissingRecording(_))));
    }

    #[test]
    fn sub_seeds_differ() {
        let seeds: std::collections::BTreeSet<u64> = (0..50).map(|t| sub_seed(7, t)).collect();
        assert_eq!(seeds.len(), 50);
    }
}
