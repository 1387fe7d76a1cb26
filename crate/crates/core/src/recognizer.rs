//! The two-stage decision tree that turns a frame stream into steering
//! commands.
//!
//! While a hand is present, every frame completes a window. Stage 1 decides
//! from the speed window whether the hand is holding a posture or moving
//! between two. Stage 2 classifies the feature window against the posture or
//! the gesture dictionary. The label maps to a steering command, and a
//! majority filter over the last five commands removes isolated spikes.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::classify::{crc_classify, src_classify, ClassResiduals, L1Options, RecognitionResult};
use crate::dictionary::PreparedDictionary;
use crate::error::{Error, Result};
use crate::labels::{map_to_command, GestureLabel, PostureLabel, StateLabel, SteeringCommand};
use crate::signal::{make_speed_window, make_window, FeatureColumn, SignalFrame, SpeedColumn, FEATURE_CHANNELS};

pub const FILTER_DEPTH: usize = 5;
pub const STAGE1_POSTURE: &str = "posture";
pub const STAGE1_TRANSITION: &str = "transition";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MetaState {
    NoHand,
    PostureState,
    TransitionState,
}

impl MetaState {
    pub fn name(self) -> &'static str {
        match self {
            MetaState::NoHand => "NoHand",
            MetaState::PostureState => "PostureState",
            MetaState::TransitionState => "TransitionState",
        }
    }
}

impl fmt::Display for MetaState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MetaState {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "NoHand" => Ok(MetaState::NoHand),
            "PostureState" => Ok(MetaState::PostureState),
            "TransitionState" => Ok(MetaState::TransitionState),
            _ => Err(Error::BadMessage(format!("unknown meta state `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassifierKind {
    #[default]
    Crc,
    Src,
}

impl ClassifierKind {
    pub fn name(self) -> &'static str {
        match self {
            ClassifierKind::Crc => "crc",
            ClassifierKind::Src => "src",
        }
    }
}

impl FromStr for ClassifierKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "crc" => Ok(ClassifierKind::Crc),
            "src" => Ok(ClassifierKind::Src),
            _ => Err(Error::Usage(format!("unknown classifier `{s}` (expected crc or src)"))),
        }
    }
}

/// Majority vote over the last five commands.
#[derive(Debug, Clone, Default)]
pub struct CommandFilter {
    ring: VecDeque<SteeringCommand>,
}

impl CommandFilter {
    pub fn new() -> Self {
        CommandFilter { ring: VecDeque::with_capacity(FILTER_DEPTH) }
    }

    /// Builds a filter already holding `history`, oldest first. Only the last
    /// five entries are kept.
    pub fn with_history(history: &[SteeringCommand]) -> Self {
        let mut f = CommandFilter::new();
        for &c in history {
            f.remember(c);
        }
        f
    }

    fn remember(&mut self, c: SteeringCommand) {
        if self.ring.len() == FILTER_DEPTH {
            self.ring.pop_front();
        }
        self.ring.push_back(c);
    }

    /// Pushes `c` and returns the mode of the ring. Ties go to the value seen
    /// most recently.
    pub fn push(&mut self, c: SteeringCommand) -> SteeringCommand {
        self.remember(c);
        self.mode().expect("ring holds at least the pushed command")
    }

    pub fn mode(&self) -> Option<SteeringCommand> {
        let mut counts = [0usize; 6];
        for c in &self.ring {
            counts[c.value() as usize] += 1;
        }
        let top = *counts.iter().max()?;
        self.ring.iter().rev().find(|c| counts[c.value() as usize] == top).copied()
    }

    pub fn clear(&mut self) {
        self.ring.clear();
    }

    pub fn len(&self) -> usize {
        self.ring.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ring.is_empty()
    }
}

pub fn filter_command(f: &mut CommandFilter, c: SteeringCommand) -> SteeringCommand {
    f.push(c)
}

/// The three trained dictionaries plus the settings that drive the tree.
#[derive(Debug, Clone, PartialEq)]
pub struct RecognizerModel {
    pub stage1: PreparedDictionary,
    pub postures: PreparedDictionary,
    pub gestures: PreparedDictionary,
    pub window: usize,
    pub classifier: ClassifierKind,
    pub l1: L1Options,
    /// Fixed sparse-coding weight; `None` scales it per observation.
    pub l1_lambda: Option<f64>,
    /// Speed appended to every stage-1 column, in the frames' speed units.
    pub stage1_reference: f64,
}

impl RecognizerModel {
    /// Checks the class layout every consumer of the model relies on.
    pub fn validate(&self) -> Result<()> {
        let w = self.window;
        if w < 2 {
            return Err(Error::ModelFormat(format!("window {w} is below 2")));
        }
        let expect = |what: &str, d: &PreparedDictionary, names: Vec<&str>, rows: usize| -> Result<()> {
            let dict = &d.dictionary;
            if dict.class_names().iter().map(String::as_str).ne(names.iter().copied()) {
                return Err(Error::ModelFormat(format!("{what} classes {:?}, expected {:?}", dict.class_names(), names)));
            }
            if dict.rows() != rows {
                return Err(Error::ModelFormat(format!("{what} rows {}, expected {rows}", dict.rows())));
            }
            if d.projector.dims() != (dict.rows(), dict.cols()) {
                return Err(Error::ModelFormat(format!("{what} projector does not match its dictionary")));
            }
            Ok(())
        };
        if !(self.stage1_reference.is_finite() && self.stage1_reference > 0.0) {
            return Err(Error::ModelFormat(format!("stage-1 reference speed {} is not positive", self.stage1_reference)));
        }
        expect("stage1", &self.stage1, vec![STAGE1_POSTURE, STAGE1_TRANSITION], w + 1)?;
        expect("postures", &self.postures, PostureLabel::ALL.iter().map(|p| p.name()).collect(), FEATURE_CHANNELS * w)?;
        expect("gestures", &self.gestures, GestureLabel::ALL.iter().map(|g| g.name()).collect(), FEATURE_CHANNELS * w)?;
        Ok(())
    }

    fn classify(&self, d: &PreparedDictionary, y: &[f64]) -> Result<RecognitionResult> {
        match self.classifier {
            ClassifierKind::Crc => crc_classify(y, &d.dictionary, &d.projector),
            ClassifierKind::Src => src_classify(y, &d.dictionary, self.l1_lambda, &self.l1),
        }
    }

    pub fn with_classifier(&self, classifier: ClassifierKind) -> Self {
        RecognizerModel { classifier, ..self.clone() }
    }
}

/// The speed window with `reference` appended.
///
/// Unit-norm dictionary columns and a scale-free ridge label would
/// otherwise see only the shape of the speed profile. The fixed last entry
/// keeps its magnitude visible: a hand at rest points along that axis, a
/// moving hand away from it.
pub fn stage1_column(s: &SpeedColumn, reference: f64) -> Vec<f64> {
    let mut v = Vec::with_capacity(s.values.len() + 1);
    v.extend_from_slice(&s.values);
    v.push(reference);
    v
}

pub fn stage1_decide(s: &SpeedColumn, model: &RecognizerModel) -> Result<MetaState> {
    if s.values.len() != model.window {
        return Err(Error::WrongWindowLength { expected: model.window, got: s.values.len() });
    }
    let r = model.classify(&model.stage1, &stage1_column(s, model.stage1_reference))?;
    Ok(if r.label == 0 { MetaState::PostureState } else { MetaState::TransitionState })
}

fn check_feature_window(w: &FeatureColumn, model: &RecognizerModel) -> Result<()> {
    let expected = FEATURE_CHANNELS * model.window;
    if w.values.len() != expected {
        return Err(Error::DimensionMismatch { expected, got: w.values.len() });
    }
    Ok(())
}

pub fn classify_posture(w: &FeatureColumn, model: &RecognizerModel) -> Result<(PostureLabel, ClassResiduals)> {
    check_feature_window(w, model)?;
    let r = model.classify(&model.postures, &w.values)?;
    Ok((PostureLabel::ALL[r.label], r.residuals))
}

pub fn classify_gesture(w: &FeatureColumn, model: &RecognizerModel) -> Result<(GestureLabel, ClassResiduals)> {
    check_feature_window(w, model)?;
    let r = model.classify(&model.gestures, &w.values)?;
    Ok((GestureLabel::ALL[r.label], r.residuals))
}

/// The two-stage decision for one window, without filtering.
pub fn classify_window(speed: &SpeedColumn, window: &FeatureColumn, model: &RecognizerModel) -> Result<(MetaState, StateLabel, ClassResiduals)> {
    Ok(match stage1_decide(speed, model)? {
        MetaState::TransitionState => {
            let (g, r) = classify_gesture(window, model)?;
            (MetaState::TransitionState, StateLabel::Gesture(g), r)
        }
        meta => {
            let (p, r) = classify_posture(window, model)?;
            (meta, StateLabel::Posture(p), r)
        }
    })
}

/// One frame of input: a tracked hand, or the report that none is visible.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Observation {
    Present(SignalFrame),
    Absent { t: f64 },
}

/// What the recognizer reports for one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutput {
    pub t: f64,
    pub meta: MetaState,
    pub label: Option<StateLabel>,
    pub raw_command: Option<SteeringCommand>,
    /// The filtered command.
    pub command: Option<SteeringCommand>,
    pub margin: Option<f64>,
}

impl StepOutput {
    /// `t meta raw_label raw_command filtered_command margin`, with `-` for
    /// absent fields.
    pub fn to_record(&self) -> String {
        let opt = |v: Option<String>| v.unwrap_or_else(|| "-".into());
        format!(
            "{:?} {} {} {} {} {}",
            self.t,
            self.meta,
            opt(self.label.map(|l| l.name().to_string())),
            opt(self.raw_command.map(|c| c.to_string())),
            opt(self.command.map(|c| c.to_string())),
            opt(self.margin.map(|m| format!("{m:?}"))),
        )
    }

    pub fn parse_record(line: &str) -> Result<Self> {
        let bad = || Error::BadMessage(format!("bad event record `{line}`"));
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 6 {
            return Err(bad());
        }
        fn opt(s: &str) -> Option<&str> {
            if s == "-" {
                None
            } else {
                Some(s)
            }
        }
        let command = |s: &str| -> Result<Option<SteeringCommand>> {
            opt(s).map(|v| v.parse::<u8>().map_err(|_| bad()).and_then(SteeringCommand::new)).transpose()
        };
        Ok(StepOutput {
            t: fields[0].parse().map_err(|_| bad())?,
            meta: fields[1].parse()?,
            label: opt(fields[2]).map(str::parse).transpose()?,
            raw_command: command(fields[3])?,
            command: command(fields[4])?,
            margin: opt(fields[5]).map(|v| v.parse().map_err(|_| bad())).transpose()?,
        })
    }
}

/// Per-stream recognizer state. The model is shared read-only.
#[derive(Debug, Clone)]
pub struct Recognizer {
    model: Arc<RecognizerModel>,
    buffer: VecDeque<SignalFrame>,
    /// Frames since the hand (re)appeared.
    seen: usize,
    filter: CommandFilter,
}

impl Recognizer {
    pub fn new(model: Arc<RecognizerModel>) -> Self {
        let w = model.window;
        Recognizer { model, buffer: VecDeque::with_capacity(w), seen: 0, filter: CommandFilter::new() }
    }

    pub fn model(&self) -> &Arc<RecognizerModel> {
        &self.model
    }

    pub fn reset(&mut self) {
        self.buffer.clear();
        self.seen = 0;
        self.filter.clear();
    }

    /// Advances by one frame. Returns `None` during warm-up: a window is
    /// classified once more than W frames have arrived since the hand
    /// appeared, matching the offline window positions `W..N`.
    pub fn step(&mut self, obs: Observation) -> Result<Option<StepOutput>> {
        let frame = match obs {
            Observation::Absent { t } => {
                self.reset();
                return Ok(Some(StepOutput { t, meta: MetaState::NoHand, label: None, raw_command: None, command: None, margin: None }));
            }
            Observation::Present(frame) => frame,
        };
        let w = self.model.window;
        if self.buffer.len() == w {
            self.buffer.pop_front();
        }
        self.buffer.push_back(frame);
        self.seen += 1;
        if self.seen <= w {
            return Ok(None);
        }
        let frames = self.buffer.make_contiguous();
        let end = self.seen - 1;
        let speed = make_speed_window(frames, w, end)?;
        let window = make_window(frames, w, end)?;
        let (meta, label, residuals) = classify_window(&speed, &window, &self.model)?;
        let raw = map_to_command(label);
        let filtered = self.filter.push(raw);
        Ok(Some(StepOutput {
            t: frame.t,
            meta,
            label: Some(label),
            raw_command: Some(raw),
            command: Some(filtered),
            margin: Some(residuals.margin),
        }))
    }

    /// Steps through a whole present-hand stream.
    pub fn run(&mut self, frames: &[SignalFrame]) -> Result<Vec<StepOutput>> {
        let mut out = Vec::with_capacity(frames.len().saturating_sub(self.model.window));
        for f in frames {
            if let Some(o) = self.step(Observation::Present(*f))? {
                out.push(o);
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cmd(v: u8) -> SteeringCommand {
        SteeringCommand::new(v).unwrap()
    }

    fn filter_of(values: &[u8]) -> CommandFilter {
        CommandFilter::with_history(&values.iter().map(|&v| cmd(v)).collect::<Vec<_>>())
    }

    #[test]
    fn filter_examples() {
        assert_eq!(filter_of(&[1, 1, 1, 1]).push(cmd(3)), cmd(1));
        assert_eq!(filter_of(&[2, 2, 2, 2]).push(cmd(2)), cmd(2));
        assert_eq!(filter_of(&[1, 1, 2, 2]).push(cmd(2)), cmd(2));
        // warm-up: mode of what is held, ties to the latest
        assert_eq!(CommandFilter::new().push(cmd(4)), cmd(4));
        assert_eq!(filter_of(&[1]).push(cmd(4)), cmd(4));
        assert_eq!(filter_of(&[1, 1, 2, 2]).push(cmd(3)), cmd(2));
    }

    #[test]
    fn filter_capacity_is_five() {
        let mut f = filter_of(&[1, 1, 1, 1, 1, 1, 1]);
        assert_eq!(f.len(), 5);
        f.push(cmd(2));
        f.push(cmd(2));
        assert_eq!(f.push(cmd(2)), cmd(2));
        f.clear();
        assert!(f.is_empty());
    }

    /// Counting oracle: the most frequent value, latest among ties.
    fn oracle(window: &[u8]) -> u8 {
        let count = |v: u8| window.iter().filter(|&&x| x == v).count();
        let top = window.iter().map(|&v| count(v)).max().unwrap();
        *window.iter().rev().find(|&&v| count(v) == top).unwrap()
    }

    proptest! {
        #[test]
        fn filter_matches_counting_oracle(seq in prop::collection::vec(1u8..=5, 1..40)) {
            let mut f = CommandFilter::new();
            for (i, &v) in seq.iter().enumerate() {
                let out = f.push(cmd(v)).value();
                let lo = (i + 1).saturating_sub(FILTER_DEPTH);
                prop_assert_eq!(out, oracle(&seq[lo..=i]));
            }
        }

        #[test]
        fn isolated_spikes_never_pass(base in prop::collection::vec(1u8..=5, 1..6), len in 20usize..80, spikes in prop::collection::vec(any::<prop::sample::Index>(), 0..6), spike_value in 1u8..=5) {
            // long constant runs with single-frame flips kept at least 3 apart
            // and a full filter depth away from run boundaries
            let mut clean = Vec::new();
            for &b in &base {
                clean.extend(std::iter::repeat_n(b, len));
            }
            let mut noisy = clean.clone();
            let mut placed: Vec<usize> = Vec::new();
            for s in &spikes {
                let i = s.index(noisy.len());
                let offset = i % len;
                let inside = offset >= FILTER_DEPTH && offset < len - FILTER_DEPTH;
                if inside && placed.iter().all(|&l| i.abs_diff(l) >= 3) && noisy[i] != spike_value {
                    noisy[i] = spike_value;
                    placed.push(i);
                }
            }
            let mut a = CommandFilter::new();
            let mut b = CommandFilter::new();
            for (x, y) in clean.iter().zip(&noisy) {
                prop_assert_eq!(a.push(cmd(*x)), b.push(cmd(*y)));
            }
        }
    }

    #[test]
    fn record_round_trip() {
        let o = StepOutput {
            t: 0.52,
            meta: MetaState::TransitionState,
            label: Some(StateLabel::Gesture(GestureLabel::Go2Left)),
            raw_command: Some(cmd(2)),
            command: Some(cmd(1)),
            margin: Some(0.125),
        };
        assert_eq!(o.to_record(), "0.52 TransitionState Go2Left 2 1 0.125");
        assert_eq!(StepOutput::parse_record(&o.to_record()).unwrap(), o);
        let none = StepOutput { t: 1.0, meta: MetaState::NoHand, label: None, raw_command: None, command: None, margin: None };
        assert_eq!(none.to_record(), "1.0 NoHand - - - -");
        assert_eq!(StepOutput::parse_record(&none.to_record()).unwrap(), none);
        assert!(StepOutput::parse_record("1.0 NoHand -").is_err());
    }

    #[test]
    fn meta_and_classifier_names() {
        for m in [MetaState::NoHand, MetaState::PostureState, MetaState::TransitionState] {
            assert_eq!(m.name().parse::<MetaState>().unwrap(), m);
        }
        assert_eq!("SRC".parse::<ClassifierKind>().unwrap(), ClassifierKind::Src);
        assert!(matches!("knn".parse::<ClassifierKind>(), Err(Error::Usage(_))));
    }
}
