//! Seeded synthetic hand-signal generator.
//!
//! Each posture holds a fixed anchor feature tuple; a transition blends the
//! two anchors with a smoothstep ramp while the palm moves with a bell-shaped
//! speed profile. Every transition starts or ends at GoStraight.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::labels::{GestureLabel, PostureLabel, StateLabel};
use crate::signal::{ingest_frame, LabeledStream, DEFAULT_RATE_HZ, FEATURE_CHANNELS};

pub const DEFAULT_TRANSITION_SECONDS: f64 = 0.5;
pub const DEFAULT_NOISE: f64 = 0.02;
/// Peak palm speed during a transition, mm/s.
pub const PEAK_SPEED: f64 = 300.0;
/// Per-axis velocity noise in mm/s per unit of `noise`.
pub const VELOCITY_NOISE_SCALE: f64 = 250.0;

/// Anchor features `(n_x, n_y, n_z, roll, pitch, yaw)` of a posture.
pub fn anchor(p: PostureLabel) -> [f64; FEATURE_CHANNELS] {
    let (sr, cr) = 0.6f64.sin_cos();
    let (sp, cp) = 0.7f64.sin_cos();
    match p {
        PostureLabel::GoStraight => [0.0, -1.0, 0.0, 0.0, 0.0, 0.0],
        PostureLabel::TurnLeft => [-sr, -cr, 0.0, -0.6, 0.0, 0.15],
        PostureLabel::TurnRight => [sr, -cr, 0.0, 0.6, 0.0, -0.15],
        PostureLabel::Stop => [0.0, -cp, sp, 0.0, 0.7, 0.0],
        PostureLabel::Reverse => [0.0, -cp, -sp, 0.0, -0.7, 0.0],
    }
}

/// Unit direction of palm travel when leaving GoStraight towards `p`.
fn travel_direction(p: PostureLabel) -> [f64; 3] {
    match p {
        PostureLabel::GoStraight => [0.0, 0.0, 0.0],
        PostureLabel::TurnLeft => [-1.0, 0.0, 0.0],
        PostureLabel::TurnRight => [1.0, 0.0, 0.0],
        PostureLabel::Stop => [0.0, 0.0, 1.0],
        PostureLabel::Reverse => [0.0, 0.0, -1.0],
    }
}

pub fn smoothstep(u: f64) -> f64 {
    let u = u.clamp(0.0, 1.0);
    u * u * (3.0 - 2.0 * u)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub posture: PostureLabel,
    /// Seconds the posture is held.
    pub dwell: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub segments: Vec<Segment>,
    /// Seconds per transition.
    pub transition: f64,
    pub rate_hz: f64,
    /// Feature noise standard deviation; velocity noise scales with it.
    pub noise: f64,
    pub seed: u64,
}

impl Scenario {
    /// Postures sharing `total` seconds evenly after the transitions.
    pub fn even(postures: &[PostureLabel], total: f64, noise: f64, seed: u64) -> Result<Self> {
        if postures.is_empty() {
            return Err(Error::BadScenario("no postures".into()));
        }
        let transition = DEFAULT_TRANSITION_SECONDS;
        let transitions = (postures.len() - 1) as f64 * transition;
        let dwell = (total - transitions) / postures.len() as f64;
        if !(dwell >= 0.0) {
            return Err(Error::BadScenario(format!(
                "{total} s cannot hold {} postures and their transitions",
                postures.len()
            )));
        }
        Ok(Scenario {
            segments: postures.iter().map(|&posture| Segment { posture, dwell }).collect(),
            transition,
            rate_hz: DEFAULT_RATE_HZ,
            noise,
            seed,
        })
    }

    /// Parses `Name[:seconds],Name[:seconds],...`. Segments without an
    /// explicit dwell share what remains of `total` seconds.
    pub fn parse(spec: &str, total: Option<f64>, noise: f64, seed: u64) -> Result<Self> {
        let mut postures = Vec::new();
        let mut dwell: Vec<Option<f64>> = Vec::new();
        for item in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let (name, secs) = match item.split_once(':') {
                Some((n, s)) => {
                    let v: f64 = s
                        .trim()
                        .parse()
                        .map_err(|_| Error::BadScenario(format!("bad dwell `{s}`")))?;
                    (n.trim(), Some(v))
                }
                None => (item, None),
            };
            postures.push(name.parse::<PostureLabel>()?);
            dwell.push(secs);
        }
        if postures.is_empty() {
            return Err(Error::BadScenario("empty scenario".into()));
        }
        let transition = DEFAULT_TRANSITION_SECONDS;
        let fixed: f64 = dwell.iter().flatten().sum();
        let open = dwell.iter().filter(|d| d.is_none()).count();
        let transitions = (postures.len() - 1) as f64 * transition;
        let share = if open == 0 {
            0.0
        } else {
            let total = total.ok_or_else(|| Error::BadScenario("segment without dwell and no total duration".into()))?;
            (total - transitions - fixed) / open as f64
        };
        let scenario = Scenario {
            segments: postures
                .iter()
                .zip(&dwell)
                .map(|(&posture, d)| Segment { posture, dwell: d.unwrap_or(share) })
                .collect(),
            transition,
            rate_hz: DEFAULT_RATE_HZ,
            noise,
            seed,
        };
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn total_duration(&self) -> f64 {
        let dwell: f64 = self.segments.iter().map(|s| s.dwell).sum();
        dwell + self.segments.len().saturating_sub(1) as f64 * self.transition
    }

    pub fn transition_frames(&self) -> usize {
        (self.transition * self.rate_hz).round() as usize
    }

    pub fn frame_count(&self) -> usize {
        let dwell: f64 = self.segments.iter().map(|s| s.dwell).sum();
        (dwell * self.rate_hz).round() as usize + self.segments.len().saturating_sub(1) * self.transition_frames()
    }

    pub fn validate(&self) -> Result<()> {
        if self.segments.is_empty() {
            return Err(Error::BadScenario("empty scenario".into()));
        }
        if !(self.rate_hz > 0.0) || !self.rate_hz.is_finite() {
            return Err(Error::BadScenario("rate must be positive".into()));
        }
        if !(self.noise >= 0.0) || !self.noise.is_finite() {
            return Err(Error::BadScenario("noise must be non-negative".into()));
        }
        if !(self.transition >= 0.0) || !self.transition.is_finite() {
            return Err(Error::BadScenario("transition duration must be non-negative".into()));
        }
        if self.segments.iter().any(|s| !(s.dwell >= 0.0) || !s.dwell.is_finite()) {
            return Err(Error::BadScenario("dwell durations must be non-negative".into()));
        }
        for pair in self.segments.windows(2) {
            let (a, b) = (pair[0].posture, pair[1].posture);
            if GestureLabel::between(a, b).is_none() {
                return Err(Error::IllegalTransition { from: a.to_string(), to: b.to_string() });
            }
        }
        if self.frame_count() == 0 {
            return Err(Error::BadScenario("scenario has zero duration".into()));
        }
        Ok(())
    }
}

enum Piece {
    Hold(PostureLabel),
    Move { gesture: GestureLabel, start: usize, len: usize },
}

/// Generates a labeled stream for the scenario. Deterministic given the seed.
pub fn synth_generate(scenario: &Scenario) -> Result<LabeledStream> {
    scenario.validate()?;
    let rate = scenario.rate_hz;
    let n = scenario.frame_count();

    // hold lengths come from rounded cumulative dwell times; every
    // transition spans exactly `move_len` frames
    let move_len = scenario.transition_frames();
    let mut pieces: Vec<(usize, Piece)> = Vec::new();
    let mut dwell = 0.0;
    for (k, seg) in scenario.segments.iter().enumerate() {
        dwell += seg.dwell;
        let end = (dwell * rate).round() as usize + k * move_len;
        pieces.push((end, Piece::Hold(seg.posture)));
        if let Some(next) = scenario.segments.get(k + 1) {
            let gesture = GestureLabel::between(seg.posture, next.posture).expect("validated");
            pieces.push((end + move_len, Piece::Move { gesture, start: end, len: move_len }));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    let feature_noise = Normal::new(0.0, scenario.noise).map_err(|e| Error::BadScenario(e.to_string()))?;
    let velocity_noise =
        Normal::new(0.0, scenario.noise * VELOCITY_NOISE_SCALE).map_err(|e| Error::BadScenario(e.to_string()))?;

    let mut frames = Vec::with_capacity(n);
    let mut truth = Vec::with_capacity(n);
    let mut piece = 0;
    for i in 0..n {
        while piece + 1 < pieces.len() && i >= pieces[piece].0 {
            piece += 1;
        }
        let (features, velocity, label) = match &pieces[piece].1 {
            Piece::Hold(p) => (anchor(*p), [0.0; 3], StateLabel::Posture(*p)),
            Piece::Move { gesture, start, len } => {
                let (from, to) = gesture.endpoints();
                let u = (i - start + 1) as f64 / (*len + 1) as f64;
                let s = smoothstep(u);
                let (a, b) = (anchor(from), anchor(to));
                let features = std::array::from_fn(|c| a[c] + (b[c] - a[c]) * s);
                let sign = if from == PostureLabel::GoStraight { 1.0 } else { -1.0 };
                let dir = travel_direction(gesture.side());
                let speed = PEAK_SPEED * 4.0 * u * (1.0 - u);
                let velocity = dir.map(|d| sign * d * speed);
                (features, velocity, StateLabel::Gesture(*gesture))
            }
        };
        let mut raw = [0.0; 10];
        raw[0] = i as f64 / rate;
        for c in 0..FEATURE_CHANNELS {
            raw[1 + c] = features[c] + feature_noise.sample(&mut rng);
        }
        for c in 0..3 {
            raw[7 + c] = velocity[c] + velocity_noise.sample(&mut rng);
        }
        frames.push(ingest_frame(&raw)?);
        truth.push(label);
    }
    LabeledStream::new(frames, Some(truth))
}

/// Labels of the frames of a generated stream, compressed to runs.
pub fn truth_runs(truth: &[StateLabel]) -> Vec<(StateLabel, usize, usize)> {
    let mut runs: Vec<(StateLabel, usize, usize)> = Vec::new();
    for (i, &l) in truth.iter().enumerate() {
        match runs.last_mut() {
            Some((last, _, end)) if *last == l => *end = i + 1,
            _ => runs.push((l, i, i + 1)),
        }
    }
    runs
}

/// Twelve 20 s evaluation scenarios: four that alternate GoStraight with a
/// single other posture, and eight tours through randomly ordered postures.
pub fn evaluation_scenarios(noise: f64, seed: u64) -> Vec<(String, Scenario)> {
    use rand::seq::SliceRandom;
    use PostureLabel::*;
    let mut out = Vec::new();
    for (k, side) in PostureLabel::SIDES.into_iter().enumerate() {
        let postures = [GoStraight, side, GoStraight, side, GoStraight];
        let s = Scenario::even(&postures, 20.0, noise, seed.wrapping_add(1000 + k as u64)).expect("fits");
        out.push((format!("alternate_{}", side.name()), s));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x005e_ed70_u64);
    for k in 0..8 {
        let mut sides = PostureLabel::SIDES.to_vec();
        sides.shuffle(&mut rng);
        let mut postures = vec![GoStraight];
        for s in sides {
            postures.push(s);
            postures.push(GoStraight);
        }
        let s = Scenario::even(&postures, 20.0, noise, seed.wrapping_add(2000 + k as u64)).expect("fits");
        out.push((format!("tour_{k}"), s));
    }
    out
}

/// GoStraight, `side`, GoStraight over `total` seconds: the side posture is
/// held twice as long as each GoStraight hold, so both postures cover about
/// half the recording.
pub fn bilateral(side: PostureLabel, total: f64, noise: f64, seed: u64) -> Result<Scenario> {
    let transition = DEFAULT_TRANSITION_SECONDS;
    let quarter = (total - 2.0 * transition) / 4.0;
    if !(quarter > 0.0) {
        return Err(Error::BadScenario(format!("{total} s is too short for a bilateral recording")));
    }
    let scenario = Scenario {
        segments: vec![
            Segment { posture: PostureLabel::GoStraight, dwell: quarter },
            Segment { posture: side, dwell: 2.0 * quarter },
            Segment { posture: PostureLabel::GoStraight, dwell: quarter },
        ],
        transition,
        rate_hz: DEFAULT_RATE_HZ,
        noise,
        seed,
    };
    scenario.validate()?;
    Ok(scenario)
}

/// Convenience for a single held posture.
pub fn hold(posture: PostureLabel, seconds: f64, noise: f64, seed: u64) -> Result<LabeledStream> {
    synth_generate(&Scenario::even(&[posture], seconds, noise, seed)?)
}
