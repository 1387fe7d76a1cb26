//! Frames, sliding windows and the line-oriented stream file format.
//!
//! A frame carries the six posture features (unit palm normal plus roll,
//! pitch and yaw) and the palm velocity. Windows are flattened channel-major:
//! channel `c` occupies positions `[c*W, (c+1)*W)` of a [`FeatureColumn`].
//!
//! A stream of `N` frames scanned with stride one yields `N - W` windows whose
//! last frame has index `W..N`; frame 0 never ends a window. This reproduces
//! the 975 windows obtained from a 1000-sample recording with `W = 25`.

use std::fmt::Write as _;
use std::fs;
use std::ops::Range;
use std::path::Path;

use crate::error::{Error, Result};
use crate::labels::StateLabel;

pub const FEATURE_CHANNELS: usize = 6;
pub const DEFAULT_WINDOW: usize = 25;
pub const DEFAULT_RATE_HZ: f64 = 50.0;

const ZERO_NORMAL_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignalFrame {
    /// Seconds.
    pub t: f64,
    pub palm_normal: [f64; 3],
    /// Radians.
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
    /// mm/s.
    pub palm_velocity: [f64; 3],
}

impl SignalFrame {
    /// `(n_x, n_y, n_z, roll, pitch, yaw)`.
    pub fn features(&self) -> [f64; FEATURE_CHANNELS] {
        let [nx, ny, nz] = self.palm_normal;
        [nx, ny, nz, self.roll, self.pitch, self.yaw]
    }

    /// Magnitude of the palm velocity.
    pub fn speed(&self) -> f64 {
        let [vx, vy, vz] = self.palm_velocity;
        (vx * vx + vy * vy + vz * vz).sqrt()
    }

    /// Values in stream-file order: `t nx ny nz roll pitch yaw vx vy vz`.
    pub fn to_raw(&self) -> [f64; 10] {
        let [nx, ny, nz] = self.palm_normal;
        let [vx, vy, vz] = self.palm_velocity;
        [self.t, nx, ny, nz, self.roll, self.pitch, self.yaw, vx, vy, vz]
    }
}

/// Validates a raw record and renormalizes the palm normal.
///
/// A normal whose length is already within `1e-12` of one is kept bit for
/// bit, so ingesting an ingested frame again is the identity.
pub fn ingest_frame(raw: &[f64; 10]) -> Result<SignalFrame> {
    if raw.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput);
    }
    let [t, nx, ny, nz, roll, pitch, yaw, vx, vy, vz] = *raw;
    let norm = (nx * nx + ny * ny + nz * nz).sqrt();
    if norm < ZERO_NORMAL_EPS {
        return Err(Error::ZeroNormal);
    }
    let palm_normal = if (norm - 1.0).abs() <= 1e-12 {
        [nx, ny, nz]
    } else {
        [nx / norm, ny / norm, nz / norm]
    };
    Ok(SignalFrame { t, palm_normal, roll, pitch, yaw, palm_velocity: [vx, vy, vz] })
}

/// Builds a frame from the six features and a scalar speed, as received from
/// clients that send precomputed features. The speed is stored along x.
pub fn frame_from_features(t: f64, features: &[f64; FEATURE_CHANNELS], speed: f64) -> Result<SignalFrame> {
    if !(speed >= 0.0) {
        return Err(Error::NonFiniteInput);
    }
    let [nx, ny, nz, roll, pitch, yaw] = *features;
    ingest_frame(&[t, nx, ny, nz, roll, pitch, yaw, speed, 0.0, 0.0])
}

/// Flattened observation window, channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureColumn {
    pub values: Vec<f64>,
    pub window_end_index: usize,
}

impl FeatureColumn {
    pub fn window(&self) -> usize {
        self.values.len() / FEATURE_CHANNELS
    }

    /// Splits the column back into its six channel series.
    pub fn unflatten(&self) -> [Vec<f64>; FEATURE_CHANNELS] {
        let w = self.window();
        std::array::from_fn(|c| self.values[c * w..(c + 1) * w].to_vec())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpeedColumn {
    pub values: Vec<f64>,
    pub window_end_index: usize,
}

fn check_window(frames: &[SignalFrame], window: usize) -> Result<()> {
    if window == 0 || frames.len() != window {
        return Err(Error::WrongWindowLength { expected: window, got: frames.len() });
    }
    Ok(())
}

pub fn make_window(frames: &[SignalFrame], window: usize, window_end_index: usize) -> Result<FeatureColumn> {
    check_window(frames, window)?;
    let mut values = vec![0.0; FEATURE_CHANNELS * window];
    for (i, frame) in frames.iter().enumerate() {
        for (c, v) in frame.features().into_iter().enumerate() {
            values[c * window + i] = v;
        }
    }
    Ok(FeatureColumn { values, window_end_index })
}

pub fn make_speed_window(frames: &[SignalFrame], window: usize, window_end_index: usize) -> Result<SpeedColumn> {
    check_window(frames, window)?;
    Ok(SpeedColumn { values: frames.iter().map(SignalFrame::speed).collect(), window_end_index })
}

/// Frame range covered by the window ending at `end` (inclusive).
pub fn window_frames(end: usize, window: usize) -> Range<usize> {
    end + 1 - window..end + 1
}

/// End indices of every stride-one window over `n` frames: `window..n`.
pub fn window_ends(n: usize, window: usize) -> Range<usize> {
    if n <= window {
        0..0
    } else {
        window..n
    }
}

pub fn window_count(n: usize, window: usize) -> usize {
    window_ends(n, window).len()
}

/// All feature windows of a frame sequence.
pub fn feature_windows(frames: &[SignalFrame], window: usize) -> Result<Vec<FeatureColumn>> {
    window_ends(frames.len(), window)
        .map(|end| make_window(&frames[window_frames(end, window)], window, end))
        .collect()
}

pub fn speed_windows(frames: &[SignalFrame], window: usize) -> Result<Vec<SpeedColumn>> {
    window_ends(frames.len(), window)
        .map(|end| make_speed_window(&frames[window_frames(end, window)], window, end))
        .collect()
}

/// Linear interpolation onto `len` uniformly spaced points of `[0, 1]`.
pub fn resample_to_length(signal: &[f64], len: usize) -> Result<Vec<f64>> {
    if signal.len() < 2 {
        return Err(Error::TooShort { needed: 2, got: signal.len() });
    }
    if len < 2 {
        return Err(Error::TooShort { needed: 2, got: len });
    }
    if len == signal.len() {
        return Ok(signal.to_vec());
    }
    let last = (signal.len() - 1) as f64;
    let out = (0..len)
        .map(|k| {
            if k == len - 1 {
                return signal[signal.len() - 1];
            }
            let pos = k as f64 * last / (len - 1) as f64;
            let i = pos.floor() as usize;
            let frac = pos - i as f64;
            if frac == 0.0 {
                signal[i]
            } else {
                signal[i] + (signal[i + 1] - signal[i]) * frac
            }
        })
        .collect();
    Ok(out)
}

pub fn zero_pad(v: &[f64], target: usize) -> Result<Vec<f64>> {
    if target < v.len() {
        return Err(Error::TargetTooSmall { target, len: v.len() });
    }
    let mut out = v.to_vec();
    out.resize(target, 0.0);
    Ok(out)
}

/// Frames with optional per-frame ground truth.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LabeledStream {
    pub frames: Vec<SignalFrame>,
    pub truth: Option<Vec<StateLabel>>,
}

impl LabeledStream {
    pub fn new(frames: Vec<SignalFrame>, truth: Option<Vec<StateLabel>>) -> Result<Self> {
        if let Some(t) = &truth {
            if t.len() != frames.len() {
                return Err(Error::DimensionMismatch { expected: frames.len(), got: t.len() });
            }
        }
        Ok(LabeledStream { frames, truth })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Serializes to the stream file format, one frame per line:
    /// `t nx ny nz roll pitch yaw vx vy vz [label]`.
    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(self.frames.len() * 160);
        for (i, frame) in self.frames.iter().enumerate() {
            let raw = frame.to_raw();
            for (k, v) in raw.iter().enumerate() {
                if k > 0 {
                    out.push(' ');
                }
                // `{:?}` prints the shortest representation that round-trips.
                let _ = write!(out, "{v:?}");
            }
            if let Some(truth) = &self.truth {
                out.push(' ');
                out.push_str(truth[i].name());
            }
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut frames = Vec::new();
        let mut truth: Vec<StateLabel> = Vec::new();
        let mut labeled: Option<bool> = None;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |msg: String| Error::Parse { path: origin.to_string(), line: lineno + 1, msg };
            let fields: Vec<&str> = line.split_whitespace().collect();
            let has_label = match fields.len() {
                10 => false,
                11 => true,
                n => return Err(err(format!("expected 10 or 11 fields, found {n}"))),
            };
            match labeled {
                None => labeled = Some(has_label),
                Some(l) if l != has_label => return Err(err("label column present on some lines only".into())),
                _ => {}
            }
            let mut raw = [0.0; 10];
            for (slot, field) in raw.iter_mut().zip(&fields[..10]) {
                *slot = field.parse().map_err(|_| err(format!("invalid number `{field}`")))?;
            }
            let frame = ingest_frame(&raw).map_err(|e| err(e.to_string()))?;
            if let Some(prev) = frames.last() {
                let prev: &SignalFrame = prev;
                if frame.t <= prev.t {
                    return Err(err("timestamps must be strictly increasing".into()));
                }
            }
            frames.push(frame);
            if has_label {
                truth.push(fields[10].parse().map_err(|e: Error| err(e.to_string()))?);
            }
        }
        let truth = if labeled == Some(true) { Some(truth) } else { None };
        LabeledStream::new(frames, truth)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}
