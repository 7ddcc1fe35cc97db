//! Synthetic plantar-pressure gait generator.
//!
//! Each stance phase is rendered as a midfoot baseline plus two raised-cosine
//! lobes (heel 60 %, forefoot 40 %) spread over the 4x12 insole grid. Rows run
//! heel to toe; columns carry a fixed medial-lateral profile. Per-stride load
//! multipliers are lognormal so the stride-to-stride CV of peak force tracks
//! `stride_cv_target` while staying positive.

use rand::Rng;
use rand_distr::{Distribution, LogNormal, Normal};
use serde::{Deserialize, Serialize};

use super::profile::ImpairmentLevel;
use super::SimError;
use crate::seed;

pub const GRID_ROWS: usize = 4;
pub const GRID_COLS: usize = 12;
pub const CHANNELS: usize = GRID_ROWS * GRID_COLS;
pub const DEFAULT_RATE_HZ: f64 = 200.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Foot {
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AffectedSide {
    Left,
    Right,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaitParams {
    /// strides per second
    pub cadence: f64,
    pub stance_fraction_left: f64,
    pub stance_fraction_right: f64,
    pub peak_force_left: f64,
    pub peak_force_right: f64,
    pub stride_cv_target: f64,
    pub noise_sigma: f64,
    pub affected_side: AffectedSide,
}

impl GaitParams {
    pub fn validate(&self) -> Result<(), SimError> {
        let in_range = |f: f64| (0.3..=0.9).contains(&f);
        if !(self.cadence > 0.0) {
            return Err(SimError::Domain("cadence must be > 0".into()));
        }
        if !in_range(self.stance_fraction_left) || !in_range(self.stance_fraction_right) {
            return Err(SimError::Domain("stance fractions must lie in [0.3, 0.9]".into()));
        }
        if !(self.peak_force_left > 0.0 && self.peak_force_right > 0.0) {
            return Err(SimError::Domain("peak forces must be > 0".into()));
        }
        if !(self.stride_cv_target >= 0.0 && self.noise_sigma >= 0.0) {
            return Err(SimError::Domain("cv target and noise sigma must be >= 0".into()));
        }
        Ok(())
    }

    pub fn stance_fraction(&self, foot: Foot) -> f64 {
        match foot {
            Foot::Left => self.stance_fraction_left,
            Foot::Right => self.stance_fraction_right,
        }
    }

    pub fn peak_force(&self, foot: Foot) -> f64 {
        match foot {
            Foot::Left => self.peak_force_left,
            Foot::Right => self.peak_force_right,
        }
    }

    /// Symmetric parameter set, handy for tests.
    pub fn symmetric(cadence: f64, stance_fraction: f64, peak_force: f64) -> Self {
        Self {
            cadence,
            stance_fraction_left: stance_fraction,
            stance_fraction_right: stance_fraction,
            peak_force_left: peak_force,
            peak_force_right: peak_force,
            stride_cv_target: 0.0,
            noise_sigma: 0.0,
            affected_side: AffectedSide::None,
        }
    }
}

struct LevelPreset {
    cadence: (f64, f64),
    stance: (f64, f64),
    stance_gap: (f64, f64),
    peak: (f64, f64),
    peak_asym: (f64, f64),
    cv: (f64, f64),
}

fn preset(level: ImpairmentLevel) -> LevelPreset {
    match level {
        ImpairmentLevel::Mild => LevelPreset {
            cadence: (0.92, 1.05),
            stance: (0.59, 0.63),
            stance_gap: (0.0, 0.015),
            peak: (750.0, 900.0),
            peak_asym: (0.0, 0.05),
            cv: (0.03, 0.05),
        },
        ImpairmentLevel::Moderate => LevelPreset {
            cadence: (0.82, 0.92),
            stance: (0.62, 0.66),
            stance_gap: (0.045, 0.07),
            peak: (650.0, 800.0),
            peak_asym: (0.17, 0.27),
            cv: (0.09, 0.12),
        },
        ImpairmentLevel::Severe => LevelPreset {
            cadence: (0.72, 0.81),
            stance: (0.64, 0.68),
            stance_gap: (0.10, 0.15),
            peak: (550.0, 700.0),
            peak_asym: (0.38, 0.52),
            cv: (0.17, 0.22),
        },
    }
}

/// Deterministic per-(level, seed) gait parameters. Severity widens stance
/// and peak asymmetry and raises stride variability; the affected foot
/// carries less load and a shorter stance, the unaffected foot compensates
/// with a prolonged stance.
pub fn default_gait_params(level: ImpairmentLevel, seed: u64) -> GaitParams {
    // Draw order is fixed across levels so the same seed lands at the same
    // relative position inside each level's ranges.
    let mut rng = seed::rng(seed, "gait-params");
    let p = preset(level);
    let mut draw = |(lo, hi): (f64, f64)| lo + (hi - lo) * rng.gen::<f64>();
    let cadence = draw(p.cadence);
    let stance = draw(p.stance);
    let gap = draw(p.stance_gap);
    let peak = draw(p.peak);
    let asym = draw(p.peak_asym);
    let cv = draw(p.cv);
    // Clamped noise leaves a positive swing floor of about 0.4 sigma per
    // channel; kept well under 10 % of the weakest affected-foot peak.
    let noise = draw((0.3, 0.6));
    let left_affected = draw((0.0, 1.0)) < 0.5;

    // asymmetry_index(a, u) = (u - a) / ((u + a) / 2) = asym  =>  a = u (2 - asym) / (2 + asym)
    let affected_peak = peak * (2.0 - asym) / (2.0 + asym);
    let (affected_stance, unaffected_stance) = (stance - gap / 2.0, stance + gap / 2.0);
    let (side, sl, sr, pl, pr) = if left_affected {
        (AffectedSide::Left, affected_stance, unaffected_stance, affected_peak, peak)
    } else {
        (AffectedSide::Right, unaffected_stance, affected_stance, peak, affected_peak)
    };
    GaitParams {
        cadence,
        stance_fraction_left: sl,
        stance_fraction_right: sr,
        peak_force_left: pl,
        peak_force_right: pr,
        stride_cv_target: cv,
        noise_sigma: noise,
        affected_side: side,
    }
}

/// One 4x12 insole sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PressureFrame {
    /// ms since session start
    pub timestamp: f64,
    pub foot: Foot,
    #[serde(with = "channels_serde")]
    pub values: [f32; CHANNELS],
}

impl PressureFrame {
    pub fn total(&self) -> f64 {
        self.values.iter().map(|&v| f64::from(v)).sum()
    }
}

mod channels_serde {
    use super::CHANNELS;
    use serde::de::Error;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[f32; CHANNELS], s: S) -> Result<S::Ok, S::Error> {
        v.as_slice().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[f32; CHANNELS], D::Error> {
        let v = Vec::<f32>::deserialize(d)?;
        v.try_into()
            .map_err(|v: Vec<f32>| D::Error::custom(format!("expected {CHANNELS} channels, got {}", v.len())))
    }
}

/// Cadence schedule for one walk.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SpeedProfile {
    #[default]
    Constant,
    /// cadence jumps by 30 % halfway through the walk
    Change,
    /// stop-start shuffling at 0.4 strides/s
    Slow,
}

pub const SLOW_CADENCE: f64 = 0.4;
const SPEED_CHANGE_FACTOR: f64 = 1.3;

/// Generator ground truth for one foot.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StrideTruth {
    /// (onset_ms, stance_ms, load multiplier)
    pub strides: Vec<(f64, f64, f64)>,
}

#[derive(Debug, Clone, Default)]
pub struct Walk {
    pub left: Vec<PressureFrame>,
    pub right: Vec<PressureFrame>,
    pub truth_left: StrideTruth,
    pub truth_right: StrideTruth,
}

const BASELINE: f64 = 0.4;
const LOBE: f64 = 0.6;
const HEEL_SHARE: f64 = 0.6;
const TOE_SHARE: f64 = 0.4;
const HEEL_END: f64 = 0.6;
const TOE_START: f64 = 0.4;
const RAMP: f64 = 0.03;
/// Maximum of the un-scaled stance profile (reached at the heel peak, u = 0.3).
const PROFILE_MAX: f64 = BASELINE + LOBE * HEEL_SHARE;

fn raised_cosine(u: f64, start: f64, end: f64) -> f64 {
    if u < start || u > end {
        return 0.0;
    }
    let phase = (u - start) / (end - start);
    0.5 * (1.0 - (2.0 * std::f64::consts::PI * phase).cos())
}

fn contact_gate(u: f64) -> f64 {
    let edge = u.min(1.0 - u);
    if edge >= RAMP {
        1.0
    } else if edge <= 0.0 {
        0.0
    } else {
        0.5 * (1.0 - (std::f64::consts::PI * edge / RAMP).cos())
    }
}

/// Per-row loading at stance phase `u` in [0, 1]; rows run heel to toe and
/// the four shares sum to the total profile value.
fn row_loading(u: f64) -> [f64; GRID_ROWS] {
    let gate = contact_gate(u);
    let heel = LOBE * HEEL_SHARE * raised_cosine(u, 0.0, HEEL_END);
    let toe = LOBE * TOE_SHARE * raised_cosine(u, TOE_START, 1.0);
    let mid = BASELINE;
    [
        gate * (0.7 * heel),
        gate * (0.3 * heel + 0.5 * mid),
        gate * (0.5 * mid + 0.4 * toe),
        gate * (0.6 * toe),
    ]
}

fn column_profile() -> [f64; GRID_COLS] {
    let mut w = [0.0; GRID_COLS];
    for (c, slot) in w.iter_mut().enumerate() {
        *slot = 0.6 + 0.4 * (std::f64::consts::PI * (c as f64 + 0.5) / GRID_COLS as f64).sin();
    }
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= s);
    w
}

/// Generate both insole streams for a constant-cadence walk.
pub fn generate_walk(params: &GaitParams, duration_s: f64, rate_hz: f64, seed: u64) -> Result<Walk, SimError> {
    generate_walk_with_profile(params, duration_s, rate_hz, seed, SpeedProfile::Constant)
}

pub fn generate_walk_with_profile(
    params: &GaitParams,
    duration_s: f64,
    rate_hz: f64,
    seed: u64,
    profile: SpeedProfile,
) -> Result<Walk, SimError> {
    params.validate()?;
    if !(duration_s >= 0.0) || !(rate_hz > 0.0) {
        return Err(SimError::Domain("duration must be >= 0 and rate > 0".into()));
    }
    let n_frames = (duration_s * rate_hz + 1e-9).floor() as usize;
    let duration_ms = duration_s * 1000.0;
    let cadence_at = |t_ms: f64| match profile {
        SpeedProfile::Constant => params.cadence,
        SpeedProfile::Slow => SLOW_CADENCE,
        SpeedProfile::Change => {
            if t_ms < duration_ms / 2.0 {
                params.cadence
            } else {
                params.cadence * SPEED_CHANGE_FACTOR
            }
        }
    };

    let mut walk = Walk::default();
    for foot in [Foot::Left, Foot::Right] {
        let tag = match foot {
            Foot::Left => "walk-left",
            Foot::Right => "walk-right",
        };
        let mut rng = seed::rng(seed, tag);
        let truth = stride_schedule(params, foot, duration_ms, &cadence_at, &mut rng);
        let frames = render_foot(params, foot, &truth, n_frames, rate_hz, &mut rng);
        match foot {
            Foot::Left => {
                walk.left = frames;
                walk.truth_left = truth;
            }
            Foot::Right => {
                walk.right = frames;
                walk.truth_right = truth;
            }
        }
    }
    Ok(walk)
}

fn stride_schedule(
    params: &GaitParams,
    foot: Foot,
    duration_ms: f64,
    cadence_at: &dyn Fn(f64) -> f64,
    rng: &mut impl Rng,
) -> StrideTruth {
    let cv = params.stride_cv_target;
    let sigma = (1.0 + cv * cv).ln().sqrt();
    let load = LogNormal::new(-sigma * sigma / 2.0, sigma).expect("finite sigma");
    // stride timing jitter grows with variability but stays small
    let timing = Normal::new(0.0, 0.25 * cv).expect("finite sigma");
    let mut t = match foot {
        Foot::Left => 0.0,
        Foot::Right => 500.0 / cadence_at(0.0),
    };
    let mut truth = StrideTruth::default();
    while t < duration_ms {
        let period = 1000.0 / cadence_at(t) * (1.0 + timing.sample(rng)).clamp(0.8, 1.2);
        let stance = params.stance_fraction(foot) * period;
        let m = if sigma > 0.0 { load.sample(rng) } else { 1.0 };
        truth.strides.push((t, stance, m));
        t += period;
    }
    truth
}

fn render_foot(
    params: &GaitParams,
    foot: Foot,
    truth: &StrideTruth,
    n_frames: usize,
    rate_hz: f64,
    rng: &mut impl Rng,
) -> Vec<PressureFrame> {
    let cols = column_profile();
    let noise = (params.noise_sigma > 0.0).then(|| Normal::new(0.0, params.noise_sigma).expect("finite sigma"));
    let scale = params.peak_force(foot) / PROFILE_MAX;
    let dt = 1000.0 / rate_hz;
    let mut frames = Vec::with_capacity(n_frames);
    let mut stride_idx = 0usize;
    for k in 0..n_frames {
        let t = k as f64 * dt;
        while stride_idx + 1 < truth.strides.len() && truth.strides[stride_idx + 1].0 <= t {
            stride_idx += 1;
        }
        let rows = match truth.strides.get(stride_idx) {
            Some(&(onset, stance, m)) if t >= onset && t < onset + stance => {
                let u = (t - onset) / stance;
                row_loading(u).map(|r| r * scale * m)
            }
            _ => [0.0; GRID_ROWS],
        };
        let mut values = [0f32; CHANNELS];
        for r in 0..GRID_ROWS {
            for c in 0..GRID_COLS {
                let mut v = rows[r] * cols[c];
                if let Some(n) = &noise {
                    v += n.sample(rng);
                }
                // 0.1-unit ADC resolution
                values[r * GRID_COLS + c] = ((v.max(0.0) * 10.0).round() / 10.0) as f32;
            }
        }
        frames.push(PressureFrame {
            timestamp: t,
            foot,
            values,
        });
    }
    frames
}
