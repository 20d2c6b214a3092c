//! Temporal alignment of the sensor streams and event-stream framing.
//!
//! Clocks are aligned by the jump that starts every capture: the apex shows
//! up as a prominent peak in both the IMU and the LiDAR pelvis-height
//! traces, and the matched peak times give a constant clock offset.

mod events;

use crate::body::rotation::slerp_axis_angle;
use crate::body::{PoseFrame, NUM_JOINTS};
use crate::error::{Error, Result};

pub use events::{
    accumulate_event_image, denoise_events, frame_events, Event, EventFrame, EventImage,
    EventStream, FramedEvents, DEFAULT_DENOISE_RADIUS, DEFAULT_DENOISE_WINDOW,
};

pub const DEFAULT_MIN_PROMINENCE: f64 = 0.3;
pub const DEFAULT_MATCH_WINDOW: f64 = 0.5;

/// Scalar samples on strictly increasing timestamps (seconds).
#[derive(Debug, Clone, PartialEq)]
pub struct SampledSeries {
    timestamps: Vec<f64>,
    values: Vec<f64>,
}

impl SampledSeries {
    pub fn new(timestamps: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if timestamps.len() != values.len() {
            return Err(Error::validation(format!(
                "series has {} timestamps but {} values",
                timestamps.len(),
                values.len()
            )));
        }
        if timestamps.iter().chain(&values).any(|v| !v.is_finite()) {
            return Err(Error::validation("series contains non-finite samples"));
        }
        if let Some(i) = timestamps.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::validation(format!(
                "timestamps must increase strictly (index {})",
                i + 1
            )));
        }
        Ok(Self { timestamps, values })
    }

    /// Uniformly sampled series starting at `start`.
    pub fn uniform(start: f64, rate: f64, values: Vec<f64>) -> Result<Self> {
        let t = (0..values.len()).map(|k| start + k as f64 / rate).collect();
        Self::new(t, values)
    }

    pub fn timestamps(&self) -> &[f64] {
        &self.timestamps
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Same samples with every timestamp moved by `dt`.
    pub fn shifted(&self, dt: f64) -> Self {
        Self {
            timestamps: self.timestamps.iter().map(|t| t + dt).collect(),
            values: self.values.clone(),
        }
    }
}

/// A local maximum and its topographic prominence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    /// First sample of the (possibly flat) maximum.
    pub index: usize,
    /// Apex time, refined by a parabola through the neighbours when the
    /// maximum is a single sample.
    pub time: f64,
    pub height: f64,
    pub prominence: f64,
}

/// All interior local maxima with their prominence, in time order.
pub fn find_peaks(series: &SampledSeries) -> Result<Vec<Peak>> {
    let v = &series.values;
    let t = &series.timestamps;
    let n = v.len();
    if n < 3 {
        return Err(Error::validation(format!(
            "peak detection needs at least 3 samples, got {n}"
        )));
    }
    let mut peaks = Vec::new();
    let mut i = 1;
    while i < n - 1 {
        if v[i] > v[i - 1] {
            let mut j = i;
            while j + 1 < n && v[j + 1] == v[i] {
                j += 1;
            }
            if j + 1 < n && v[j + 1] < v[i] {
                let prominence = v[i] - base_level(v, i, j);
                let time = if i == j { refine_apex(t, v, i) } else { t[i] };
                peaks.push(Peak {
                    index: i,
                    time,
                    height: v[i],
                    prominence,
                });
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    Ok(peaks)
}

/// Higher of the two minima separating a plateau `[i, j]` from the nearest
/// strictly higher samples (or the series ends) on either side.
fn base_level(v: &[f64], i: usize, j: usize) -> f64 {
    let h = v[i];
    let mut left = h;
    for k in (0..i).rev() {
        if v[k] > h {
            break;
        }
        left = left.min(v[k]);
    }
    let mut right = h;
    for &x in &v[j + 1..] {
        if x > h {
            break;
        }
        right = right.min(x);
    }
    left.max(right)
}

fn refine_apex(t: &[f64], v: &[f64], i: usize) -> f64 {
    let (t0, t1, t2) = (t[i - 1], t[i], t[i + 1]);
    let s01 = (v[i] - v[i - 1]) / (t1 - t0);
    let s12 = (v[i + 1] - v[i]) / (t2 - t1);
    let a = (s12 - s01) / (t2 - t0);
    if !(a < 0.0) {
        return t1;
    }
    let b = s01 - a * (t0 + t1);
    (-b / (2.0 * a)).clamp(t0, t2)
}

/// Times of the peaks whose prominence reaches `min_prominence`.
pub fn detect_jump_peaks(series: &SampledSeries, min_prominence: f64) -> Result<Vec<f64>> {
    if !(min_prominence.is_finite() && min_prominence >= 0.0) {
        return Err(Error::validation("min_prominence must be finite and >= 0"));
    }
    Ok(find_peaks(series)?
        .into_iter()
        .filter(|p| p.prominence >= min_prominence)
        .map(|p| p.time)
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyncParams {
    pub min_prominence: f64,
    /// Maximum residual (seconds) for two peaks to be matched once the
    /// first-peak offset is applied.
    pub match_window: f64,
}

impl Default for SyncParams {
    fn default() -> Self {
        Self {
            min_prominence: DEFAULT_MIN_PROMINENCE,
            match_window: DEFAULT_MATCH_WINDOW,
        }
    }
}

/// Offset (seconds) to add to `b`'s clock so its jump peaks line up with
/// `a`'s.
pub fn estimate_offset(a: &SampledSeries, b: &SampledSeries, min_prominence: f64) -> Result<f64> {
    estimate_offset_with(
        a,
        "a",
        b,
        "b",
        &SyncParams {
            min_prominence,
            ..Default::default()
        },
    )
}

/// [`estimate_offset`] with named streams (reported on failure) and explicit
/// matching parameters.
pub fn estimate_offset_with(
    a: &SampledSeries,
    a_name: &str,
    b: &SampledSeries,
    b_name: &str,
    params: &SyncParams,
) -> Result<f64> {
    let pa = detect_jump_peaks(a, params.min_prominence)?;
    if pa.is_empty() {
        return Err(Error::SyncFailure {
            stream: a_name.to_string(),
        });
    }
    let pb = detect_jump_peaks(b, params.min_prominence)?;
    if pb.is_empty() {
        return Err(Error::SyncFailure {
            stream: b_name.to_string(),
        });
    }
    let coarse = pa[0] - pb[0];
    let mut used = vec![false; pb.len()];
    let mut diffs = Vec::new();
    for ta in &pa {
        let mut best: Option<(usize, f64)> = None;
        for (k, tb) in pb.iter().enumerate() {
            if used[k] {
                continue;
            }
            let r = (tb + coarse - ta).abs();
            if r <= params.match_window && best.map_or(true, |(_, br)| r < br) {
                best = Some((k, r));
            }
        }
        if let Some((k, _)) = best {
            used[k] = true;
            diffs.push(ta - pb[k]);
        }
    }
    // the first peaks always match each other at zero residual
    Ok(diffs.iter().sum::<f64>() / diffs.len() as f64)
}

/// Linear interpolation onto a uniform `target_rate` grid starting at the
/// first timestamp.
pub fn resample(series: &SampledSeries, target_rate: f64) -> Result<SampledSeries> {
    if !(target_rate.is_finite() && target_rate > 0.0) {
        return Err(Error::validation("target rate must be positive"));
    }
    let t = &series.timestamps;
    let v = &series.values;
    if t.is_empty() {
        return Err(Error::validation("cannot resample an empty series"));
    }
    let t0 = t[0];
    let span = t[t.len() - 1] - t0;
    let period = 1.0 / target_rate;
    if span + 1e-9 * period < period {
        return Err(Error::validation(format!(
            "series spans {span} s, less than one target period ({period} s)"
        )));
    }
    let count = (span * target_rate + 1e-9).floor() as usize + 1;
    let snap = 1e-9 * period;
    let mut out_t = Vec::with_capacity(count);
    let mut out_v = Vec::with_capacity(count);
    let mut seg = 0;
    for k in 0..count {
        let tk = t0 + k as f64 / target_rate;
        while seg + 1 < t.len() && t[seg + 1] <= tk + snap {
            seg += 1;
        }
        let value = if (tk - t[seg]).abs() <= snap || seg + 1 == t.len() {
            v[seg]
        } else {
            let w = (tk - t[seg]) / (t[seg + 1] - t[seg]);
            v[seg] + (v[seg + 1] - v[seg]) * w
        };
        out_t.push(tk);
        out_v.push(value);
    }
    SampledSeries::new(out_t, out_v)
}

/// Interpolates a timestamped pose stream at `query` times: translations
/// linearly, joint rotations by slerp. Queries outside the stream clamp to
/// the nearest end.
pub fn resample_poses(times: &[f64], poses: &[PoseFrame], query: &[f64]) -> Result<Vec<PoseFrame>> {
    if times.len() != poses.len() || times.is_empty() {
        return Err(Error::validation(
            "pose stream needs matching, non-empty times and poses",
        ));
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::validation(
            "pose stream timestamps must increase strictly",
        ));
    }
    let mut out = Vec::with_capacity(query.len());
    for &q in query {
        let k = times.partition_point(|&t| t <= q);
        let frame = if k == 0 {
            poses[0]
        } else if k == times.len() {
            poses[times.len() - 1]
        } else {
            let (a, b) = (&poses[k - 1], &poses[k]);
            let w = (q - times[k - 1]) / (times[k] - times[k - 1]);
            let mut pose = [nalgebra::Vector3::zeros(); NUM_JOINTS];
            for (j, r) in pose.iter_mut().enumerate() {
                *r = slerp_axis_angle(&a.pose[j], &b.pose[j], w);
            }
            PoseFrame {
                translation: a.translation + (b.translation - a.translation) * w,
                pose,
            }
        };
        out.push(frame);
    }
    Ok(out)
}
