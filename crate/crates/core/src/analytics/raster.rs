//! Time × channel pressure maps for the classifier.

use serde::{Deserialize, Serialize};

use crate::gateway::segment::GaitSegment;
use crate::sim::gait::{Foot, CHANNELS};
use crate::Millis;

pub const FULL_MAP_SIZE: usize = 224;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PressureMap {
    pub height: usize,
    pub width: usize,
    /// row-major, each value in [0, 1]
    pub values: Vec<f64>,
    pub foot: Foot,
    pub patient_ref: String,
    pub segment_start_ts: Millis,
}

/// Align-corners bilinear resampling of a row-major `rows × cols` grid.
pub fn resize_bilinear(src: &[f64], rows: usize, cols: usize, h: usize, w: usize) -> Vec<f64> {
    assert_eq!(src.len(), rows * cols, "source shape");
    let coord = |i: usize, n_out: usize, n_in: usize| -> (usize, usize, f64) {
        if n_out <= 1 || n_in <= 1 {
            return (0, 0, 0.0);
        }
        let x = i as f64 * (n_in - 1) as f64 / (n_out - 1) as f64;
        let i0 = (x.floor() as usize).min(n_in - 1);
        let i1 = (i0 + 1).min(n_in - 1);
        (i0, i1, x - i0 as f64)
    };
    let cx: Vec<_> = (0..w).map(|j| coord(j, w, cols)).collect();
    let mut out = Vec::with_capacity(h * w);
    for i in 0..h {
        let (r0, r1, fy) = coord(i, h, rows);
        for &(c0, c1, fx) in &cx {
            let top = src[r0 * cols + c0] * (1.0 - fx) + src[r0 * cols + c1] * fx;
            let bot = src[r1 * cols + c0] * (1.0 - fx) + src[r1 * cols + c1] * fx;
            out.push(top * (1.0 - fy) + bot * fy);
        }
    }
    out
}

/// Min-max normalize in place; a zero span yields all zeros.
pub fn normalize_min_max(v: &mut [f64]) {
    let (lo, hi) = v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    let span = hi - lo;
    if !(span > 0.0) {
        v.iter_mut().for_each(|x| *x = 0.0);
        return;
    }
    v.iter_mut().for_each(|x| *x = (*x - lo) / span);
}

/// Rows = time, columns = channel. Resampled to `h × w`, then normalized.
pub fn rasterize_pressure_map(segment: &GaitSegment, foot: Foot, h: usize, w: usize) -> PressureMap {
    let src: Vec<f64> = segment.foot(foot).iter().map(|&v| f64::from(v)).collect();
    let mut values = resize_bilinear(&src, segment.rows(), CHANNELS, h, w);
    normalize_min_max(&mut values);
    PressureMap {
        height: h,
        width: w,
        values,
        foot,
        patient_ref: segment.patient_ref.clone(),
        segment_start_ts: segment.start_ts,
    }
}
