//! Colour-wheel rendering of flow fields.
//!
//! Hue encodes direction (0° along +x, increasing towards +y) and saturation
//! encodes magnitude divided by its 95th percentile, clipped to 1; value is
//! 1, so zero flow is white.

use crate::flow::FlowField;

const PERCENTILE: f64 = 0.95;

/// The 95th percentile of the flow magnitude (nearest-rank).
pub fn magnitude_percentile(flow: &FlowField) -> f64 {
    let mut mags: Vec<f64> = flow
        .u()
        .iter()
        .zip(flow.v())
        .map(|(u, v)| u.hypot(*v))
        .filter(|m| m.is_finite())
        .collect();
    if mags.is_empty() {
        return 0.0;
    }
    mags.sort_by(f64::total_cmp);
    let rank = ((PERCENTILE * mags.len() as f64).ceil() as usize).clamp(1, mags.len());
    mags[rank - 1]
}

/// `hsv` with `h` in degrees, `s` and `v` in `[0, 1]`.
pub fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [f64; 3] {
    let h = h.rem_euclid(360.0) / 60.0;
    let c = v * s;
    let x = c * (1.0 - (h % 2.0 - 1.0).abs());
    let (r, g, b) = match h as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    [r + m, g + m, b + m]
}

/// Interleaved 8-bit RGB, row-major.
pub fn flow_to_rgb(flow: &FlowField) -> Vec<u8> {
    let scale = magnitude_percentile(flow);
    let mut out = Vec::with_capacity(3 * flow.len());
    for (u, v) in flow.u().iter().zip(flow.v()) {
        let mag = u.hypot(*v);
        let sat = if scale > 0.0 && mag.is_finite() {
            (mag / scale).min(1.0)
        } else {
            0.0
        };
        let hue = v.atan2(*u).to_degrees();
        for c in hsv_to_rgb(hue, sat, 1.0) {
            out.push((c * 255.0).round().clamp(0.0, 255.0) as u8);
        }
    }
    out
}
