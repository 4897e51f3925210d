//! Network input tensors rendered from the simulated sensor output.

use crate::perception::RasterOutput;
use crate::student::StudentError;
use serde::{Deserialize, Serialize};

/// Channel-major (C, H, W) float tensor with values in [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameTensor {
    pub height: u32,
    pub width: u32,
    pub channels: u32,
    pub data: Vec<f32>,
}

impl FrameTensor {
    pub fn new(height: u32, width: u32, channels: u32) -> Self {
        Self { height, width, channels, data: vec![0.0; (height * width * channels) as usize] }
    }

    pub fn shape(&self) -> (u32, u32, u32) {
        (self.channels, self.height, self.width)
    }

    pub fn channel(&self, c: u32) -> &[f32] {
        let plane = (self.height * self.width) as usize;
        &self.data[c as usize * plane..(c as usize + 1) * plane]
    }

    pub fn channel_mut(&mut self, c: u32) -> &mut [f32] {
        let plane = (self.height * self.width) as usize;
        &mut self.data[c as usize * plane..(c as usize + 1) * plane]
    }
}

/// Exact fractional-area average resampling from `(src_w, src_h)` to
/// `(dst_w, dst_h)`: each output cell is the mean of the source region it
/// covers, with partial source pixels weighted by overlap.
///
/// Implemented with a summed-area table evaluated at fractional
/// coordinates, so each cell costs O(1) regardless of the scale factor.
/// The source is piecewise constant, so the fractional evaluation is
/// exact, not interpolated.
pub fn downsample_area(
    src: &[f64],
    src_w: usize,
    src_h: usize,
    dst_w: usize,
    dst_h: usize,
) -> Vec<f64> {
    assert_eq!(src.len(), src_w * src_h);
    // sat[y][x] = sum of src over [0, x) x [0, y).
    let sw1 = src_w + 1;
    let mut sat = vec![0.0f64; sw1 * (src_h + 1)];
    for y in 0..src_h {
        let mut row_acc = 0.0;
        for x in 0..src_w {
            row_acc += src[y * src_w + x];
            sat[(y + 1) * sw1 + x + 1] = sat[y * sw1 + x + 1] + row_acc;
        }
    }
    // Integral of src over [0, x] x [0, y] for real-valued x, y.
    let f = |x: f64, y: f64| -> f64 {
        let xi = (x.floor() as usize).min(src_w);
        let yi = (y.floor() as usize).min(src_h);
        let fx = x - xi as f64;
        let fy = y - yi as f64;
        let s00 = sat[yi * sw1 + xi];
        let mut acc = s00;
        if fx > 0.0 {
            acc += fx * (sat[yi * sw1 + xi + 1] - s00);
        }
        if fy > 0.0 {
            acc += fy * (sat[(yi + 1) * sw1 + xi] - s00);
        }
        if fx > 0.0 && fy > 0.0 {
            acc += fx * fy * src[yi * src_w + xi];
        }
        acc
    };

    let sx = src_w as f64 / dst_w as f64;
    let sy = src_h as f64 / dst_h as f64;
    let mut out = vec![0.0; dst_w * dst_h];
    for oy in 0..dst_h {
        let y0 = oy as f64 * sy;
        let y1 = ((oy + 1) as f64 * sy).min(src_h as f64);
        for ox in 0..dst_w {
            let x0 = ox as f64 * sx;
            let x1 = ((ox + 1) as f64 * sx).min(src_w as f64);
            let integral = f(x1, y1) - f(x0, y1) - f(x1, y0) + f(x0, y0);
            out[oy * dst_w + ox] = integral / ((x1 - x0) * (y1 - y0));
        }
    }
    out
}

/// Area-average a sparse plane that is zero outside a window. The window
/// content is given cropped; cells that never touch the window stay zero.
#[allow(clippy::too_many_arguments)]
fn downsample_area_window(
    crop: &[f64],
    crop_w: usize,
    crop_h: usize,
    off_x: usize,
    off_y: usize,
    src_w: usize,
    src_h: usize,
    dst: usize,
) -> Vec<f64> {
    // sat over the crop only.
    let cw1 = crop_w + 1;
    let mut sat = vec![0.0f64; cw1 * (crop_h + 1)];
    for y in 0..crop_h {
        let mut row_acc = 0.0;
        for x in 0..crop_w {
            row_acc += crop[y * crop_w + x];
            sat[(y + 1) * cw1 + x + 1] = sat[y * cw1 + x + 1] + row_acc;
        }
    }
    // Integral over [0, x] x [0, y] in crop coordinates, clamped to the
    // window (the plane is zero outside it).
    let f = |x: f64, y: f64| -> f64 {
        let x = x.clamp(0.0, crop_w as f64);
        let y = y.clamp(0.0, crop_h as f64);
        let xi = (x.floor() as usize).min(crop_w);
        let yi = (y.floor() as usize).min(crop_h);
        let fx = x - xi as f64;
        let fy = y - yi as f64;
        let s00 = sat[yi * cw1 + xi];
        let mut acc = s00;
        if fx > 0.0 {
            acc += fx * (sat[yi * cw1 + xi + 1] - s00);
        }
        if fy > 0.0 {
            acc += fy * (sat[(yi + 1) * cw1 + xi] - s00);
        }
        if fx > 0.0 && fy > 0.0 {
            acc += fx * fy * crop[yi * crop_w + xi];
        }
        acc
    };

    let sx = src_w as f64 / dst as f64;
    let sy = src_h as f64 / dst as f64;
    let mut out = vec![0.0; dst * dst];
    // Only cells overlapping the window can be nonzero.
    let ox0 = (off_x as f64 / sx).floor() as usize;
    let ox1 = (((off_x + crop_w) as f64 / sx).ceil() as usize).min(dst);
    let oy0 = (off_y as f64 / sy).floor() as usize;
    let oy1 = (((off_y + crop_h) as f64 / sy).ceil() as usize).min(dst);
    for oy in oy0..oy1 {
        let y0 = oy as f64 * sy - off_y as f64;
        let y1 = ((oy + 1) as f64 * sy).min(src_h as f64) - off_y as f64;
        for ox in ox0..ox1 {
            let x0 = ox as f64 * sx - off_x as f64;
            let x1 = ((ox + 1) as f64 * sx).min(src_w as f64) - off_x as f64;
            let integral = f(x1, y1) - f(x0, y1) - f(x1, y0) + f(x0, y0);
            // Full frame-clipped cell area (the zero padding outside the
            // window still counts toward the mean).
            let area = (x1 - x0) * (y1 - y0);
            out[oy * dst + ox] = integral / area.max(1e-12);
        }
    }
    out
}

/// Render the network input from the sensor output: channel 0 is the
/// downsampled vehicle mask, channel 1 encodes orientation as 0.5 on the
/// front region and 1.0 on the back region.
pub fn render_input(raster: &RasterOutput, size: u32) -> Result<FrameTensor, StudentError> {
    let (w, h) = (raster.mask.width as usize, raster.mask.height as usize);
    let Some((u0, v0, u1, v1)) = raster.mask.bounds() else {
        return Err(StudentError::TargetNotVisible);
    };
    let (cw, ch) = ((u1 - u0 + 1) as usize, (v1 - v0 + 1) as usize);
    let mut mask_plane = vec![0.0f64; cw * ch];
    let mut code_plane = vec![0.0f64; cw * ch];
    for v in 0..ch {
        for u in 0..cw {
            let (su, sv) = (u0 + u as u32, v0 + v as u32);
            if raster.mask.get(su, sv) {
                mask_plane[v * cw + u] = 1.0;
                code_plane[v * cw + u] =
                    if raster.gt.front.get(su, sv) { 0.5 } else { 1.0 };
            }
        }
    }
    let s = size as usize;
    let m = downsample_area_window(&mask_plane, cw, ch, u0 as usize, v0 as usize, w, h, s);
    let c = downsample_area_window(&code_plane, cw, ch, u0 as usize, v0 as usize, w, h, s);
    let mut t = FrameTensor::new(size, size, 2);
    for i in 0..s * s {
        t.data[i] = m[i] as f32;
        t.data[s * s + i] = c[i] as f32;
    }
    Ok(t)
}
