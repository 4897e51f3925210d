//! Deployment forward path: single-precision weights with the
//! normalization layers folded into the convolutions, and reusable
//! scratch buffers. This is the network the student controller flies
//! with and the one the timing benchmark measures.

use crate::student::layers::Elem;
use crate::student::{ArchSpec, FrameTensor, StudentError, StudentNet};

#[allow(clippy::too_many_arguments)]
fn sgemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f32],
    rsa: isize,
    csa: isize,
    b: &[f32],
    rsb: isize,
    csb: isize,
    c: &mut [f32],
) {
    debug_assert!(c.len() >= m * n);
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            0.0,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

fn im2col_f32(input: &[f32], c: usize, h: usize, w: usize, cols: &mut [f32]) {
    let plane = h * w;
    for ch in 0..c {
        let src = &input[ch * plane..(ch + 1) * plane];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &mut cols[(ch * 9 + ky * 3 + kx) * plane..][..plane];
                let dy = ky as isize - 1;
                let dx = kx as isize - 1;
                for y in 0..h {
                    let sy = y as isize + dy;
                    let dst = &mut row[y * w..y * w + w];
                    if sy < 0 || sy >= h as isize {
                        dst.fill(0.0);
                        continue;
                    }
                    let srow = &src[sy as usize * w..sy as usize * w + w];
                    if dx == 0 {
                        dst.copy_from_slice(srow);
                    } else if dx < 0 {
                        dst[0] = 0.0;
                        dst[1..].copy_from_slice(&srow[..w - 1]);
                    } else {
                        dst[w - 1] = 0.0;
                        dst[..w - 1].copy_from_slice(&srow[1..]);
                    }
                }
            }
        }
    }
}

fn gelu_f32(data: &mut [f32]) {
    const C: f32 = 0.797_884_56;
    const A: f32 = 0.044715;
    for x in data {
        let u = C * (*x + A * *x * *x * *x);
        *x = 0.5 * *x * (1.0 + crate::student::layers::tanh_rational_f32(u));
    }
}

#[derive(Clone)]
struct FoldedConv {
    in_ch: usize,
    out_ch: usize,
    w: Vec<f32>,
    b: Vec<f32>,
}

#[derive(Clone)]
pub struct InferenceNet {
    arch: ArchSpec,
    conv: Vec<FoldedConv>,
    fc1: (Vec<f32>, Vec<f32>),
    fc2: (Vec<f32>, Vec<f32>),
    // Scratch reused across calls.
    cols: Vec<f32>,
    buf_a: Vec<f32>,
    buf_b: Vec<f32>,
}

impl InferenceNet {
    /// Fold each batch-norm (running statistics) into the preceding
    /// convolution and cast to f32.
    pub fn from_trained<T: Elem>(net: &StudentNet<T>) -> Self {
        let mut conv = Vec::new();
        let mut max_plane_in = net.arch.input_ch * net.arch.input_size * net.arch.input_size;
        let mut max_cols = 0usize;
        let mut size = net.arch.input_size;
        for (c, bn) in net.conv.iter().zip(&net.bn) {
            let mut w = vec![0.0f32; c.w.len()];
            let mut b = vec![0.0f32; c.b.len()];
            for o in 0..c.out_ch {
                let scale = bn.gamma[o].to_f64() / (bn.running_var[o] + bn.eps).sqrt();
                for i in 0..c.in_ch * 9 {
                    w[o * c.in_ch * 9 + i] = (c.w[o * c.in_ch * 9 + i].to_f64() * scale) as f32;
                }
                b[o] = ((c.b[o].to_f64() - bn.running_mean[o]) * scale + bn.beta[o].to_f64()) as f32;
            }
            max_cols = max_cols.max(c.in_ch * 9 * size * size);
            max_plane_in = max_plane_in.max(c.out_ch * size * size);
            conv.push(FoldedConv { in_ch: c.in_ch, out_ch: c.out_ch, w, b });
            if net.arch.blocks[conv.len() - 1].pool_after {
                size /= 2;
            }
        }
        let fc1 = (
            net.fc1.w.iter().map(|&x| x.to_f64() as f32).collect(),
            net.fc1.b.iter().map(|&x| x.to_f64() as f32).collect(),
        );
        let fc2 = (
            net.fc2.w.iter().map(|&x| x.to_f64() as f32).collect(),
            net.fc2.b.iter().map(|&x| x.to_f64() as f32).collect(),
        );
        Self {
            arch: net.arch.clone(),
            conv,
            fc1,
            fc2,
            cols: vec![0.0; max_cols],
            buf_a: vec![0.0; max_plane_in],
            buf_b: vec![0.0; max_plane_in],
        }
    }

    pub fn arch(&self) -> &ArchSpec {
        &self.arch
    }

    /// Bounded 3-channel output for one frame.
    pub fn forward(&mut self, t: &FrameTensor) -> Result<[f64; 3], StudentError> {
        let want = (
            self.arch.input_ch as u32,
            self.arch.input_size as u32,
            self.arch.input_size as u32,
        );
        if t.shape() != want {
            return Err(StudentError::ShapeMismatch { got: t.shape(), want });
        }
        let mut size = self.arch.input_size;
        self.buf_a[..t.data.len()].copy_from_slice(&t.data);
        let mut cur_len = t.data.len();
        for (bi, block) in self.arch.blocks.iter().enumerate() {
            let conv = &self.conv[bi];
            let plane = size * size;
            let k = conv.in_ch * 9;
            im2col_f32(&self.buf_a[..cur_len], conv.in_ch, size, size, &mut self.cols[..k * plane]);
            sgemm(
                conv.out_ch,
                k,
                plane,
                &conv.w,
                k as isize,
                1,
                &self.cols[..k * plane],
                plane as isize,
                1,
                &mut self.buf_b[..conv.out_ch * plane],
            );
            for o in 0..conv.out_ch {
                let bias = conv.b[o];
                for x in &mut self.buf_b[o * plane..(o + 1) * plane] {
                    *x += bias;
                }
            }
            gelu_f32(&mut self.buf_b[..conv.out_ch * plane]);
            if block.pool_after {
                let half = size / 2;
                for ch in 0..conv.out_ch {
                    for y in 0..half {
                        for x in 0..half {
                            let base = ch * plane + 2 * y * size + 2 * x;
                            let m = self.buf_b[base]
                                .max(self.buf_b[base + 1])
                                .max(self.buf_b[base + size])
                                .max(self.buf_b[base + size + 1]);
                            self.buf_a[ch * half * half + y * half + x] = m;
                        }
                    }
                }
                size = half;
                cur_len = conv.out_ch * size * size;
            } else {
                self.buf_a[..conv.out_ch * plane]
                    .copy_from_slice(&self.buf_b[..conv.out_ch * plane]);
                cur_len = conv.out_ch * plane;
            }
        }
        let feat_ch = self.arch.blocks.last().unwrap().out_ch;
        let plane = size * size;
        let mut feat = vec![0.0f32; feat_ch];
        for (ch, f) in feat.iter_mut().enumerate() {
            *f = self.buf_a[ch * plane..(ch + 1) * plane].iter().sum::<f32>() / plane as f32;
        }
        let mut h = vec![0.0f32; self.arch.fc_hidden];
        for (o, hv) in h.iter_mut().enumerate() {
            let mut acc = self.fc1.1[o];
            for (i, f) in feat.iter().enumerate() {
                acc += self.fc1.0[o * feat_ch + i] * f;
            }
            *hv = acc;
        }
        gelu_f32(&mut h);
        let mut y = [0.0f64; 3];
        for (o, yv) in y.iter_mut().enumerate() {
            let mut acc = self.fc2.1[o];
            for (i, hv) in h.iter().enumerate() {
                acc += self.fc2.0[o * self.arch.fc_hidden + i] * hv;
            }
            *yv = (acc as f64).tanh();
        }
        Ok(y)
    }
}
