//! Network building blocks with explicit forward and backward passes:
//! 3x3 convolution (im2col + GEMM), batch normalization, GELU (tanh
//! form), 2x2 max pooling, global average pooling, and linear layers.
//!
//! Everything is generic over the element type: f64 for gradient
//! verification and small exact tests, f32 for production training and
//! deployment speed.

use rand::RngExt;

/// Element scalar for network math.
pub trait Elem:
    Copy
    + Send
    + Sync
    + PartialOrd
    + Default
    + std::fmt::Debug
    + std::ops::Add<Output = Self>
    + std::ops::Sub<Output = Self>
    + std::ops::Mul<Output = Self>
    + std::ops::Div<Output = Self>
    + std::ops::Neg<Output = Self>
    + std::ops::AddAssign
    + 'static
{
    const ZERO: Self;
    const ONE: Self;
    fn from_f64(x: f64) -> Self;
    fn to_f64(self) -> f64;
    fn from_f32(x: f32) -> Self;
    fn tanh(self) -> Self;
    /// tanh for bulk elementwise use; the f32 implementation is a
    /// clamped rational approximation (|error| < 1e-6) that
    /// autovectorizes, the f64 one is exact.
    fn tanh_fast(self) -> Self;
    fn sqrt(self) -> Self;
    fn maximum(self, o: Self) -> Self;
    /// Row-major GEMM with explicit strides:
    /// c = alpha * a * b + beta * c.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: &[Self],
        rsa: isize,
        csa: isize,
        b: &[Self],
        rsb: isize,
        csb: isize,
        beta: Self,
        c: &mut [Self],
        rsc: isize,
        csc: isize,
    );
}

impl Elem for f64 {
    const ZERO: Self = 0.0;
    const ONE: Self = 1.0;
    #[inline]
    fn from_f64(x: f64) -> Self {
        x
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self
    }
    #[inline]
    fn from_f32(x: f32) -> Self {
        x as f64
    }
    #[inline]
    fn tanh(self) -> Self {
        f64::tanh(self)
    }
    #[inline]
    fn tanh_fast(self) -> Self {
        f64::tanh(self)
    }
    #[inline]
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    #[inline]
    fn maximum(self, o: Self) -> Self {
        f64::max(self, o)
    }
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: &[Self],
        rsa: isize,
        csa: isize,
        b: &[Self],
        rsb: isize,
        csb: isize,
        beta: Self,
        c: &mut [Self],
        rsc: isize,
        csc: isize,
    ) {
        unsafe {
            matrixmultiply::dgemm(
                m, k, n, alpha, a.as_ptr(), rsa, csa, b.as_ptr(), rsb, csb, beta,
                c.as_mut_ptr(), rsc, csc,
            );
        }
    }
}

impl Elem for f32 {
    const ZERO: Self = 0.0;
    const ONE: Self = 1.0;
    #[inline]
    fn from_f64(x: f64) -> Self {
        x as f32
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self as f64
    }
    #[inline]
    fn from_f32(x: f32) -> Self {
        x
    }
    #[inline]
    fn tanh(self) -> Self {
        f32::tanh(self)
    }
    #[inline]
    fn tanh_fast(self) -> Self {
        tanh_rational_f32(self)
    }
    #[inline]
    fn sqrt(self) -> Self {
        f32::sqrt(self)
    }
    #[inline]
    fn maximum(self, o: Self) -> Self {
        f32::max(self, o)
    }
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: &[Self],
        rsa: isize,
        csa: isize,
        b: &[Self],
        rsb: isize,
        csb: isize,
        beta: Self,
        c: &mut [Self],
        rsc: isize,
        csc: isize,
    ) {
        unsafe {
            matrixmultiply::sgemm(
                m, k, n, alpha, a.as_ptr(), rsa, csa, b.as_ptr(), rsb, csb, beta,
                c.as_mut_ptr(), rsc, csc,
            );
        }
    }
}

/// Branch-free rational tanh for f32 (the widely used 13/6-degree
/// minimax form): accurate to about 1e-6 over the clamped range and
/// amenable to autovectorization.
#[inline]
pub(crate) fn tanh_rational_f32(x: f32) -> f32 {
    const CLAMP: f32 = 7.905_311_5;
    let t = x.clamp(-CLAMP, CLAMP);
    let x2 = t * t;
    let p = t
        * (4.893_525_2e-3
            + x2 * (6.372_619_3e-4
                + x2 * (1.485_722_4e-5
                    + x2 * (5.122_297_1e-8
                        + x2 * (-8.604_671_5e-11
                            + x2 * (2.000_187_9e-13 + x2 * -2.760_768_5e-16))))));
    let q = 4.893_525_2e-3
        + x2 * (2.268_434_6e-3 + x2 * (1.185_347_1e-4 + x2 * 1.198_258_4e-6));
    p / q
}

/// Unfold one (C, H, W) sample into 3x3-neighborhood columns written with
/// an explicit row stride, so several samples can share one wide matrix:
/// row `k` of sample `s` lands at `cols[k * row_stride + col_base ..]`.
pub(crate) fn im2col_strided<T: Elem>(
    input: &[T],
    c: usize,
    h: usize,
    w: usize,
    row_stride: usize,
    col_base: usize,
    cols: &mut [T],
) {
    let plane = h * w;
    for ch in 0..c {
        let src = &input[ch * plane..(ch + 1) * plane];
        for ky in 0..3 {
            for kx in 0..3 {
                let row_idx = ch * 9 + ky * 3 + kx;
                let row = &mut cols[row_idx * row_stride + col_base..][..plane];
                let dy = ky as isize - 1;
                let dx = kx as isize - 1;
                for y in 0..h {
                    let sy = y as isize + dy;
                    let dst = &mut row[y * w..y * w + w];
                    if sy < 0 || sy >= h as isize {
                        dst.fill(T::ZERO);
                        continue;
                    }
                    let srow = &src[sy as usize * w..sy as usize * w + w];
                    if dx == 0 {
                        dst.copy_from_slice(srow);
                    } else if dx < 0 {
                        dst[0] = T::ZERO;
                        dst[1..].copy_from_slice(&srow[..w - 1]);
                    } else {
                        dst[w - 1] = T::ZERO;
                        dst[..w - 1].copy_from_slice(&srow[1..]);
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col_strided`]: fold one sample's column gradients back
/// onto its input gradient.
pub(crate) fn col2im_strided<T: Elem>(
    cols: &[T],
    c: usize,
    h: usize,
    w: usize,
    row_stride: usize,
    col_base: usize,
    dinput: &mut [T],
) {
    let plane = h * w;
    dinput.fill(T::ZERO);
    for ch in 0..c {
        let dst = &mut dinput[ch * plane..(ch + 1) * plane];
        for ky in 0..3 {
            for kx in 0..3 {
                let row_idx = ch * 9 + ky * 3 + kx;
                let row = &cols[row_idx * row_stride + col_base..][..plane];
                let dy = ky as isize - 1;
                let dx = kx as isize - 1;
                for y in 0..h {
                    let sy = y as isize + dy;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let drow = &mut dst[sy as usize * w..sy as usize * w + w];
                    let srow = &row[y * w..y * w + w];
                    if dx == 0 {
                        for (d, s) in drow.iter_mut().zip(srow) {
                            *d += *s;
                        }
                    } else if dx < 0 {
                        for (d, s) in drow[..w - 1].iter_mut().zip(&srow[1..]) {
                            *d += *s;
                        }
                    } else {
                        for (d, s) in drow[1..].iter_mut().zip(&srow[..w - 1]) {
                            *d += *s;
                        }
                    }
                }
            }
        }
    }
}

/// 3x3 convolution, stride 1, padding 1.
#[derive(Debug, Clone)]
pub struct Conv2d<T: Elem> {
    pub in_ch: usize,
    pub out_ch: usize,
    /// (out_ch, in_ch, 3, 3) row-major.
    pub w: Vec<T>,
    pub b: Vec<T>,
}

impl<T: Elem> Conv2d<T> {
    pub fn init(in_ch: usize, out_ch: usize, rng: &mut impl RngExt) -> Self {
        let fan_in = (in_ch * 9) as f64;
        let bound = (6.0 / fan_in).sqrt();
        let w = (0..out_ch * in_ch * 9)
            .map(|_| T::from_f64(rng.random_range(-bound..bound)))
            .collect();
        Self { in_ch, out_ch, w, b: vec![T::ZERO; out_ch] }
    }
}

/// Batch normalization over (N, H, W) per channel. Training uses batch
/// statistics and maintains running estimates; evaluation uses the frozen
/// running statistics. Statistics are kept in f64 regardless of the
/// compute type.
#[derive(Debug, Clone)]
pub struct BatchNorm<T: Elem> {
    pub ch: usize,
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub momentum: f64,
    pub eps: f64,
}

impl<T: Elem> BatchNorm<T> {
    pub fn new(ch: usize) -> Self {
        Self {
            ch,
            gamma: vec![T::ONE; ch],
            beta: vec![T::ZERO; ch],
            running_mean: vec![0.0; ch],
            running_var: vec![1.0; ch],
            momentum: 0.1,
            eps: 1e-5,
        }
    }

    /// Training forward over a batch buffer (N, C, H, W), in place.
    /// Returns (xhat, invstd) for the backward pass.
    pub fn forward_train(&mut self, data: &mut [T], n: usize, plane: usize) -> (Vec<T>, Vec<T>) {
        let c = self.ch;
        let m = (n * plane) as f64;
        // Per-channel sums accumulated in f64 for stability.
        let mut mean = vec![0.0f64; c];
        let mut var = vec![0.0f64; c];
        for s in 0..n {
            for ch in 0..c {
                let seg = &data[(s * c + ch) * plane..][..plane];
                let mut acc = 0.0f64;
                for &x in seg {
                    acc += x.to_f64();
                }
                mean[ch] += acc;
            }
        }
        for v in &mut mean {
            *v /= m;
        }
        for s in 0..n {
            for ch in 0..c {
                let seg = &data[(s * c + ch) * plane..][..plane];
                let mu = mean[ch];
                let mut acc = 0.0f64;
                for &x in seg {
                    let d = x.to_f64() - mu;
                    acc += d * d;
                }
                var[ch] += acc;
            }
        }
        for v in &mut var {
            *v /= m;
        }
        let invstd: Vec<T> = var.iter().map(|&v| T::from_f64(1.0 / (v + self.eps).sqrt())).collect();
        let mean_t: Vec<T> = mean.iter().map(|&v| T::from_f64(v)).collect();

        let mut xhat = vec![T::ZERO; data.len()];
        for s in 0..n {
            for ch in 0..c {
                let base = (s * c + ch) * plane;
                let (mu, isd) = (mean_t[ch], invstd[ch]);
                let (g, bt) = (self.gamma[ch], self.beta[ch]);
                for i in 0..plane {
                    let xh = (data[base + i] - mu) * isd;
                    xhat[base + i] = xh;
                    data[base + i] = g * xh + bt;
                }
            }
        }
        let unbias = if m > 1.0 { m / (m - 1.0) } else { 1.0 };
        for ch in 0..c {
            self.running_mean[ch] =
                (1.0 - self.momentum) * self.running_mean[ch] + self.momentum * mean[ch];
            self.running_var[ch] =
                (1.0 - self.momentum) * self.running_var[ch] + self.momentum * var[ch] * unbias;
        }
        (xhat, invstd)
    }

    /// Evaluation forward using running statistics, in place.
    pub fn forward_eval(&self, data: &mut [T], n: usize, plane: usize) {
        let c = self.ch;
        for s in 0..n {
            for ch in 0..c {
                let scale =
                    self.gamma[ch] * T::from_f64(1.0 / (self.running_var[ch] + self.eps).sqrt());
                let shift = self.beta[ch] - T::from_f64(self.running_mean[ch]) * scale;
                for x in &mut data[(s * c + ch) * plane..][..plane] {
                    *x = scale * *x + shift;
                }
            }
        }
    }

    /// Backward through the batch-statistics normalization.
    #[allow(clippy::too_many_arguments)]
    pub fn backward(
        &self,
        dout: &[T],
        xhat: &[T],
        invstd: &[T],
        n: usize,
        plane: usize,
        dgamma: &mut [T],
        dbeta: &mut [T],
        dinput: &mut [T],
    ) {
        let c = self.ch;
        let m = (n * plane) as f64;
        let mut sum_dy = vec![0.0f64; c];
        let mut sum_dy_xhat = vec![0.0f64; c];
        for s in 0..n {
            for ch in 0..c {
                let base = (s * c + ch) * plane;
                let mut a = 0.0f64;
                let mut b = 0.0f64;
                for i in 0..plane {
                    a += dout[base + i].to_f64();
                    b += dout[base + i].to_f64() * xhat[base + i].to_f64();
                }
                sum_dy[ch] += a;
                sum_dy_xhat[ch] += b;
            }
        }
        for ch in 0..c {
            dgamma[ch] += T::from_f64(sum_dy_xhat[ch]);
            dbeta[ch] += T::from_f64(sum_dy[ch]);
        }
        for s in 0..n {
            for ch in 0..c {
                let base = (s * c + ch) * plane;
                let k = self.gamma[ch] * invstd[ch] * T::from_f64(1.0 / m);
                let sdy = T::from_f64(sum_dy[ch]);
                let sdyx = T::from_f64(sum_dy_xhat[ch]);
                let mt = T::from_f64(m);
                for i in 0..plane {
                    dinput[base + i] =
                        k * (mt * dout[base + i] - sdy - xhat[base + i] * sdyx);
                }
            }
        }
    }
}

/// Fully connected layer, row-major weight (out, in).
#[derive(Debug, Clone)]
pub struct Linear<T: Elem> {
    pub in_f: usize,
    pub out_f: usize,
    pub w: Vec<T>,
    pub b: Vec<T>,
}

impl<T: Elem> Linear<T> {
    pub fn init(in_f: usize, out_f: usize, rng: &mut impl RngExt) -> Self {
        let bound = (6.0 / in_f as f64).sqrt();
        let w = (0..in_f * out_f).map(|_| T::from_f64(rng.random_range(-bound..bound))).collect();
        Self { in_f, out_f, w, b: vec![T::ZERO; out_f] }
    }

    /// Batch forward: x is (n, in_f), out is (n, out_f).
    pub fn forward(&self, x: &[T], n: usize, out: &mut [T]) {
        T::gemm(
            n,
            self.in_f,
            self.out_f,
            T::ONE,
            x,
            self.in_f as isize,
            1,
            &self.w,
            1,
            self.in_f as isize,
            T::ZERO,
            out,
            self.out_f as isize,
            1,
        );
        for s in 0..n {
            for o in 0..self.out_f {
                out[s * self.out_f + o] += self.b[o];
            }
        }
    }

    pub fn backward(&self, x: &[T], dout: &[T], n: usize, dw: &mut [T], db: &mut [T], dx: &mut [T]) {
        // dw += dout^T * x
        T::gemm(
            self.out_f,
            n,
            self.in_f,
            T::ONE,
            dout,
            1,
            self.out_f as isize,
            x,
            self.in_f as isize,
            1,
            T::ONE,
            dw,
            self.in_f as isize,
            1,
        );
        for s in 0..n {
            for o in 0..self.out_f {
                db[o] += dout[s * self.out_f + o];
            }
        }
        // dx = dout * w
        T::gemm(
            n,
            self.out_f,
            self.in_f,
            T::ONE,
            dout,
            self.out_f as isize,
            1,
            &self.w,
            self.in_f as isize,
            1,
            T::ZERO,
            dx,
            self.in_f as isize,
            1,
        );
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044715;

/// GELU in its tanh form: out-of-place over a slice.
pub fn gelu_into<T: Elem>(pre: &[T], out: &mut [T]) {
    let c = T::from_f64(GELU_C);
    let a = T::from_f64(GELU_A);
    let half = T::from_f64(0.5);
    for (o, &x) in out.iter_mut().zip(pre) {
        let u = c * (x + a * x * x * x);
        *o = half * x * (T::ONE + u.tanh_fast());
    }
}

/// GELU gradient given the pre-activation input.
pub fn gelu_backward<T: Elem>(pre: &[T], dout: &[T], dinput: &mut [T]) {
    let c = T::from_f64(GELU_C);
    let a = T::from_f64(GELU_A);
    let a3 = T::from_f64(3.0 * GELU_A);
    let half = T::from_f64(0.5);
    for i in 0..pre.len() {
        let x = pre[i];
        let u = c * (x + a * x * x * x);
        let t = u.tanh_fast();
        let du = c * (T::ONE + a3 * x * x);
        let g = half * (T::ONE + t) + half * x * (T::ONE - t * t) * du;
        dinput[i] = dout[i] * g;
    }
}

/// 2x2 max pooling with stride 2 over one (C, H, W) sample. Records the
/// winning quadrant (0..4) per output element for the backward pass.
pub fn maxpool_sample<T: Elem>(
    input: &[T],
    c: usize,
    h: usize,
    w: usize,
    out: &mut [T],
    idx: &mut [u8],
) {
    debug_assert!(h % 2 == 0 && w % 2 == 0);
    let (oh, ow) = (h / 2, w / 2);
    for ch in 0..c {
        let src = &input[ch * h * w..];
        for y in 0..oh {
            for x in 0..ow {
                let base = 2 * y * w + 2 * x;
                let vals = [src[base], src[base + 1], src[base + w], src[base + w + 1]];
                let mut best = 0usize;
                for q in 1..4 {
                    if vals[q] > vals[best] {
                        best = q;
                    }
                }
                out[ch * oh * ow + y * ow + x] = vals[best];
                idx[ch * oh * ow + y * ow + x] = best as u8;
            }
        }
    }
}

pub fn maxpool_backward_sample<T: Elem>(
    dout: &[T],
    idx: &[u8],
    c: usize,
    h: usize,
    w: usize,
    dinput: &mut [T],
) {
    let (oh, ow) = (h / 2, w / 2);
    dinput.fill(T::ZERO);
    for ch in 0..c {
        for y in 0..oh {
            for x in 0..ow {
                let q = idx[ch * oh * ow + y * ow + x] as usize;
                let (dy, dx) = (q / 2, q % 2);
                dinput[ch * h * w + (2 * y + dy) * w + 2 * x + dx] +=
                    dout[ch * oh * ow + y * ow + x];
            }
        }
    }
}

/// Global average pooling (C, H, W) -> (C,) for one sample.
pub fn gap_sample<T: Elem>(input: &[T], c: usize, plane: usize, out: &mut [T]) {
    let inv = T::from_f64(1.0 / plane as f64);
    for ch in 0..c {
        let mut acc = T::ZERO;
        for &x in &input[ch * plane..(ch + 1) * plane] {
            acc += x;
        }
        out[ch] = acc * inv;
    }
}

pub fn gap_backward_sample<T: Elem>(dout: &[T], c: usize, plane: usize, dinput: &mut [T]) {
    let inv = T::from_f64(1.0 / plane as f64);
    for ch in 0..c {
        let g = dout[ch] * inv;
        for x in &mut dinput[ch * plane..(ch + 1) * plane] {
            *x = g;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn im2col_col2im_are_adjoint() {
        // <im2col(x), y> == <x, col2im(y)> for random x, y.
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (c, h, w) = (3usize, 5usize, 4usize);
        let x: Vec<f64> = (0..c * h * w).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..c * 9 * h * w).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut cx = vec![0.0; c * 9 * h * w];
        im2col_strided(&x, c, h, w, h * w, 0, &mut cx);
        let mut ay = vec![0.0; c * h * w];
        col2im_strided(&y, c, h, w, h * w, 0, &mut ay);
        let lhs: f64 = cx.iter().zip(&y).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(&ay).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-9);
    }

    #[test]
    fn strided_im2col_places_samples_side_by_side() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (c, h, w) = (2usize, 4usize, 4usize);
        let plane = h * w;
        let a: Vec<f64> = (0..c * plane).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..c * plane).map(|_| rng.random_range(-1.0..1.0)).collect();
        // Two samples in one wide matrix.
        let stride = 2 * plane;
        let mut wide = vec![0.0; c * 9 * stride];
        im2col_strided(&a, c, h, w, stride, 0, &mut wide);
        im2col_strided(&b, c, h, w, stride, plane, &mut wide);
        // Against the single-sample layout.
        let mut ca = vec![0.0; c * 9 * plane];
        let mut cb = vec![0.0; c * 9 * plane];
        im2col_strided(&a, c, h, w, plane, 0, &mut ca);
        im2col_strided(&b, c, h, w, plane, 0, &mut cb);
        for k in 0..c * 9 {
            assert_eq!(&wide[k * stride..k * stride + plane], &ca[k * plane..(k + 1) * plane]);
            assert_eq!(
                &wide[k * stride + plane..k * stride + 2 * plane],
                &cb[k * plane..(k + 1) * plane]
            );
        }
    }

    #[test]
    fn batchnorm_normalizes_batch() {
        let mut bn = BatchNorm::<f64>::new(2);
        let (n, plane) = (4usize, 6usize);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut data: Vec<f64> = (0..n * 2 * plane).map(|_| rng.random_range(-3.0..7.0)).collect();
        bn.forward_train(&mut data, n, plane);
        for ch in 0..2 {
            let mut mean = 0.0;
            let mut var = 0.0;
            for s in 0..n {
                for i in 0..plane {
                    mean += data[(s * 2 + ch) * plane + i];
                }
            }
            mean /= (n * plane) as f64;
            for s in 0..n {
                for i in 0..plane {
                    let d = data[(s * 2 + ch) * plane + i] - mean;
                    var += d * d;
                }
            }
            var /= (n * plane) as f64;
            assert!(mean.abs() < 1e-9);
            // The eps in the denominator shifts the variance by ~eps/var.
            assert!((var - 1.0).abs() < 1e-4);
        }
    }

    #[test]
    fn maxpool_routes_gradient_to_argmax() {
        let input = vec![1.0, 5.0, 2.0, 3.0]; // 1x2x2
        let mut out = vec![0.0; 1];
        let mut idx = vec![0u8; 1];
        maxpool_sample(&input, 1, 2, 2, &mut out, &mut idx);
        assert_eq!(out[0], 5.0);
        let mut dinput = vec![0.0; 4];
        maxpool_backward_sample(&[2.0], &idx, 1, 2, 2, &mut dinput);
        assert_eq!(dinput, vec![0.0, 2.0, 0.0, 0.0]);
    }

    #[test]
    fn gelu_matches_reference_values() {
        let pre = vec![0.0f64, 1.0, -1.0];
        let mut x = vec![0.0f64; 3];
        gelu_into(&pre, &mut x);
        assert!(x[0].abs() < 1e-15);
        assert!((x[1] - 0.841192).abs() < 1e-5);
        assert!((x[2] + 0.158808).abs() < 1e-5);
    }

    #[test]
    fn rational_tanh_accuracy() {
        let mut worst = 0.0f64;
        let mut x = -12.0f32;
        while x < 12.0 {
            let got = tanh_rational_f32(x) as f64;
            let want = (x as f64).tanh();
            worst = worst.max((got - want).abs());
            x += 0.001;
        }
        assert!(worst < 2e-6, "worst abs error {worst}");
    }

    #[test]
    fn f32_instantiation_tracks_f64() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pre64: Vec<f64> = (0..64).map(|_| rng.random_range(-2.0..2.0)).collect();
        let pre32: Vec<f32> = pre64.iter().map(|&x| x as f32).collect();
        let mut out64 = vec![0.0f64; 64];
        let mut out32 = vec![0.0f32; 64];
        gelu_into(&pre64, &mut out64);
        gelu_into(&pre32, &mut out32);
        for (a, b) in out64.iter().zip(&out32) {
            assert!((a - *b as f64).abs() < 1e-5);
        }
    }
}
