//! The compact student regressor: stacked convolution blocks (conv,
//! batch norm, GELU, optional max pool), global average pooling, and a
//! two-layer head with a tanh output bounding commands to (-1, 1).
//!
//! Convolutions run as one GEMM per fixed sample group, with the group's
//! im2col columns packed side by side. The grouping is independent of the
//! worker count, so parallel runs are bitwise identical to sequential
//! ones: disjoint writes per group, and the only cross-group reduction
//! (the weight gradient) sums fixed per-group partials in group order.

use crate::student::layers::{
    col2im_strided, gap_backward_sample, gap_sample, gelu_backward, gelu_into, im2col_strided,
    maxpool_backward_sample, maxpool_sample, BatchNorm, Conv2d, Elem, Linear,
};
use crate::student::{FrameTensor, StudentError};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Fixed number of sample groups per batch.
const GROUPS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockSpec {
    pub out_ch: usize,
    pub pool_after: bool,
}

/// Architecture description. Convolutions are 3x3, stride 1, padding 1;
/// pooling halves the spatial size.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchSpec {
    pub input_size: usize,
    pub input_ch: usize,
    pub blocks: Vec<BlockSpec>,
    pub fc_hidden: usize,
    pub outputs: usize,
}

impl ArchSpec {
    /// Desk-scale network: four blocks 8-16-32-64 with pooling after the
    /// first two, then a 64 -> 32 -> 3 head.
    pub fn desk(input_size: usize) -> Self {
        Self {
            input_size,
            input_ch: 2,
            blocks: vec![
                BlockSpec { out_ch: 8, pool_after: true },
                BlockSpec { out_ch: 16, pool_after: true },
                BlockSpec { out_ch: 32, pool_after: false },
                BlockSpec { out_ch: 64, pool_after: false },
            ],
            fc_hidden: 32,
            outputs: 3,
        }
    }

    /// Full-scale configuration: six blocks from 16 to 512 channels with
    /// pooling after the first two and a 512 -> 256 -> 3 head.
    pub fn full_scale() -> Self {
        Self {
            input_size: 224,
            input_ch: 3,
            blocks: vec![
                BlockSpec { out_ch: 16, pool_after: true },
                BlockSpec { out_ch: 32, pool_after: true },
                BlockSpec { out_ch: 64, pool_after: false },
                BlockSpec { out_ch: 128, pool_after: false },
                BlockSpec { out_ch: 256, pool_after: false },
                BlockSpec { out_ch: 512, pool_after: false },
            ],
            fc_hidden: 256,
            outputs: 3,
        }
    }

    pub fn validate(&self) -> Result<(), StudentError> {
        let pools = self.blocks.iter().filter(|b| b.pool_after).count() as u32;
        if self.input_size % (1usize << pools) != 0 {
            return Err(StudentError::ArchMismatch(format!(
                "input size {} not divisible by 2^{pools}",
                self.input_size
            )));
        }
        if self.blocks.is_empty() || self.outputs == 0 {
            return Err(StudentError::ArchMismatch("empty architecture".into()));
        }
        Ok(())
    }

    /// (channels, spatial size) entering each block, plus the final pair.
    fn stage_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = vec![(self.input_ch, self.input_size)];
        let mut size = self.input_size;
        for b in &self.blocks {
            if b.pool_after {
                size /= 2;
            }
            dims.push((b.out_ch, size));
        }
        dims
    }
}

/// Gradients for every parameter tensor, in [`StudentNet::param_names`]
/// order.
pub type Grads<T> = Vec<Vec<T>>;

/// Intermediate activations kept for the backward pass.
pub struct Cache<T: Elem> {
    n: usize,
    conv_in: Vec<Vec<T>>,
    bn_xhat: Vec<Vec<T>>,
    bn_invstd: Vec<Vec<T>>,
    gelu_pre: Vec<Vec<T>>,
    pool_idx: Vec<Option<Vec<u8>>>,
    feat: Vec<T>,
    fc1_pre: Vec<T>,
    fc1_act: Vec<T>,
    /// Final bounded outputs (n, outputs).
    pub out: Vec<T>,
}

#[derive(Debug, Clone, Default)]
struct Scratch<T: Elem> {
    cols: Vec<Vec<T>>,
    cat: Vec<Vec<T>>,
    dcols: Vec<Vec<T>>,
}

#[derive(Debug, Clone)]
pub struct StudentNet<T: Elem> {
    pub arch: ArchSpec,
    pub conv: Vec<Conv2d<T>>,
    pub bn: Vec<BatchNorm<T>>,
    pub fc1: Linear<T>,
    pub fc2: Linear<T>,
    scratch: Scratch<T>,
}

/// Sample index ranges of the fixed groups.
fn group_ranges(n: usize) -> Vec<std::ops::Range<usize>> {
    let per = n.div_ceil(GROUPS).max(1);
    (0..n).step_by(per).map(|s| s..(s + per).min(n)).collect()
}

/// Split `buf` into per-group slices of `item_len` items per sample.
fn group_slices<'a, T>(
    buf: &'a mut [T],
    ranges: &[std::ops::Range<usize>],
    item_len: usize,
) -> Vec<&'a mut [T]> {
    let mut out = Vec::with_capacity(ranges.len());
    let mut rest = buf;
    for r in ranges {
        let (head, tail) = rest.split_at_mut((r.end - r.start) * item_len);
        out.push(head);
        rest = tail;
    }
    out
}

macro_rules! maybe_par {
    ($iter:expr, $body:expr) => {{
        #[cfg(feature = "parallel")]
        {
            $iter.into_par_iter().for_each($body);
        }
        #[cfg(not(feature = "parallel"))]
        {
            $iter.into_iter().for_each($body);
        }
    }};
}

fn ensure_len<T: Elem>(v: &mut Vec<Vec<T>>, idx: usize, len: usize) {
    while v.len() <= idx {
        v.push(Vec::new());
    }
    if v[idx].len() < len {
        v[idx].resize(len, T::ZERO);
    }
}

impl<T: Elem> StudentNet<T> {
    pub fn init(arch: ArchSpec, seed: u64) -> Result<Self, StudentError> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut conv = Vec::new();
        let mut bn = Vec::new();
        let mut in_ch = arch.input_ch;
        for b in &arch.blocks {
            conv.push(Conv2d::init(in_ch, b.out_ch, &mut rng));
            bn.push(BatchNorm::new(b.out_ch));
            in_ch = b.out_ch;
        }
        let feat = arch.blocks.last().unwrap().out_ch;
        let fc1 = Linear::init(feat, arch.fc_hidden, &mut rng);
        let fc2 = Linear::init(arch.fc_hidden, arch.outputs, &mut rng);
        Ok(Self { arch, conv, bn, fc1, fc2, scratch: Scratch::default() })
    }

    pub fn input_len(&self) -> usize {
        self.arch.input_ch * self.arch.input_size * self.arch.input_size
    }

    pub fn param_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for i in 0..self.conv.len() {
            names.push(format!("conv{i}.w"));
            names.push(format!("conv{i}.b"));
            names.push(format!("bn{i}.gamma"));
            names.push(format!("bn{i}.beta"));
        }
        names.extend(["fc1.w".into(), "fc1.b".into(), "fc2.w".into(), "fc2.b".into()]);
        names
    }

    pub fn params(&self) -> Vec<&Vec<T>> {
        let mut p: Vec<&Vec<T>> = Vec::new();
        for (c, b) in self.conv.iter().zip(&self.bn) {
            p.push(&c.w);
            p.push(&c.b);
            p.push(&b.gamma);
            p.push(&b.beta);
        }
        p.extend([&self.fc1.w, &self.fc1.b, &self.fc2.w, &self.fc2.b]);
        p
    }

    pub fn params_mut(&mut self) -> Vec<&mut Vec<T>> {
        let mut p: Vec<&mut Vec<T>> = Vec::new();
        for (c, b) in self.conv.iter_mut().zip(self.bn.iter_mut()) {
            p.push(&mut c.w);
            p.push(&mut c.b);
            p.push(&mut b.gamma);
            p.push(&mut b.beta);
        }
        p.extend([&mut self.fc1.w, &mut self.fc1.b, &mut self.fc2.w, &mut self.fc2.b]);
        p
    }

    pub fn num_params(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    pub fn zero_grads(&self) -> Grads<T> {
        self.params().iter().map(|p| vec![T::ZERO; p.len()]).collect()
    }

    /// Convolution stage over the whole batch: one GEMM per fixed sample
    /// group, columns packed side by side, output scattered back into
    /// sample-major layout with the bias added.
    fn conv_stage(
        conv: &Conv2d<T>,
        scratch: &mut Scratch<T>,
        input: &[T],
        out: &mut [T],
        n: usize,
        size: usize,
    ) {
        let plane = size * size;
        let k = conv.in_ch * 9;
        let in_len = conv.in_ch * plane;
        let out_len = conv.out_ch * plane;
        let ranges = group_ranges(n);

        for (gi, r) in ranges.iter().enumerate() {
            let gn = r.end - r.start;
            ensure_len(&mut scratch.cols, gi, k * gn * plane);
            ensure_len(&mut scratch.cat, gi, conv.out_ch * gn * plane);
        }
        let cols_slices: Vec<&mut [T]> =
            scratch.cols.iter_mut().take(ranges.len()).map(|v| v.as_mut_slice()).collect();
        let cat_slices: Vec<&mut [T]> =
            scratch.cat.iter_mut().take(ranges.len()).map(|v| v.as_mut_slice()).collect();
        let out_slices = group_slices(out, &ranges, out_len);

        let work: Vec<_> = ranges
            .iter()
            .cloned()
            .zip(cols_slices.into_iter().zip(cat_slices.into_iter().zip(out_slices)))
            .collect();
        maybe_par!(work, |(r, (cols, (cat, out_g))): (
            std::ops::Range<usize>,
            (&mut [T], (&mut [T], &mut [T])),
        )| {
            let gn = r.end - r.start;
            let width = gn * plane;
            for (si, s) in r.clone().enumerate() {
                im2col_strided(
                    &input[s * in_len..(s + 1) * in_len],
                    conv.in_ch,
                    size,
                    size,
                    width,
                    si * plane,
                    cols,
                );
            }
            T::gemm(
                conv.out_ch,
                k,
                width,
                T::ONE,
                &conv.w,
                k as isize,
                1,
                &cols[..k * width],
                width as isize,
                1,
                T::ZERO,
                &mut cat[..conv.out_ch * width],
                width as isize,
                1,
            );
            // Scatter (O, gn*P) into per-sample (O, P) with bias.
            for si in 0..gn {
                for o in 0..conv.out_ch {
                    let src = &cat[o * width + si * plane..][..plane];
                    let dst = &mut out_g[si * out_len + o * plane..][..plane];
                    let bias = conv.b[o];
                    for (d, &s) in dst.iter_mut().zip(src) {
                        *d = s + bias;
                    }
                }
            }
        });
    }

    /// Backward of the convolution stage: per-group GEMMs with the
    /// weight-gradient partials summed in fixed group order.
    #[allow(clippy::too_many_arguments)]
    fn conv_stage_backward(
        conv: &Conv2d<T>,
        scratch: &mut Scratch<T>,
        input: &[T],
        dout: &[T],
        dinput: &mut [T],
        dw: &mut [T],
        db: &mut [T],
        n: usize,
        size: usize,
    ) {
        let plane = size * size;
        let k = conv.in_ch * 9;
        let in_len = conv.in_ch * plane;
        let out_len = conv.out_ch * plane;
        let ranges = group_ranges(n);
        for (gi, r) in ranges.iter().enumerate() {
            let gn = r.end - r.start;
            ensure_len(&mut scratch.cols, gi, k * gn * plane);
            ensure_len(&mut scratch.cat, gi, conv.out_ch * gn * plane);
            ensure_len(&mut scratch.dcols, gi, k * gn * plane);
        }
        let cols_slices: Vec<&mut [T]> =
            scratch.cols.iter_mut().take(ranges.len()).map(|v| v.as_mut_slice()).collect();
        let cat_slices: Vec<&mut [T]> =
            scratch.cat.iter_mut().take(ranges.len()).map(|v| v.as_mut_slice()).collect();
        let dcols_slices: Vec<&mut [T]> =
            scratch.dcols.iter_mut().take(ranges.len()).map(|v| v.as_mut_slice()).collect();
        let din_slices = group_slices(dinput, &ranges, in_len);

        let work: Vec<_> = ranges
            .iter()
            .cloned()
            .zip(cols_slices.into_iter().zip(
                cat_slices.into_iter().zip(dcols_slices.into_iter().zip(din_slices)),
            ))
            .collect();

        let run = |(r, (cols, (cat, (dcols, din)))): (
            std::ops::Range<usize>,
            (&mut [T], (&mut [T], (&mut [T], &mut [T]))),
        )|
         -> (Vec<T>, Vec<f64>) {
            let gn = r.end - r.start;
            let width = gn * plane;
            for (si, s) in r.clone().enumerate() {
                im2col_strided(
                    &input[s * in_len..(s + 1) * in_len],
                    conv.in_ch,
                    size,
                    size,
                    width,
                    si * plane,
                    cols,
                );
            }
            for (si, s) in r.clone().enumerate() {
                for o in 0..conv.out_ch {
                    let src = &dout[s * out_len + o * plane..][..plane];
                    cat[o * width + si * plane..][..plane].copy_from_slice(src);
                }
            }
            // Partial dw = dY_g * cols_g^T.
            let mut dw_part = vec![T::ZERO; conv.w.len()];
            T::gemm(
                conv.out_ch,
                width,
                k,
                T::ONE,
                &cat[..conv.out_ch * width],
                width as isize,
                1,
                &cols[..k * width],
                1,
                width as isize,
                T::ZERO,
                &mut dw_part,
                k as isize,
                1,
            );
            // Partial db, accumulated in f64.
            let mut db_part = vec![0.0f64; conv.out_ch];
            for o in 0..conv.out_ch {
                let mut acc = 0.0f64;
                for &x in &cat[o * width..(o + 1) * width] {
                    acc += x.to_f64();
                }
                db_part[o] = acc;
            }
            // dcols_g = W^T * dY_g, folded back per sample.
            T::gemm(
                k,
                conv.out_ch,
                width,
                T::ONE,
                &conv.w,
                1,
                k as isize,
                &cat[..conv.out_ch * width],
                width as isize,
                1,
                T::ZERO,
                &mut dcols[..k * width],
                width as isize,
                1,
            );
            for si in 0..gn {
                col2im_strided(
                    dcols,
                    conv.in_ch,
                    size,
                    size,
                    width,
                    si * plane,
                    &mut din[si * in_len..(si + 1) * in_len],
                );
            }
            (dw_part, db_part)
        };
        let partials: Vec<(Vec<T>, Vec<f64>)> = {
            #[cfg(feature = "parallel")]
            {
                work.into_par_iter().map(run).collect()
            }
            #[cfg(not(feature = "parallel"))]
            {
                work.into_iter().map(run).collect()
            }
        };
        for (dw_part, db_part) in &partials {
            for (d, p) in dw.iter_mut().zip(dw_part) {
                *d += *p;
            }
            for (d, p) in db.iter_mut().zip(db_part) {
                *d += T::from_f64(*p);
            }
        }
    }

    /// Training-mode forward over a batch (n, C, S, S): batch-statistics
    /// normalization, caches kept for [`Self::backward`].
    pub fn forward_train(&mut self, x: &[T], n: usize) -> Cache<T> {
        assert_eq!(x.len(), n * self.input_len());
        let mut cache = Cache {
            n,
            conv_in: Vec::new(),
            bn_xhat: Vec::new(),
            bn_invstd: Vec::new(),
            gelu_pre: Vec::new(),
            pool_idx: Vec::new(),
            feat: Vec::new(),
            fc1_pre: Vec::new(),
            fc1_act: Vec::new(),
            out: Vec::new(),
        };
        let mut buf = x.to_vec();
        let mut size = self.arch.input_size;
        let n_blocks = self.arch.blocks.len();
        for bi in 0..n_blocks {
            let block = self.arch.blocks[bi];
            let plane = size * size;

            let mut conv_out = vec![T::ZERO; n * block.out_ch * plane];
            Self::conv_stage(&self.conv[bi], &mut self.scratch, &buf, &mut conv_out, n, size);
            cache.conv_in.push(std::mem::take(&mut buf));

            let (xhat, invstd) = self.bn[bi].forward_train(&mut conv_out, n, plane);
            cache.bn_xhat.push(xhat);
            cache.bn_invstd.push(invstd);

            let mut act = vec![T::ZERO; conv_out.len()];
            par_elementwise(&conv_out, &mut act, gelu_into::<T>);
            cache.gelu_pre.push(conv_out);

            if block.pool_after {
                let (oh, ow) = (size / 2, size / 2);
                let out_ch = block.out_ch;
                let mut pooled = vec![T::ZERO; n * out_ch * oh * ow];
                let mut idx = vec![0u8; pooled.len()];
                let pooled_len = out_ch * oh * ow;
                let src_len = out_ch * plane;
                {
                    let work: Vec<(usize, (&mut [T], &mut [u8]))> = pooled
                        .chunks_mut(pooled_len)
                        .zip(idx.chunks_mut(pooled_len))
                        .enumerate()
                        .collect();
                    let act_ref = &act;
                    maybe_par!(work, |(s, (p, i)): (usize, (&mut [T], &mut [u8]))| {
                        maxpool_sample(
                            &act_ref[s * src_len..(s + 1) * src_len],
                            out_ch,
                            size,
                            size,
                            p,
                            i,
                        );
                    });
                }
                cache.pool_idx.push(Some(idx));
                buf = pooled;
                size /= 2;
            } else {
                cache.pool_idx.push(None);
                buf = act;
            }
        }

        // Head: GAP -> fc1 -> GELU -> fc2 -> tanh.
        let feat_ch = self.arch.blocks.last().unwrap().out_ch;
        let plane = size * size;
        let mut feat = vec![T::ZERO; n * feat_ch];
        for s in 0..n {
            gap_sample(
                &buf[s * feat_ch * plane..],
                feat_ch,
                plane,
                &mut feat[s * feat_ch..(s + 1) * feat_ch],
            );
        }
        cache.feat = feat.clone();

        let mut fc1_out = vec![T::ZERO; n * self.arch.fc_hidden];
        self.fc1.forward(&feat, n, &mut fc1_out);
        let mut fc1_act = vec![T::ZERO; fc1_out.len()];
        gelu_into(&fc1_out, &mut fc1_act);
        cache.fc1_pre = fc1_out;
        cache.fc1_act = fc1_act.clone();

        let mut out = vec![T::ZERO; n * self.arch.outputs];
        self.fc2.forward(&fc1_act, n, &mut out);
        for y in &mut out {
            *y = y.tanh();
        }
        cache.out = out;
        cache
    }

    /// Backward pass from d(loss)/d(out) to parameter gradients.
    pub fn backward(&mut self, cache: &Cache<T>, dout: &[T]) -> Grads<T> {
        let n = cache.n;
        let dims = self.arch.stage_dims();
        let mut grads = self.zero_grads();

        // tanh
        let mut dz = vec![T::ZERO; dout.len()];
        for i in 0..dout.len() {
            dz[i] = dout[i] * (T::ONE - cache.out[i] * cache.out[i]);
        }
        // fc2
        let nb = self.conv.len() * 4;
        let mut dfc1_act = vec![T::ZERO; n * self.arch.fc_hidden];
        {
            let (a, b) = grads.split_at_mut(nb + 3);
            self.fc2.backward(&cache.fc1_act, &dz, n, &mut a[nb + 2], &mut b[0], &mut dfc1_act);
        }
        // fc1 gelu
        let mut dfc1_pre = vec![T::ZERO; dfc1_act.len()];
        gelu_backward(&cache.fc1_pre, &dfc1_act, &mut dfc1_pre);
        // fc1
        let mut dfeat = vec![T::ZERO; n * self.fc1.in_f];
        {
            let (a, b) = grads.split_at_mut(nb + 1);
            self.fc1.backward(&cache.feat, &dfc1_pre, n, &mut a[nb], &mut b[0], &mut dfeat);
        }

        // GAP backward into the last block's output shape.
        let feat_ch = self.arch.blocks.last().unwrap().out_ch;
        let final_size = dims.last().unwrap().1;
        let plane = final_size * final_size;
        let mut dbuf = vec![T::ZERO; n * feat_ch * plane];
        for s in 0..n {
            gap_backward_sample(
                &dfeat[s * feat_ch..(s + 1) * feat_ch],
                feat_ch,
                plane,
                &mut dbuf[s * feat_ch * plane..(s + 1) * feat_ch * plane],
            );
        }

        // Blocks in reverse.
        let mut size = final_size;
        for bi in (0..self.arch.blocks.len()).rev() {
            let block = self.arch.blocks[bi];
            if block.pool_after {
                let big = size * 2;
                let idx = cache.pool_idx[bi].as_ref().unwrap();
                let mut dexp = vec![T::ZERO; n * block.out_ch * big * big];
                let small_len = block.out_ch * size * size;
                let big_len = block.out_ch * big * big;
                {
                    let work: Vec<(usize, &mut [T])> =
                        dexp.chunks_mut(big_len).enumerate().collect();
                    let dbuf_ref = &dbuf;
                    maybe_par!(work, |(s, chunk): (usize, &mut [T])| {
                        maxpool_backward_sample(
                            &dbuf_ref[s * small_len..(s + 1) * small_len],
                            &idx[s * small_len..(s + 1) * small_len],
                            block.out_ch,
                            big,
                            big,
                            chunk,
                        );
                    });
                }
                dbuf = dexp;
                size = big;
            }

            // GELU backward (elementwise).
            let mut dpre = vec![T::ZERO; dbuf.len()];
            par_gelu_backward(&cache.gelu_pre[bi], &dbuf, &mut dpre);

            // BatchNorm backward.
            let mut dconv_out = vec![T::ZERO; dpre.len()];
            {
                let (a, b) = grads.split_at_mut(bi * 4 + 3);
                self.bn[bi].backward(
                    &dpre,
                    &cache.bn_xhat[bi],
                    &cache.bn_invstd[bi],
                    n,
                    size * size,
                    &mut a[bi * 4 + 2],
                    &mut b[0],
                    &mut dconv_out,
                );
            }

            // Conv backward.
            let in_ch = dims[bi].0;
            let mut dinput = vec![T::ZERO; n * in_ch * size * size];
            {
                let (a, b) = grads.split_at_mut(bi * 4 + 1);
                Self::conv_stage_backward(
                    &self.conv[bi],
                    &mut self.scratch,
                    &cache.conv_in[bi],
                    &dconv_out,
                    &mut dinput,
                    &mut a[bi * 4],
                    &mut b[0],
                    n,
                    size,
                );
            }
            dbuf = dinput;
        }
        grads
    }

    /// Evaluation-mode batch forward with frozen normalization statistics.
    pub fn forward_eval(&mut self, x: &[T], n: usize) -> Vec<T> {
        assert_eq!(x.len(), n * self.input_len());
        let mut buf = x.to_vec();
        let mut size = self.arch.input_size;
        let n_blocks = self.arch.blocks.len();
        for bi in 0..n_blocks {
            let block = self.arch.blocks[bi];
            let plane = size * size;
            let mut conv_out = vec![T::ZERO; n * block.out_ch * plane];
            Self::conv_stage(&self.conv[bi], &mut self.scratch, &buf, &mut conv_out, n, size);
            self.bn[bi].forward_eval(&mut conv_out, n, plane);
            let mut act = vec![T::ZERO; conv_out.len()];
            par_elementwise(&conv_out, &mut act, gelu_into::<T>);
            if block.pool_after {
                let (oh, ow) = (size / 2, size / 2);
                let out_ch = block.out_ch;
                let mut pooled = vec![T::ZERO; n * out_ch * oh * ow];
                let mut idx = vec![0u8; pooled.len()];
                let pooled_len = out_ch * oh * ow;
                let src_len = out_ch * plane;
                for s in 0..n {
                    maxpool_sample(
                        &act[s * src_len..(s + 1) * src_len],
                        out_ch,
                        size,
                        size,
                        &mut pooled[s * pooled_len..(s + 1) * pooled_len],
                        &mut idx[s * pooled_len..(s + 1) * pooled_len],
                    );
                }
                buf = pooled;
                size /= 2;
            } else {
                buf = act;
            }
        }
        let feat_ch = self.arch.blocks.last().unwrap().out_ch;
        let plane = size * size;
        let mut feat = vec![T::ZERO; n * feat_ch];
        for s in 0..n {
            gap_sample(
                &buf[s * feat_ch * plane..],
                feat_ch,
                plane,
                &mut feat[s * feat_ch..(s + 1) * feat_ch],
            );
        }
        let mut fc1_out = vec![T::ZERO; n * self.arch.fc_hidden];
        self.fc1.forward(&feat, n, &mut fc1_out);
        let mut fc1_act = vec![T::ZERO; fc1_out.len()];
        gelu_into(&fc1_out, &mut fc1_act);
        let mut out = vec![T::ZERO; n * self.arch.outputs];
        self.fc2.forward(&fc1_act, n, &mut out);
        for y in &mut out {
            *y = y.tanh();
        }
        out
    }

    /// Single-frame evaluation forward; the deployment-facing entry point
    /// for a trained network.
    pub fn forward(&mut self, t: &FrameTensor) -> Result<[f64; 3], StudentError> {
        let want = (
            self.arch.input_ch as u32,
            self.arch.input_size as u32,
            self.arch.input_size as u32,
        );
        if t.shape() != want {
            return Err(StudentError::ShapeMismatch { got: t.shape(), want });
        }
        let x: Vec<T> = t.data.iter().map(|&v| T::from_f32(v)).collect();
        let y = self.forward_eval(&x, 1);
        Ok([y[0].to_f64(), y[1].to_f64(), y[2].to_f64()])
    }

    /// Cast every tensor (parameters and running statistics) to another
    /// element type.
    pub fn cast<U: Elem>(&self) -> StudentNet<U> {
        let conv = self
            .conv
            .iter()
            .map(|c| Conv2d {
                in_ch: c.in_ch,
                out_ch: c.out_ch,
                w: c.w.iter().map(|&x| U::from_f64(x.to_f64())).collect(),
                b: c.b.iter().map(|&x| U::from_f64(x.to_f64())).collect(),
            })
            .collect();
        let bn = self
            .bn
            .iter()
            .map(|b| BatchNorm {
                ch: b.ch,
                gamma: b.gamma.iter().map(|&x| U::from_f64(x.to_f64())).collect(),
                beta: b.beta.iter().map(|&x| U::from_f64(x.to_f64())).collect(),
                running_mean: b.running_mean.clone(),
                running_var: b.running_var.clone(),
                momentum: b.momentum,
                eps: b.eps,
            })
            .collect();
        let lin = |l: &Linear<T>| Linear {
            in_f: l.in_f,
            out_f: l.out_f,
            w: l.w.iter().map(|&x| U::from_f64(x.to_f64())).collect(),
            b: l.b.iter().map(|&x| U::from_f64(x.to_f64())).collect(),
        };
        StudentNet {
            arch: self.arch.clone(),
            conv,
            bn,
            fc1: lin(&self.fc1),
            fc2: lin(&self.fc2),
            scratch: Scratch::default(),
        }
    }
}

/// Apply an out-of-place elementwise kernel over fixed-size chunks,
/// in parallel when enabled. Chunk boundaries are content-independent,
/// so results do not depend on the worker count.
fn par_elementwise<T: Elem>(src: &[T], dst: &mut [T], f: fn(&[T], &mut [T])) {
    const CHUNK: usize = 1 << 14;
    let work: Vec<(usize, &mut [T])> = dst.chunks_mut(CHUNK).enumerate().collect();
    maybe_par!(work, |(i, d): (usize, &mut [T])| {
        let s = &src[i * CHUNK..i * CHUNK + d.len()];
        f(s, d);
    });
}

fn par_gelu_backward<T: Elem>(pre: &[T], dout: &[T], dinput: &mut [T]) {
    const CHUNK: usize = 1 << 14;
    let work: Vec<(usize, &mut [T])> = dinput.chunks_mut(CHUNK).enumerate().collect();
    maybe_par!(work, |(i, d): (usize, &mut [T])| {
        let lo = i * CHUNK;
        gelu_backward(&pre[lo..lo + d.len()], &dout[lo..lo + d.len()], d);
    });
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngExt;

    fn tiny_arch() -> ArchSpec {
        ArchSpec {
            input_size: 8,
            input_ch: 2,
            blocks: vec![
                BlockSpec { out_ch: 4, pool_after: true },
                BlockSpec { out_ch: 6, pool_after: false },
            ],
            fc_hidden: 5,
            outputs: 3,
        }
    }

    #[test]
    fn zero_weights_give_zero_output() {
        let mut net = StudentNet::<f64>::init(tiny_arch(), 1).unwrap();
        for p in net.params_mut() {
            p.fill(0.0);
        }
        let t = FrameTensor::new(8, 8, 2);
        let y = net.forward(&t).unwrap();
        assert_eq!(y, [0.0, 0.0, 0.0]);
    }

    #[test]
    fn forward_is_deterministic() {
        use rand::SeedableRng;
        let mut net = StudentNet::<f64>::init(tiny_arch(), 7).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let mut t = FrameTensor::new(8, 8, 2);
        for v in &mut t.data {
            *v = rng.random_range(0.0..1.0);
        }
        let a = net.forward(&t).unwrap();
        let b = net.forward(&t).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn outputs_stay_in_open_unit_ball() {
        use rand::SeedableRng;
        let mut net = StudentNet::<f64>::init(tiny_arch(), 3).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let mut t = FrameTensor::new(8, 8, 2);
            for v in &mut t.data {
                *v = rng.random_range(0.0..1.0);
            }
            let y = net.forward(&t).unwrap();
            for c in y {
                assert!(c > -1.0 && c < 1.0);
            }
        }
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut net = StudentNet::<f64>::init(tiny_arch(), 1).unwrap();
        let t = FrameTensor::new(4, 4, 2);
        assert!(matches!(net.forward(&t), Err(StudentError::ShapeMismatch { .. })));
    }

    #[test]
    fn parameter_registry_is_consistent() {
        let net = StudentNet::<f64>::init(tiny_arch(), 1).unwrap();
        assert_eq!(net.param_names().len(), net.params().len());
        let grads = net.zero_grads();
        for (g, p) in grads.iter().zip(net.params()) {
            assert_eq!(g.len(), p.len());
        }
    }

    #[test]
    fn batch_forward_matches_single_sample() {
        use rand::SeedableRng;
        // Group-packed GEMM must agree with one-at-a-time evaluation.
        let mut net = StudentNet::<f64>::init(tiny_arch(), 11).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(12);
        let n = 7usize;
        let x: Vec<f64> = (0..n * net.input_len()).map(|_| rng.random_range(0.0..1.0)).collect();
        let batch = net.forward_eval(&x, n);
        for s in 0..n {
            let one = net.forward_eval(&x[s * net.input_len()..(s + 1) * net.input_len()], 1);
            for (a, b) in batch[s * 3..(s + 1) * 3].iter().zip(&one) {
                assert!((a - b).abs() < 1e-12, "{a} vs {b}");
            }
        }
    }

    /// Straight-line scalar reference forward: plain nested loops, no
    /// GEMM, no shared layer code.
    fn oracle_forward(net: &StudentNet<f64>, t: &FrameTensor) -> [f64; 3] {
        let mut size = net.arch.input_size;
        let mut buf: Vec<f64> = t.data.iter().map(|&v| v as f64).collect();
        let mut ch = net.arch.input_ch;
        for (bi, block) in net.arch.blocks.iter().enumerate() {
            let conv = &net.conv[bi];
            let mut out = vec![0.0; block.out_ch * size * size];
            for o in 0..block.out_ch {
                for y in 0..size as isize {
                    for x in 0..size as isize {
                        let mut acc = conv.b[o];
                        for ci in 0..ch {
                            for ky in -1..=1isize {
                                for kx in -1..=1isize {
                                    let (sy, sx) = (y + ky, x + kx);
                                    if sy < 0 || sx < 0 || sy >= size as isize || sx >= size as isize
                                    {
                                        continue;
                                    }
                                    let wv = conv.w[((o * ch + ci) * 3 + (ky + 1) as usize) * 3
                                        + (kx + 1) as usize];
                                    acc += wv
                                        * buf[ci * size * size + sy as usize * size + sx as usize];
                                }
                            }
                        }
                        out[o * size * size + y as usize * size + x as usize] = acc;
                    }
                }
            }
            // Eval-mode batch norm followed by GELU.
            let bn = &net.bn[bi];
            for o in 0..block.out_ch {
                let scale = bn.gamma[o] / (bn.running_var[o] + bn.eps).sqrt();
                let shift = bn.beta[o] - bn.running_mean[o] * scale;
                for i in 0..size * size {
                    let v = out[o * size * size + i] * scale + shift;
                    let u = 0.797_884_560_802_865_4 * (v + 0.044715 * v * v * v);
                    out[o * size * size + i] = 0.5 * v * (1.0 + u.tanh());
                }
            }
            buf = out;
            ch = block.out_ch;
            if block.pool_after {
                let half = size / 2;
                let mut pooled = vec![0.0; ch * half * half];
                for o in 0..ch {
                    for y in 0..half {
                        for x in 0..half {
                            let mut m = f64::NEG_INFINITY;
                            for dy in 0..2 {
                                for dx in 0..2 {
                                    m = m
                                        .max(buf[o * size * size + (2 * y + dy) * size + 2 * x + dx]);
                                }
                            }
                            pooled[o * half * half + y * half + x] = m;
                        }
                    }
                }
                buf = pooled;
                size = half;
            }
        }
        let mut feat = vec![0.0; ch];
        for o in 0..ch {
            feat[o] = buf[o * size * size..(o + 1) * size * size].iter().sum::<f64>()
                / (size * size) as f64;
        }
        let mut h = vec![0.0; net.arch.fc_hidden];
        for (o, hv) in h.iter_mut().enumerate() {
            let mut acc = net.fc1.b[o];
            for (i, f) in feat.iter().enumerate() {
                acc += net.fc1.w[o * feat.len() + i] * f;
            }
            let u = 0.797_884_560_802_865_4 * (acc + 0.044715 * acc * acc * acc);
            *hv = 0.5 * acc * (1.0 + u.tanh());
        }
        let mut y = [0.0; 3];
        for (o, yv) in y.iter_mut().enumerate() {
            let mut acc = net.fc2.b[o];
            for (i, hv) in h.iter().enumerate() {
                acc += net.fc2.w[o * h.len() + i] * hv;
            }
            *yv = acc.tanh();
        }
        y
    }

    #[test]
    fn forward_matches_scalar_oracle() {
        use rand::SeedableRng;
        for seed in 0..5 {
            let mut net = StudentNet::<f64>::init(tiny_arch(), seed).unwrap();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed + 100);
            let mut t = FrameTensor::new(8, 8, 2);
            for v in &mut t.data {
                *v = rng.random_range(0.0..1.0);
            }
            let got = net.forward(&t).unwrap();
            let want = oracle_forward(&net, &t);
            for (g, w) in got.iter().zip(want) {
                assert!((g - w).abs() < 1e-6, "{g} vs {w}");
            }
        }
    }

    #[test]
    fn f32_cast_tracks_f64_network() {
        use rand::SeedableRng;
        let mut net = StudentNet::<f64>::init(tiny_arch(), 21).unwrap();
        let mut net32: StudentNet<f32> = net.cast();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(22);
        for _ in 0..10 {
            let mut t = FrameTensor::new(8, 8, 2);
            for v in &mut t.data {
                *v = rng.random_range(0.0..1.0);
            }
            let a = net.forward(&t).unwrap();
            let b = net32.forward(&t).unwrap();
            for (x, y) in a.iter().zip(b) {
                assert!((x - y).abs() < 1e-4, "{x} vs {y}");
            }
        }
    }
}

#[cfg(test)]
mod gradcheck {
    use super::*;
    use crate::student::train::{mse_grad, mse_loss};
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn loss_of(net: &mut StudentNet<f64>, x: &[f64], targets: &[f64], n: usize) -> f64 {
        let cache = net.forward_train(x, n);
        mse_loss(&cache.out, targets)
    }

    /// Central finite differences against the analytic gradients over
    /// every parameter of a small net.
    fn check_net(seed: u64, (rel_tol, abs_floor): (f64, f64)) {
        let arch = ArchSpec {
            input_size: 8,
            input_ch: 2,
            blocks: vec![
                BlockSpec { out_ch: 3, pool_after: true },
                BlockSpec { out_ch: 4, pool_after: false },
            ],
            fc_hidden: 4,
            outputs: 3,
        };
        let mut net = StudentNet::<f64>::init(arch, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabcd);
        let n = 3usize;
        let x: Vec<f64> = (0..n * net.input_len()).map(|_| rng.random_range(0.0..1.0)).collect();
        let targets: Vec<f64> = (0..n * 3).map(|_| rng.random_range(-0.8..0.8)).collect();

        let cache = net.forward_train(&x, n);
        let dout = mse_grad(&cache.out, &targets);
        let grads = net.backward(&cache, &dout);

        let h = 1e-4;
        for ti in 0..grads.len() {
            for wi in 0..grads[ti].len() {
                let orig = net.params()[ti][wi];
                net.params_mut()[ti][wi] = orig + h;
                let lp = loss_of(&mut net, &x, &targets, n);
                net.params_mut()[ti][wi] = orig - h;
                let lm = loss_of(&mut net, &x, &targets, n);
                net.params_mut()[ti][wi] = orig;
                let fd = (lp - lm) / (2.0 * h);
                let an = grads[ti][wi];
                let denom = fd.abs().max(an.abs()).max(abs_floor);
                assert!(
                    (fd - an).abs() / denom <= rel_tol,
                    "tensor {} [{}]: fd {} vs analytic {}",
                    net.param_names()[ti],
                    wi,
                    fd,
                    an
                );
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        for seed in [1u64, 2] {
            check_net(seed, (1e-3, 1e-7));
        }
    }
}
