use rand::Rng;
use rayon::prelude::*;

use super::Tensor;
use crate::error::{domain_err, shape_err, Result};

/// Convolution kernel, weights laid out `(out_ch, in_ch, kh, kw)`.
///
/// The same layout is used for transposed convolution, where `in_ch` is the
/// channel count of the tensor being up-sampled.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams {
    pub out_ch: usize,
    pub in_ch: usize,
    pub kh: usize,
    pub kw: usize,
    pub weights: Vec<f64>,
    pub bias: Option<Vec<f64>>,
    pub stride: usize,
    pub dilation: usize,
    pub padding: usize,
}

impl ConvParams {
    pub fn new(
        out_ch: usize,
        in_ch: usize,
        kh: usize,
        kw: usize,
        weights: Vec<f64>,
        bias: Option<Vec<f64>>,
    ) -> Result<Self> {
        if weights.len() != out_ch * in_ch * kh * kw {
            return shape_err(
                "ConvParams::new",
                format!(
                    "{} weights for kernel {}x{}x{}x{}",
                    weights.len(),
                    out_ch,
                    in_ch,
                    kh,
                    kw
                ),
            );
        }
        if let Some(b) = &bias {
            if b.len() != out_ch {
                return shape_err(
                    "ConvParams::new",
                    format!("{} biases for {} output channels", b.len(), out_ch),
                );
            }
        }
        if out_ch == 0 || in_ch == 0 || kh == 0 || kw == 0 {
            return shape_err("ConvParams::new", "zero-sized kernel");
        }
        Ok(Self {
            out_ch,
            in_ch,
            kh,
            kw,
            weights,
            bias,
            stride: 1,
            dilation: 1,
            padding: 0,
        })
    }

    pub fn zeros(out_ch: usize, in_ch: usize, kh: usize, kw: usize) -> Self {
        Self::new(
            out_ch,
            in_ch,
            kh,
            kw,
            vec![0.0; out_ch * in_ch * kh * kw],
            None,
        )
        .expect("consistent by construction")
    }

    /// 1x1 kernel copying input channel `i` to output channel `i`.
    pub fn identity_1x1(channels: usize) -> Self {
        let mut p = Self::zeros(channels, channels, 1, 1);
        for c in 0..channels {
            p.weights[c * channels + c] = 1.0;
        }
        p
    }

    /// Glorot-uniform weights and small uniform biases.
    pub fn random(
        out_ch: usize,
        in_ch: usize,
        kh: usize,
        kw: usize,
        with_bias: bool,
        rng: &mut impl Rng,
    ) -> Self {
        let fan_in = (in_ch * kh * kw) as f64;
        let fan_out = (out_ch * kh * kw) as f64;
        let bound = (6.0 / (fan_in + fan_out)).sqrt();
        let weights = (0..out_ch * in_ch * kh * kw)
            .map(|_| rng.random_range(-bound..bound))
            .collect();
        let bias = with_bias.then(|| (0..out_ch).map(|_| rng.random_range(-0.1..0.1)).collect());
        Self::new(out_ch, in_ch, kh, kw, weights, bias).expect("consistent by construction")
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.stride = stride;
        self
    }

    pub fn with_dilation(mut self, dilation: usize) -> Self {
        self.dilation = dilation;
        self
    }

    pub fn with_padding(mut self, padding: usize) -> Self {
        self.padding = padding;
        self
    }

    /// Padding that keeps spatial size at stride 1 (odd square kernels only).
    pub fn same(self) -> Self {
        let pad = self.dilation * (self.kh - 1) / 2;
        self.with_padding(pad)
    }

    #[inline]
    pub fn w(&self, o: usize, i: usize, ky: usize, kx: usize) -> f64 {
        self.weights[((o * self.in_ch + i) * self.kh + ky) * self.kw + kx]
    }

    pub fn output_dims(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        if self.stride == 0 || self.dilation == 0 {
            return domain_err("conv2d", "stride and dilation must be >= 1");
        }
        let span_h = self.dilation * (self.kh - 1) + 1;
        let span_w = self.dilation * (self.kw - 1) + 1;
        let (ph, pw) = (h + 2 * self.padding, w + 2 * self.padding);
        if ph < span_h || pw < span_w {
            return shape_err(
                "conv2d",
                format!(
                    "padded input {}x{} smaller than dilated kernel {}x{}",
                    ph, pw, span_h, span_w
                ),
            );
        }
        Ok((
            (ph - span_h) / self.stride + 1,
            (pw - span_w) / self.stride + 1,
        ))
    }

    fn check_input(&self, x: &Tensor, op: &'static str) -> Result<()> {
        if x.channels() != self.in_ch {
            return shape_err(
                op,
                format!(
                    "input has {} channels, kernel expects in_ch = {}",
                    x.channels(),
                    self.in_ch
                ),
            );
        }
        Ok(())
    }
}

/// Output columns `lo..hi` whose input column `ox * stride + dx` lies in `0..w`.
fn valid_range(ow: usize, w: usize, stride: usize, dx: isize) -> (usize, usize) {
    let lo = if dx >= 0 { 0 } else { (-dx) as usize }.div_ceil(stride);
    let hi = if (w as isize) <= dx {
        0
    } else {
        ((w as isize - dx) as usize).div_ceil(stride).min(ow)
    };
    (lo.min(hi), hi)
}

/// Direct 2D convolution (cross-correlation), zero padding.
pub fn conv2d(x: &Tensor, p: &ConvParams) -> Result<Tensor> {
    p.check_input(x, "conv2d")?;
    let (h, w) = (x.height(), x.width());
    let (oh, ow) = p.output_dims(h, w)?;
    let plane = oh * ow;
    let mut out = vec![0.0; p.out_ch * plane];
    let pad = p.padding as isize;
    out.par_chunks_mut(plane).enumerate().for_each(|(o, dst)| {
        if let Some(b) = &p.bias {
            dst.iter_mut().for_each(|v| *v = b[o]);
        }
        for i in 0..p.in_ch {
            let src = x.channel(i);
            for ky in 0..p.kh {
                for kx in 0..p.kw {
                    let wv = p.w(o, i, ky, kx);
                    if wv == 0.0 {
                        continue;
                    }
                    let dy = (ky * p.dilation) as isize - pad;
                    let dx = (kx * p.dilation) as isize - pad;
                    let (lo, hi) = valid_range(ow, w, p.stride, dx);
                    if lo >= hi {
                        continue;
                    }
                    for oy in 0..oh {
                        let iy = (oy * p.stride) as isize + dy;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let row = &src[iy as usize * w..(iy as usize + 1) * w];
                        let drow = &mut dst[oy * ow + lo..oy * ow + hi];
                        let start = (lo * p.stride) as isize + dx;
                        if p.stride == 1 {
                            let srow = &row[start as usize..start as usize + (hi - lo)];
                            for (d, v) in drow.iter_mut().zip(srow) {
                                *d += wv * v;
                            }
                        } else {
                            for (j, d) in drow.iter_mut().enumerate() {
                                *d += wv * row[start as usize + j * p.stride];
                            }
                        }
                    }
                }
            }
        }
    });
    Tensor::from_vec(p.out_ch, oh, ow, out)
}

/// Gradients of a scalar loss through [`conv2d`].
#[derive(Debug, Clone)]
pub struct ConvGrads {
    pub input: Tensor,
    pub weights: Vec<f64>,
    pub bias: Option<Vec<f64>>,
}

pub fn conv2d_backward(x: &Tensor, p: &ConvParams, grad_out: &Tensor) -> Result<ConvGrads> {
    p.check_input(x, "conv2d_backward")?;
    let (h, w) = (x.height(), x.width());
    let (oh, ow) = p.output_dims(h, w)?;
    if grad_out.shape() != (p.out_ch, oh, ow) {
        return shape_err(
            "conv2d_backward",
            format!(
                "gradient {:?}, expected {:?}",
                grad_out.shape(),
                (p.out_ch, oh, ow)
            ),
        );
    }
    let pad = p.padding as isize;
    let mut gx = Tensor::zeros(p.in_ch, h, w);
    let mut gw = vec![0.0; p.weights.len()];
    for o in 0..p.out_ch {
        let g = grad_out.channel(o);
        for i in 0..p.in_ch {
            for ky in 0..p.kh {
                for kx in 0..p.kw {
                    let widx = ((o * p.in_ch + i) * p.kh + ky) * p.kw + kx;
                    let wv = p.weights[widx];
                    let dy = (ky * p.dilation) as isize - pad;
                    let dx = (kx * p.dilation) as isize - pad;
                    let mut acc = 0.0;
                    for oy in 0..oh {
                        let iy = (oy * p.stride) as isize + dy;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for ox in 0..ow {
                            let ix = (ox * p.stride) as isize + dx;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            let gv = g[oy * ow + ox];
                            let xi = x.index(i, iy as usize, ix as usize);
                            acc += gv * x.data()[xi];
                            gx.data_mut()[xi] += gv * wv;
                        }
                    }
                    gw[widx] = acc;
                }
            }
        }
    }
    let bias = p.bias.as_ref().map(|_| {
        (0..p.out_ch)
            .map(|o| grad_out.channel(o).iter().sum())
            .collect()
    });
    Ok(ConvGrads {
        input: gx,
        weights: gw,
        bias,
    })
}

/// 3x3 stride-2 transposed convolution producing exactly `2H x 2W`.
///
/// Output size follows `(H - 1) * 2 - 2 * padding + 3 + output_padding`; with
/// padding 1 and an implicit output padding of 1 this is `2H`. Input pixel
/// `(y, x)` scatters its kernel footprint onto output rows `2y - 1 ..= 2y + 1`
/// and columns `2x - 1 ..= 2x + 1`; taps falling outside are discarded.
pub fn conv_transpose2d_x2(x: &Tensor, p: &ConvParams) -> Result<Tensor> {
    if p.stride != 2 || p.kh != 3 || p.kw != 3 || p.dilation != 1 || p.padding != 1 {
        return domain_err(
            "conv_transpose2d_x2",
            format!(
                "requires 3x3 kernel, stride 2, padding 1, dilation 1; got {}x{} stride {} padding {} dilation {}",
                p.kh, p.kw, p.stride, p.padding, p.dilation
            ),
        );
    }
    p.check_input(x, "conv_transpose2d_x2")?;
    let (h, w) = (x.height(), x.width());
    let (oh, ow) = (2 * h, 2 * w);
    let plane = oh * ow;
    let mut out = vec![0.0; p.out_ch * plane];
    out.par_chunks_mut(plane).enumerate().for_each(|(o, dst)| {
        if let Some(b) = &p.bias {
            dst.iter_mut().for_each(|v| *v = b[o]);
        }
        for i in 0..p.in_ch {
            let src = x.channel(i);
            for ky in 0..3 {
                for kx in 0..3 {
                    let wv = p.w(o, i, ky, kx);
                    for iy in 0..h {
                        let oy = (2 * iy + ky) as isize - 1;
                        if oy < 0 || oy >= oh as isize {
                            continue;
                        }
                        for ix in 0..w {
                            let ox = (2 * ix + kx) as isize - 1;
                            if ox < 0 || ox >= ow as isize {
                                continue;
                            }
                            dst[oy as usize * ow + ox as usize] += wv * src[iy * w + ix];
                        }
                    }
                }
            }
        }
    });
    Tensor::from_vec(p.out_ch, oh, ow, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Nested-loop reference written straight from the definition.
    fn conv_oracle(x: &Tensor, p: &ConvParams) -> Tensor {
        let (oh, ow) = p.output_dims(x.height(), x.width()).unwrap();
        Tensor::from_fn(p.out_ch, oh, ow, |o, oy, ox| {
            let mut s = p.bias.as_ref().map_or(0.0, |b| b[o]);
            for i in 0..p.in_ch {
                for ky in 0..p.kh {
                    for kx in 0..p.kw {
                        let iy = (oy * p.stride + ky * p.dilation) as i64 - p.padding as i64;
                        let ix = (ox * p.stride + kx * p.dilation) as i64 - p.padding as i64;
                        if iy >= 0
                            && ix >= 0
                            && (iy as usize) < x.height()
                            && (ix as usize) < x.width()
                        {
                            s += p.w(o, i, ky, kx) * x.get(i, iy as usize, ix as usize);
                        }
                    }
                }
            }
            s
        })
    }

    fn random_tensor(c: usize, h: usize, w: usize, rng: &mut ChaCha8Rng) -> Tensor {
        Tensor::from_fn(c, h, w, |_, _, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn ones_kernel_center_is_nine() {
        let x = Tensor::full(1, 3, 3, 1.0);
        let p = ConvParams::new(1, 1, 3, 3, vec![1.0; 9], None)
            .unwrap()
            .with_padding(1);
        let y = conv2d(&x, &p).unwrap();
        assert_eq!(y.shape(), (1, 3, 3));
        assert_eq!(y.get(0, 1, 1), 9.0);
        assert_eq!(y.get(0, 0, 0), 4.0);
    }

    #[test]
    fn identity_1x1_is_passthrough() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_tensor(3, 4, 5, &mut rng);
        let p = ConvParams::identity_1x1(3);
        assert_eq!(conv2d(&x, &p).unwrap(), x);
    }

    #[test]
    fn matches_nested_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = random_tensor(2, 5, 5, &mut rng);
        let p = ConvParams::random(3, 2, 3, 3, true, &mut rng).with_padding(1);
        let y = conv2d(&x, &p).unwrap();
        assert!(y.max_abs_diff(&conv_oracle(&x, &p)) < 1e-12);

        let strided = p.clone().with_stride(2).with_dilation(2).with_padding(2);
        let y = conv2d(&x, &strided).unwrap();
        assert_eq!(y.shape(), (3, 3, 3));
        assert!(y.max_abs_diff(&conv_oracle(&x, &strided)) < 1e-12);
    }

    #[test]
    fn output_shape_formula() {
        let p = ConvParams::zeros(4, 1, 3, 3).with_stride(2).with_padding(1);
        assert_eq!(p.output_dims(16, 9).unwrap(), (8, 5));
        let dil = ConvParams::zeros(1, 4, 3, 3).with_dilation(3).same();
        assert_eq!(dil.padding, 3);
        assert_eq!(dil.output_dims(10, 12).unwrap(), (10, 12));
    }

    #[test]
    fn channel_mismatch_names_dimensions() {
        let x = Tensor::zeros(2, 4, 4);
        let p = ConvParams::zeros(1, 3, 3, 3);
        let err = conv2d(&x, &p).unwrap_err().to_string();
        assert!(
            err.contains("2 channels") && err.contains("in_ch = 3"),
            "{err}"
        );
        assert!(conv2d(&Tensor::zeros(3, 1, 1), &p).is_err());
    }

    #[test]
    fn transposed_doubles_size() {
        let p = ConvParams::zeros(1, 1, 3, 3).with_stride(2).with_padding(1);
        let y = conv_transpose2d_x2(&Tensor::zeros(1, 2, 2), &p).unwrap();
        assert_eq!(y.shape(), (1, 4, 4));
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn transposed_delta_places_footprint() {
        let mut x = Tensor::zeros(1, 3, 3);
        x.set(0, 0, 0, 1.0);
        let p = ConvParams::new(1, 1, 3, 3, vec![1.0; 9], None)
            .unwrap()
            .with_stride(2)
            .with_padding(1);
        let y = conv_transpose2d_x2(&x, &p).unwrap();
        // Scatter oracle: tap (ky, kx) of input (0, 0) lands at (ky - 1, kx - 1).
        let mut expect = Tensor::zeros(1, 6, 6);
        for ky in 0..3i64 {
            for kx in 0..3i64 {
                if ky >= 1 && kx >= 1 {
                    expect.set(0, (ky - 1) as usize, (kx - 1) as usize, 1.0);
                }
            }
        }
        assert_eq!(y, expect);

        // An interior delta shows the whole 3x3 footprint.
        let mut x = Tensor::zeros(1, 3, 3);
        x.set(0, 1, 1, 1.0);
        let y = conv_transpose2d_x2(&x, &p).unwrap();
        let ones: Vec<(usize, usize)> = (0..6)
            .flat_map(|r| (0..6).map(move |c| (r, c)))
            .filter(|&(r, c)| y.get(0, r, c) == 1.0)
            .collect();
        assert_eq!(ones.len(), 9);
        assert!(ones
            .iter()
            .all(|&(r, c)| (1..=3).contains(&r) && (1..=3).contains(&c)));
    }

    #[test]
    fn transposed_rejects_bad_kernel() {
        let p = ConvParams::zeros(1, 1, 3, 3).with_padding(1);
        assert!(conv_transpose2d_x2(&Tensor::zeros(1, 2, 2), &p).is_err());
        let p = ConvParams::zeros(1, 1, 5, 5).with_stride(2).with_padding(1);
        assert!(conv_transpose2d_x2(&Tensor::zeros(1, 2, 2), &p).is_err());
    }
}
