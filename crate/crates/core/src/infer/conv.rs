//! Standard, depthwise and pointwise convolutions with "same" padding.
//!
//! All tensors are channel-last. Kernels are laid out `[ky][kx][in][out]`,
//! depthwise kernels `[ky][kx][channel]`, pointwise kernels `[in][out]`.

use super::{InferError, Result};

/// A square feature map of `side × side × channels` values, channel-last.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMap {
    side: usize,
    channels: usize,
    data: Vec<f32>,
}

impl FeatureMap {
    pub fn new(side: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if side == 0 || channels == 0 || data.len() != side * side * channels {
            return Err(InferError::Shape(format!(
                "feature map {side}x{side}x{channels} cannot hold {} values",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(InferError::NonFinite("feature map"));
        }
        Ok(Self {
            side,
            channels,
            data,
        })
    }

    pub fn zeros(side: usize, channels: usize) -> Self {
        Self {
            side,
            channels,
            data: vec![0.0; side * side * channels],
        }
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn values(&self) -> &[f32] {
        &self.data
    }

    pub fn into_values(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f32 {
        self.data[(y * self.side + x) * self.channels + c]
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub(crate) fn relu_in_place(&mut self) {
        for v in &mut self.data {
            *v = v.max(0.0);
        }
    }

    /// Mean over spatial positions; yields a `1 × 1 × channels` map.
    pub fn global_average_pool(&self) -> FeatureMap {
        let mut acc = vec![0.0f32; self.channels];
        for px in self.data.chunks_exact(self.channels) {
            for (a, v) in acc.iter_mut().zip(px) {
                *a += v;
            }
        }
        let n = (self.side * self.side) as f32;
        acc.iter_mut().for_each(|a| *a /= n);
        FeatureMap {
            side: 1,
            channels: self.channels,
            data: acc,
        }
    }
}

/// Dense `D_K × D_K × M × N` kernel.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvKernel {
    pub size: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub data: Vec<f32>,
}

impl ConvKernel {
    pub fn new(size: usize, in_channels: usize, out_channels: usize, data: Vec<f32>) -> Result<Self> {
        let k = Self {
            size,
            in_channels,
            out_channels,
            data,
        };
        k.validate()?;
        Ok(k)
    }

    fn validate(&self) -> Result<()> {
        if self.size.is_multiple_of(2) {
            return Err(InferError::InvalidLayer(format!(
                "kernel size {} must be odd",
                self.size
            )));
        }
        let expected = self.size * self.size * self.in_channels * self.out_channels;
        if self.data.len() != expected {
            return Err(InferError::Shape(format!(
                "kernel {0}x{0}x{1}x{2} needs {expected} weights, got {3}",
                self.size,
                self.in_channels,
                self.out_channels,
                self.data.len()
            )));
        }
        check_finite(&self.data, "convolution weights")
    }

    #[inline]
    pub fn at(&self, ky: usize, kx: usize, m: usize, n: usize) -> f32 {
        self.data[((ky * self.size + kx) * self.in_channels + m) * self.out_channels + n]
    }
}

/// Per-channel `D_K × D_K × M` spatial kernel.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthwiseKernel {
    pub size: usize,
    pub channels: usize,
    pub data: Vec<f32>,
}

impl DepthwiseKernel {
    pub fn new(size: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if size.is_multiple_of(2) {
            return Err(InferError::InvalidLayer(format!(
                "kernel size {size} must be odd"
            )));
        }
        if data.len() != size * size * channels {
            return Err(InferError::Shape(format!(
                "depthwise kernel {size}x{size}x{channels} needs {} weights, got {}",
                size * size * channels,
                data.len()
            )));
        }
        check_finite(&data, "depthwise weights")?;
        Ok(Self {
            size,
            channels,
            data,
        })
    }
}

/// `M × N` channel-mixing matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct PointwiseKernel {
    pub in_channels: usize,
    pub out_channels: usize,
    pub data: Vec<f32>,
}

impl PointwiseKernel {
    pub fn new(in_channels: usize, out_channels: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != in_channels * out_channels {
            return Err(InferError::Shape(format!(
                "pointwise kernel {in_channels}x{out_channels} needs {} weights, got {}",
                in_channels * out_channels,
                data.len()
            )));
        }
        check_finite(&data, "pointwise weights")?;
        Ok(Self {
            in_channels,
            out_channels,
            data,
        })
    }
}

pub(crate) fn check_finite(values: &[f32], what: &'static str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(InferError::NonFinite(what))
    }
}

/// Output side and leading pad for TensorFlow-style "same" padding.
#[inline]
pub(crate) fn same_geometry(side: usize, kernel: usize, stride: usize) -> (usize, usize) {
    let out = side.div_ceil(stride);
    let total = ((out - 1) * stride + kernel).saturating_sub(side);
    (out, total / 2)
}

fn check_stride(stride: usize) -> Result<()> {
    if stride == 0 {
        return Err(InferError::InvalidLayer("stride must be positive".into()));
    }
    Ok(())
}

fn check_channels(input: &FeatureMap, expected: usize) -> Result<()> {
    if input.channels != expected {
        return Err(InferError::ChannelMismatch {
            expected,
            found: input.channels,
        });
    }
    Ok(())
}

/// Standard convolution: every output channel sees every input channel.
pub fn standard_conv(input: &FeatureMap, kernel: &ConvKernel, stride: usize) -> Result<FeatureMap> {
    check_stride(stride)?;
    kernel.validate()?;
    check_channels(input, kernel.in_channels)?;
    Ok(standard_conv_raw(input, &kernel.data, kernel.size, kernel.out_channels, stride))
}

/// `weights` must hold `k·k·input.channels·n` finite values.
pub(crate) fn standard_conv_raw(
    input: &FeatureMap,
    weights: &[f32],
    k: usize,
    n: usize,
    stride: usize,
) -> FeatureMap {
    let m = input.channels;
    let (out_side, pad) = same_geometry(input.side, k, stride);
    let mut out = FeatureMap::zeros(out_side, n);
    for oy in 0..out_side {
        for ox in 0..out_side {
            let base = (oy * out_side + ox) * n;
            let acc = &mut out.data[base..base + n];
            for ky in 0..k {
                let Some(iy) = (oy * stride + ky).checked_sub(pad).filter(|&v| v < input.side) else {
                    continue;
                };
                for kx in 0..k {
                    let Some(ix) = (ox * stride + kx).checked_sub(pad).filter(|&v| v < input.side)
                    else {
                        continue;
                    };
                    let src = &input.data[(iy * input.side + ix) * m..][..m];
                    let w = &weights[(ky * k + kx) * m * n..][..m * n];
                    for (ci, &v) in src.iter().enumerate() {
                        let row = &w[ci * n..(ci + 1) * n];
                        for (a, &wv) in acc.iter_mut().zip(row) {
                            *a += v * wv;
                        }
                    }
                }
            }
        }
    }
    out
}

/// Per-channel spatial filtering.
pub fn depthwise_conv(input: &FeatureMap, kernel: &DepthwiseKernel, stride: usize) -> Result<FeatureMap> {
    check_stride(stride)?;
    check_channels(input, kernel.channels)?;
    if kernel.size.is_multiple_of(2) {
        return Err(InferError::InvalidLayer(format!(
            "kernel size {} must be odd",
            kernel.size
        )));
    }
    if kernel.data.len() != kernel.size * kernel.size * kernel.channels {
        return Err(InferError::Shape("depthwise kernel length does not match its shape".into()));
    }
    check_finite(&kernel.data, "depthwise weights")?;
    Ok(depthwise_conv_raw(input, &kernel.data, kernel.size, stride))
}

pub(crate) fn depthwise_conv_raw(input: &FeatureMap, weights: &[f32], k: usize, stride: usize) -> FeatureMap {
    let c = input.channels;
    let (out_side, pad) = same_geometry(input.side, k, stride);
    let mut out = FeatureMap::zeros(out_side, c);
    for oy in 0..out_side {
        for ox in 0..out_side {
            let base = (oy * out_side + ox) * c;
            let acc = &mut out.data[base..base + c];
            for ky in 0..k {
                let Some(iy) = (oy * stride + ky).checked_sub(pad).filter(|&v| v < input.side) else {
                    continue;
                };
                for kx in 0..k {
                    let Some(ix) = (ox * stride + kx).checked_sub(pad).filter(|&v| v < input.side)
                    else {
                        continue;
                    };
                    let src = &input.data[(iy * input.side + ix) * c..][..c];
                    let w = &weights[(ky * k + kx) * c..][..c];
                    for ((a, &v), &wv) in acc.iter_mut().zip(src).zip(w) {
                        *a += v * wv;
                    }
                }
            }
        }
    }
    out
}

/// 1×1 convolution mixing channels at every position.
pub fn pointwise_conv(input: &FeatureMap, kernel: &PointwiseKernel) -> Result<FeatureMap> {
    check_channels(input, kernel.in_channels)?;
    if kernel.data.len() != kernel.in_channels * kernel.out_channels {
        return Err(InferError::Shape("pointwise kernel length does not match its shape".into()));
    }
    check_finite(&kernel.data, "pointwise weights")?;
    Ok(pointwise_conv_raw(input, &kernel.data, kernel.out_channels))
}

pub(crate) fn pointwise_conv_raw(input: &FeatureMap, weights: &[f32], n: usize) -> FeatureMap {
    let m = input.channels;
    let mut out = FeatureMap::zeros(input.side, n);
    for (src, acc) in input.data.chunks_exact(m).zip(out.data.chunks_exact_mut(n)) {
        for (ci, &v) in src.iter().enumerate() {
            let row = &weights[ci * n..(ci + 1) * n];
            for (a, &wv) in acc.iter_mut().zip(row) {
                *a += v * wv;
            }
        }
    }
    out
}

/// Depthwise filtering followed by pointwise mixing, with no activation
/// in between.
pub fn depthwise_separable_conv(
    input: &FeatureMap,
    depthwise: &DepthwiseKernel,
    pointwise: &PointwiseKernel,
    stride: usize,
) -> Result<FeatureMap> {
    if pointwise.in_channels != depthwise.channels {
        return Err(InferError::ChannelMismatch {
            expected: depthwise.channels,
            found: pointwise.in_channels,
        });
    }
    let spatial = depthwise_conv(input, depthwise, stride)?;
    pointwise_conv(&spatial, pointwise)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map(side: usize, channels: usize, data: Vec<f32>) -> FeatureMap {
        FeatureMap::new(side, channels, data).unwrap()
    }

    #[test]
    fn scalar_multiply() {
        let out = standard_conv(
            &map(1, 1, vec![2.0]),
            &ConvKernel::new(1, 1, 1, vec![3.0]).unwrap(),
            1,
        )
        .unwrap();
        assert_eq!(out.values(), &[6.0]);
    }

    #[test]
    fn identity_kernel() {
        let input = map(4, 1, (0..16).map(|v| v as f32).collect());
        let mut w = vec![0.0; 9];
        w[4] = 1.0;
        let out = standard_conv(&input, &ConvKernel::new(3, 1, 1, w).unwrap(), 1).unwrap();
        assert_eq!(out, input);
    }

    #[test]
    fn ones_overlap_counts() {
        let out = standard_conv(
            &map(3, 1, vec![1.0; 9]),
            &ConvKernel::new(3, 1, 1, vec![1.0; 9]).unwrap(),
            1,
        )
        .unwrap();
        assert_eq!(out.get(1, 1, 0), 9.0);
        for (y, x) in [(0, 0), (0, 2), (2, 0), (2, 2)] {
            assert_eq!(out.get(y, x, 0), 4.0);
        }
        assert_eq!(out.get(0, 1, 0), 6.0);
    }

    #[test]
    fn stride_two_output_side() {
        for (side, expect) in [(7, 4), (8, 4), (1, 1), (224, 112)] {
            let out = standard_conv(
                &FeatureMap::zeros(side, 2),
                &ConvKernel::new(3, 2, 3, vec![0.5; 54]).unwrap(),
                2,
            )
            .unwrap();
            assert_eq!((out.side(), out.channels()), (expect, 3));
        }
    }

    #[test]
    fn channel_mismatch() {
        let err = standard_conv(
            &FeatureMap::zeros(2, 2),
            &ConvKernel::new(1, 3, 1, vec![0.0; 3]).unwrap(),
            1,
        )
        .unwrap_err();
        assert!(matches!(err, InferError::ChannelMismatch { expected: 3, found: 2 }));
    }

    #[test]
    fn non_finite_weights_rejected() {
        assert!(matches!(
            ConvKernel::new(1, 1, 1, vec![f32::NAN]),
            Err(InferError::NonFinite(_))
        ));
        let k = ConvKernel {
            size: 1,
            in_channels: 1,
            out_channels: 1,
            data: vec![f32::INFINITY],
        };
        assert!(matches!(
            standard_conv(&FeatureMap::zeros(1, 1), &k, 1),
            Err(InferError::NonFinite(_))
        ));
    }

    #[test]
    fn separable_identity() {
        let input = map(3, 2, (0..18).map(|v| v as f32 * 0.5).collect());
        let mut dw = vec![0.0; 18];
        dw[4 * 2] = 1.0;
        dw[4 * 2 + 1] = 1.0;
        let out = depthwise_separable_conv(
            &input,
            &DepthwiseKernel::new(3, 2, dw).unwrap(),
            &PointwiseKernel::new(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap(),
            1,
        )
        .unwrap();
        assert_eq!(out, input);
    }

    #[test]
    fn global_pool_means() {
        let input = map(2, 2, vec![1.0, 10.0, 2.0, 20.0, 3.0, 30.0, 4.0, 40.0]);
        assert_eq!(input.global_average_pool().values(), &[2.5, 25.0]);
    }
}
