//! Multiply-accumulate counts for standard versus depthwise-separable convolution.

use num_rational::Ratio;
use serde::Serialize;

use super::model::{Architecture, ConvLayerSpec, LayerKind};
use super::{InferError, Result};

/// MAC counts of one convolution evaluated both ways.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MacCost {
    /// `D_K · D_K · M · N · D_F · D_F`
    pub standard_macs: u128,
    /// `D_K · D_K · M · D_F · D_F + M · N · D_F · D_F`
    pub separable_macs: u128,
    /// `standard / separable`, kept exact.
    pub ratio: Ratio<u128>,
}

impl MacCost {
    pub fn ratio_f64(&self) -> f64 {
        *self.ratio.numer() as f64 / *self.ratio.denom() as f64
    }
}

/// Cost of a spatial layer of kernel `D_K`, `M` inputs and `N` outputs
/// evaluated on a `d_f × d_f` grid.
pub fn flop_cost(layer: &ConvLayerSpec, d_f: u64) -> Result<MacCost> {
    if !layer.kind.is_spatial() {
        return Err(InferError::NonSpatialLayer(layer.kind));
    }
    let (n, m) = match layer.kind {
        LayerKind::Depthwise => (layer.in_channels, layer.in_channels),
        _ => (layer.out_channels, layer.in_channels),
    };
    Ok(mac_cost(layer.kernel as u128, m as u128, n as u128, d_f as u128))
}

pub(crate) fn mac_cost(d_k: u128, m: u128, n: u128, d_f: u128) -> MacCost {
    let area = d_f * d_f;
    let standard_macs = d_k * d_k * m * n * area;
    let separable_macs = d_k * d_k * m * area + m * n * area;
    let ratio = if separable_macs == 0 {
        Ratio::from_integer(0)
    } else {
        Ratio::new(standard_macs, separable_macs)
    };
    MacCost {
        standard_macs,
        separable_macs,
        ratio,
    }
}

/// One row of a network cost table.
#[derive(Clone, Debug, Serialize)]
pub struct CostRow {
    /// Layer positions covered by the row (a depthwise/pointwise pair spans two).
    pub layers: Vec<usize>,
    pub description: String,
    pub kernel: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    /// Spatial side the layer computes on (its output side).
    pub side: usize,
    pub standard_macs: u128,
    pub separable_macs: u128,
    pub ratio: Option<f64>,
    /// MACs the network actually performs for this row.
    pub actual_macs: u128,
}

#[derive(Clone, Debug, Serialize)]
pub struct NetworkCost {
    pub name: String,
    pub input_size: u32,
    pub rows: Vec<CostRow>,
    pub total_actual_macs: u128,
    /// Cost if every separable block were a standard convolution.
    pub total_standard_macs: u128,
}

/// Per-layer MAC table for a CNN architecture. Depthwise layers directly
/// followed by a pointwise layer are reported as one separable block.
pub fn network_cost(arch: &Architecture) -> Result<NetworkCost> {
    let mut rows = Vec::new();
    let mut side = arch.input_size as usize;
    let layers = &arch.layers;
    let mut i = 0;
    while i < layers.len() {
        let layer = &layers[i];
        match layer.kind {
            LayerKind::Standard => {
                side = side.div_ceil(layer.stride);
                let c = flop_cost(layer, side as u64)?;
                rows.push(CostRow {
                    layers: vec![i],
                    description: "standard".into(),
                    kernel: layer.kernel,
                    in_channels: layer.in_channels,
                    out_channels: layer.out_channels,
                    side,
                    actual_macs: c.standard_macs,
                    ratio: Some(c.ratio_f64()),
                    standard_macs: c.standard_macs,
                    separable_macs: c.separable_macs,
                });
            }
            LayerKind::Depthwise => {
                side = side.div_ceil(layer.stride);
                let m = layer.in_channels as u128;
                match layers.get(i + 1).filter(|l| l.kind == LayerKind::Pointwise) {
                    Some(pw) => {
                        let c = mac_cost(layer.kernel as u128, m, pw.out_channels as u128, side as u128);
                        rows.push(CostRow {
                            layers: vec![i, i + 1],
                            description: "separable".into(),
                            kernel: layer.kernel,
                            in_channels: layer.in_channels,
                            out_channels: pw.out_channels,
                            side,
                            actual_macs: c.separable_macs,
                            ratio: Some(c.ratio_f64()),
                            standard_macs: c.standard_macs,
                            separable_macs: c.separable_macs,
                        });
                        i += 1;
                    }
                    None => {
                        let k = layer.kernel as u128;
                        let macs = k * k * m * (side * side) as u128;
                        rows.push(CostRow {
                            layers: vec![i],
                            description: "depthwise".into(),
                            kernel: layer.kernel,
                            in_channels: layer.in_channels,
                            out_channels: layer.in_channels,
                            side,
                            standard_macs: macs,
                            separable_macs: macs,
                            ratio: None,
                            actual_macs: macs,
                        });
                    }
                }
            }
            LayerKind::Pointwise => {
                let c = flop_cost(layer, side as u64)?;
                let macs = (layer.in_channels * layer.out_channels * side * side) as u128;
                rows.push(CostRow {
                    layers: vec![i],
                    description: "pointwise".into(),
                    kernel: 1,
                    in_channels: layer.in_channels,
                    out_channels: layer.out_channels,
                    side,
                    standard_macs: c.standard_macs,
                    separable_macs: c.separable_macs,
                    ratio: Some(c.ratio_f64()),
                    actual_macs: macs,
                });
            }
            LayerKind::GlobalAvgPool => side = 1,
            LayerKind::Dense => {
                let macs = (layer.in_channels * layer.out_channels) as u128;
                rows.push(CostRow {
                    layers: vec![i],
                    description: "dense".into(),
                    kernel: 0,
                    in_channels: layer.in_channels,
                    out_channels: layer.out_channels,
                    side: 1,
                    standard_macs: macs,
                    separable_macs: macs,
                    ratio: None,
                    actual_macs: macs,
                });
            }
            LayerKind::Softmax => {}
        }
        i += 1;
    }
    let total_actual_macs = rows.iter().map(|r| r.actual_macs).sum();
    let total_standard_macs = rows.iter().map(|r| r.standard_macs).sum();
    Ok(NetworkCost {
        name: arch.name.clone(),
        input_size: arch.input_size,
        rows,
        total_actual_macs,
        total_standard_macs,
    })
}
