use ndarray::Array3;

use super::{FeatureMap, KernelError};
use crate::searchspace::PoolKind;

fn window_max(input: &FeatureMap, c: usize, y0: usize, x0: usize, k: usize) -> f64 {
    let mut m = f64::NEG_INFINITY;
    for y in y0..y0 + k {
        for x in x0..x0 + k {
            m = m.max(input[[c, y, x]]);
        }
    }
    m
}

fn window_avg(input: &FeatureMap, c: usize, y0: usize, x0: usize, k: usize) -> f64 {
    let mut sum = 0.0;
    for y in y0..y0 + k {
        for x in x0..x0 + k {
            sum += input[[c, y, x]];
        }
    }
    sum / (k * k) as f64
}

/// Unpadded square pooling. `Combined` is `0.5 * max + 0.5 * avg` of the
/// same window. Pooling performs no multiplies.
pub fn pool(input: &FeatureMap, kind: PoolKind, kernel: usize, stride: usize) -> Result<FeatureMap, KernelError> {
    let (ch, h, w) = input.dim();
    if kernel == 0 || stride == 0 || kernel > h || kernel > w {
        return Err(KernelError::Window(format!("pool {kernel}/{stride} on {h}x{w}")));
    }
    let ho = (h - kernel) / stride + 1;
    let wo = (w - kernel) / stride + 1;
    Ok(Array3::from_shape_fn((ch, ho, wo), |(c, oy, ox)| {
        let (y0, x0) = (oy * stride, ox * stride);
        match kind {
            PoolKind::Max => window_max(input, c, y0, x0, kernel),
            PoolKind::Avg => window_avg(input, c, y0, x0, kernel),
            PoolKind::Combined => {
                0.5 * window_max(input, c, y0, x0, kernel) + 0.5 * window_avg(input, c, y0, x0, kernel)
            }
        }
    }))
}
