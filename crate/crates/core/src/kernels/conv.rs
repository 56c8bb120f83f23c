use ndarray::{s, Array1, Array3};

use super::{ensure_finite, BatchNormParams, ConvParams, FeatureMap, KernelError, OpCounter};

/// Grouped 2-D cross-correlation with zero padding.
///
/// Padded taps are multiplied like any other tap, so the count is
/// `out_ch * H_out * W_out * (in_ch / groups) * k * k`.
pub fn conv2d(
    input: &FeatureMap,
    params: &ConvParams,
    stride: usize,
    padding: usize,
    groups: usize,
    counter: &mut OpCounter,
) -> Result<FeatureMap, KernelError> {
    let (in_ch, h, w) = input.dim();
    let (out_ch, cpg, kh, kw) = params.weight.dim();
    if groups == 0 || in_ch % groups != 0 || out_ch % groups != 0 {
        return Err(KernelError::Shape(format!("{in_ch}->{out_ch} channels with {groups} groups")));
    }
    if cpg != in_ch / groups {
        return Err(KernelError::Shape(format!(
            "weight expects {cpg} channels per group, input gives {}",
            in_ch / groups
        )));
    }
    if let Some(b) = &params.bias {
        if b.len() != out_ch {
            return Err(KernelError::Shape(format!("bias has {} entries for {out_ch} channels", b.len())));
        }
    }
    if stride == 0 || h + 2 * padding < kh || w + 2 * padding < kw {
        return Err(KernelError::Window(format!("kernel {kh}x{kw} on {h}x{w} with padding {padding}")));
    }
    let ho = (h + 2 * padding - kh) / stride + 1;
    let wo = (w + 2 * padding - kw) / stride + 1;

    let mut padded = Array3::<f64>::zeros((in_ch, h + 2 * padding, w + 2 * padding));
    padded.slice_mut(s![.., padding..padding + h, padding..padding + w]).assign(input);
    let padded = padded.as_standard_layout().into_owned();
    let weight = params.weight.as_standard_layout().into_owned();
    let src = padded.as_slice().expect("standard layout");
    let wts = weight.as_slice().expect("standard layout");
    let (ph, pw) = (h + 2 * padding, w + 2 * padding);

    let opg = out_ch / groups;
    let mut out = Array3::<f64>::zeros((out_ch, ho, wo));
    let mut macs = 0u64;
    for oc in 0..out_ch {
        let g = oc / opg;
        let bias = params.bias.as_ref().map_or(0.0, |b| b[oc]);
        for oy in 0..ho {
            for ox in 0..wo {
                let mut acc = 0.0;
                for ic in 0..cpg {
                    let plane = (g * cpg + ic) * ph * pw;
                    let wbase = ((oc * cpg) + ic) * kh * kw;
                    for ky in 0..kh {
                        let row = plane + (oy * stride + ky) * pw + ox * stride;
                        for kx in 0..kw {
                            acc += wts[wbase + ky * kw + kx] * src[row + kx];
                            macs += 1;
                        }
                    }
                }
                out[[oc, oy, ox]] = acc + bias;
            }
        }
    }
    counter.add(macs);
    Ok(out)
}

fn bn_scale(params: &BatchNormParams) -> Result<Array1<f64>, KernelError> {
    let n = params.gamma.len();
    if [params.beta.len(), params.running_mean.len(), params.running_var.len()].iter().any(|&l| l != n) {
        return Err(KernelError::Shape("batch-norm vectors differ in length".into()));
    }
    let mut scale = Array1::zeros(n);
    for c in 0..n {
        let denom = params.running_var[c] + params.eps;
        if denom.is_nan() || denom <= 0.0 {
            return Err(KernelError::Numeric(format!("running_var + eps = {denom} on channel {c}")));
        }
        scale[c] = params.gamma[c] / denom.sqrt();
    }
    Ok(scale)
}

/// Eval-mode batch norm: `gamma * (x - mean) / sqrt(var + eps) + beta`.
pub fn batchnorm_eval(input: &FeatureMap, params: &BatchNormParams) -> Result<FeatureMap, KernelError> {
    if input.dim().0 != params.gamma.len() {
        return Err(KernelError::Shape(format!(
            "batch norm over {} channels applied to {}",
            params.gamma.len(),
            input.dim().0
        )));
    }
    bn_scale(params)?;
    let mut out = input.clone();
    for (c, mut plane) in out.outer_iter_mut().enumerate() {
        let (mean, beta, gamma) = (params.running_mean[c], params.beta[c], params.gamma[c]);
        let denom = (params.running_var[c] + params.eps).sqrt();
        plane.mapv_inplace(|x| gamma * (x - mean) / denom + beta);
    }
    ensure_finite(out.iter(), "batch norm output")?;
    Ok(out)
}

/// Folds an eval-mode batch norm into the preceding convolution.
pub fn fold_batchnorm(conv: &ConvParams, bn: &BatchNormParams) -> Result<ConvParams, KernelError> {
    let out_ch = conv.weight.dim().0;
    if bn.gamma.len() != out_ch {
        return Err(KernelError::Shape(format!("batch norm has {} channels, conv {out_ch}", bn.gamma.len())));
    }
    let scale = bn_scale(bn)?;
    let mut weight = conv.weight.clone();
    let mut bias = Array1::zeros(out_ch);
    for o in 0..out_ch {
        weight.slice_mut(s![o, .., .., ..]).mapv_inplace(|w| w * scale[o]);
        let b = conv.bias.as_ref().map_or(0.0, |b| b[o]);
        bias[o] = bn.beta[o] + (b - bn.running_mean[o]) * scale[o];
    }
    Ok(ConvParams { weight, bias: Some(bias) })
}
