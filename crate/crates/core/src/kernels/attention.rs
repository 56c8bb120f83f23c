use ndarray::{s, Array2};

use super::{ensure_finite, matmul, FeedForwardParams, KernelError, MhsaParams, OpCounter, Tokens};

/// Evaluation order for the linear-attention product `φ(Q) (φ(K)ᵀ V)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum AssociationOrder {
    /// `φ(Q) · (φ(K)ᵀ · V)`, linear in the token count.
    #[default]
    Factored,
    /// `(φ(Q) · φ(K)ᵀ) · V`, quadratic in the token count.
    Quadratic,
}

fn check_mhsa(x: &Tokens, p: &MhsaParams, heads: usize) -> Result<usize, KernelError> {
    let d_model = x.dim().1;
    let qkv = p.w_q.dim().1;
    for (name, w) in [("w_q", &p.w_q), ("w_k", &p.w_k), ("w_v", &p.w_v)] {
        if w.dim() != (d_model, qkv) {
            return Err(KernelError::Shape(format!("{name} is {:?}, expected ({d_model}, {qkv})", w.dim())));
        }
    }
    if p.w_a.dim() != (qkv, d_model) {
        return Err(KernelError::Shape(format!("w_a is {:?}, expected ({qkv}, {d_model})", p.w_a.dim())));
    }
    if heads == 0 || !qkv.is_multiple_of(heads) {
        return Err(KernelError::Shape(format!("qkv_dim {qkv} not divisible by {heads} heads")));
    }
    ensure_finite(x.iter(), "attention input")?;
    Ok(qkv / heads)
}

fn softmax_rows(scores: &mut Array2<f64>) {
    for mut row in scores.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
}

fn softmax_attention(
    x: &Tokens,
    p: &MhsaParams,
    heads: usize,
    counter: &mut OpCounter,
    keep: bool,
) -> Result<(Tokens, Vec<Array2<f64>>), KernelError> {
    let dh = check_mhsa(x, p, heads)?;
    let q = matmul(&x.view(), &p.w_q.view(), counter)?;
    let k = matmul(&x.view(), &p.w_k.view(), counter)?;
    let v = matmul(&x.view(), &p.w_v.view(), counter)?;
    let scale = (dh as f64).sqrt();
    let mut concat = Array2::zeros(q.dim());
    let mut weights = Vec::new();
    for h in 0..heads {
        let cols = s![.., h * dh..(h + 1) * dh];
        let kt = k.slice(cols).reversed_axes();
        let mut scores = matmul(&q.slice(cols), &kt, counter)?;
        scores.mapv_inplace(|v| v / scale);
        softmax_rows(&mut scores);
        let out = matmul(&scores.view(), &v.slice(cols), counter)?;
        concat.slice_mut(cols).assign(&out);
        if keep {
            weights.push(scores);
        }
    }
    let y = matmul(&concat.view(), &p.w_a.view(), counter)?;
    ensure_finite(y.iter(), "attention output")?;
    Ok((y, weights))
}

/// Scaled dot-product multi-head self-attention over `(tokens, d_model)`.
pub fn mhsa_softmax(
    x: &Tokens,
    params: &MhsaParams,
    heads: usize,
    counter: &mut OpCounter,
) -> Result<Tokens, KernelError> {
    softmax_attention(x, params, heads, counter, false).map(|(y, _)| y)
}

/// Per-head `(tokens, tokens)` softmax attention matrices.
pub fn attention_weights(x: &Tokens, params: &MhsaParams, heads: usize) -> Result<Vec<Array2<f64>>, KernelError> {
    softmax_attention(x, params, heads, &mut OpCounter::new(), true).map(|(_, w)| w)
}

/// Kernelized attention with `φ = ReLU`, evaluated in factored order.
pub fn mhsa_linear(
    x: &Tokens,
    params: &MhsaParams,
    heads: usize,
    counter: &mut OpCounter,
) -> Result<Tokens, KernelError> {
    mhsa_linear_ordered(x, params, heads, AssociationOrder::Factored, counter)
}

pub fn mhsa_linear_ordered(
    x: &Tokens,
    params: &MhsaParams,
    heads: usize,
    order: AssociationOrder,
    counter: &mut OpCounter,
) -> Result<Tokens, KernelError> {
    let dh = check_mhsa(x, params, heads)?;
    let relu = |v: f64| v.max(0.0);
    let q = matmul(&x.view(), &params.w_q.view(), counter)?.mapv_into(relu);
    let k = matmul(&x.view(), &params.w_k.view(), counter)?.mapv_into(relu);
    let v = matmul(&x.view(), &params.w_v.view(), counter)?;
    let mut concat = Array2::zeros(q.dim());
    for h in 0..heads {
        let cols = s![.., h * dh..(h + 1) * dh];
        let kt = k.slice(cols).reversed_axes();
        let out = match order {
            AssociationOrder::Factored => {
                let kv = matmul(&kt, &v.slice(cols), counter)?;
                matmul(&q.slice(cols), &kv.view(), counter)?
            }
            AssociationOrder::Quadratic => {
                let qk = matmul(&q.slice(cols), &kt, counter)?;
                matmul(&qk.view(), &v.slice(cols), counter)?
            }
        };
        concat.slice_mut(cols).assign(&out);
    }
    let y = matmul(&concat.view(), &params.w_a.view(), counter)?;
    ensure_finite(y.iter(), "attention output")?;
    Ok(y)
}

/// `ReLU(x · W1) · W2`.
pub fn feedforward(x: &Tokens, params: &FeedForwardParams, counter: &mut OpCounter) -> Result<Tokens, KernelError> {
    let d_model = x.dim().1;
    let ff = params.w1.dim().1;
    if params.w1.dim().0 != d_model || params.w2.dim() != (ff, d_model) {
        return Err(KernelError::Shape(format!(
            "feed-forward weights {:?}/{:?} for d_model {d_model}",
            params.w1.dim(),
            params.w2.dim()
        )));
    }
    ensure_finite(x.iter(), "feed-forward input")?;
    let hidden = matmul(&x.view(), &params.w1.view(), counter)?.mapv_into(|v| v.max(0.0));
    let y = matmul(&hidden.view(), &params.w2.view(), counter)?;
    ensure_finite(y.iter(), "feed-forward output")?;
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, shape: (usize, usize)) -> Array2<f64> {
        Array::from_shape_fn(shape, |_| rng.gen_range(-1.0..1.0))
    }

    fn params(rng: &mut ChaCha8Rng, d: usize, q: usize) -> MhsaParams {
        MhsaParams {
            w_q: random(rng, (d, q)),
            w_k: random(rng, (d, q)),
            w_v: random(rng, (d, q)),
            w_a: random(rng, (q, d)),
        }
    }

    #[test]
    fn softmax_and_linear_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = random(&mut rng, (64, 32));
        let p = params(&mut rng, 32, 32);
        let mut c = OpCounter::new();
        mhsa_softmax(&x, &p, 4, &mut c).unwrap();
        assert_eq!(c.total(), 524_288);
        let mut c = OpCounter::new();
        mhsa_linear(&x, &p, 4, &mut c).unwrap();
        assert_eq!(c.total(), 294_912);
    }

    #[test]
    fn feedforward_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = random(&mut rng, (64, 32));
        let p = FeedForwardParams { w1: random(&mut rng, (32, 128)), w2: random(&mut rng, (128, 32)) };
        let mut c = OpCounter::new();
        let y = feedforward(&x, &p, &mut c).unwrap();
        assert_eq!(y.dim(), (64, 32));
        assert_eq!(c.total(), 524_288);
    }

    #[test]
    fn attention_rows_are_distributions() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = random(&mut rng, (16, 8));
        let p = params(&mut rng, 8, 8);
        let w = attention_weights(&x, &p, 2).unwrap();
        assert_eq!(w.len(), 2);
        for m in &w {
            for row in m.rows() {
                assert!((row.sum() - 1.0).abs() < 1e-12);
                assert!(row.iter().all(|&v| v >= 0.0));
            }
        }
    }

    #[test]
    fn association_orders_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let x = random(&mut rng, (64, 32));
        let p = params(&mut rng, 32, 32);
        let mut cf = OpCounter::new();
        let mut cq = OpCounter::new();
        let f = mhsa_linear_ordered(&x, &p, 4, AssociationOrder::Factored, &mut cf).unwrap();
        let q = mhsa_linear_ordered(&x, &p, 4, AssociationOrder::Quadratic, &mut cq).unwrap();
        let scale = q.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let err = f.iter().zip(&q).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(err / scale <= 1e-9);
        assert!(cf.total() < cq.total());
    }

    #[test]
    fn rejects_bad_head_split_and_nan() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut x = random(&mut rng, (4, 6));
        let p = params(&mut rng, 6, 6);
        assert!(matches!(mhsa_softmax(&x, &p, 4, &mut OpCounter::new()), Err(KernelError::Shape(_))));
        x[[0, 0]] = f64::NAN;
        assert!(matches!(mhsa_softmax(&x, &p, 2, &mut OpCounter::new()), Err(KernelError::Numeric(_))));
    }
}
