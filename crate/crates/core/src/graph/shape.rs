use super::{GraphError, NetworkGraph, OpKind, TensorShape};

/// `floor((in + 2*pad - k) / s) + 1`, or `None` when the window does not fit.
pub fn conv_out_dim(input: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    let padded = input + 2 * padding;
    if padded < kernel || stride == 0 {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}

pub fn pool_out_dim(input: usize, kernel: usize, stride: usize) -> Option<usize> {
    conv_out_dim(input, kernel, stride, 0)
}

/// Annotates every node with its output shape.
pub fn infer_shapes(mut graph: NetworkGraph, input_shape: TensorShape) -> Result<NetworkGraph, GraphError> {
    if input_shape.numel() == 0 {
        return Err(GraphError::ShapeUnderflow {
            node: graph.input(),
            op: "Input",
            detail: format!("input shape {input_shape} has a zero dim"),
            block: None,
        });
    }
    let order = graph.schedule().to_vec();
    let mut shapes: Vec<Option<TensorShape>> = vec![None; graph.len()];
    for id in order {
        let node = &graph.nodes()[id];
        let op_name = node.op.name();
        let block = node.block;
        let mismatch = |detail: String| GraphError::ShapeMismatch { node: id, op: op_name, detail, block };
        let underflow = |detail: String| GraphError::ShapeUnderflow { node: id, op: op_name, detail, block };
        let arg = |i: usize| shapes[node.inputs[i]].expect("inputs scheduled first");

        let out = match node.op {
            OpKind::Input => input_shape,
            OpKind::Conv2d { kernel, stride, padding, in_ch, out_ch, .. } => {
                let x = arg(0);
                if x.channels != in_ch {
                    return Err(mismatch(format!("expects {in_ch} input channels, got {x}")));
                }
                if out_ch == 0 || in_ch == 0 {
                    return Err(mismatch("zero-width convolution".into()));
                }
                let h = conv_out_dim(x.height, kernel, stride, padding);
                let w = conv_out_dim(x.width, kernel, stride, padding);
                match (h, w) {
                    (Some(h), Some(w)) => TensorShape::new(out_ch, h, w),
                    _ => return Err(underflow(format!("kernel {kernel} does not fit {x} with padding {padding}"))),
                }
            }
            OpKind::BatchNorm { ch } => {
                let x = arg(0);
                if x.channels != ch {
                    return Err(mismatch(format!("expects {ch} channels, got {x}")));
                }
                x
            }
            OpKind::Relu => arg(0),
            OpKind::MaxPool { kernel, stride }
            | OpKind::AvgPool { kernel, stride }
            | OpKind::CombinedPool { kernel, stride } => {
                let x = arg(0);
                match (pool_out_dim(x.height, kernel, stride), pool_out_dim(x.width, kernel, stride)) {
                    (Some(h), Some(w)) => TensorShape::new(x.channels, h, w),
                    _ => return Err(underflow(format!("pool window {kernel} exceeds input {x}"))),
                }
            }
            OpKind::Add => {
                let (a, b) = (arg(0), arg(1));
                if a != b {
                    return Err(mismatch(format!("operands differ: {a} vs {b}")));
                }
                a
            }
            OpKind::Mhsa { d_model, heads, qkv_dim, .. } => {
                let x = arg(0);
                if x.channels != d_model {
                    return Err(mismatch(format!("d_model {d_model} does not match input {x}")));
                }
                if heads == 0 || qkv_dim == 0 {
                    return Err(mismatch("heads and qkv_dim must be >= 1".into()));
                }
                x
            }
            OpKind::FeedForward { d_model, .. } => {
                let x = arg(0);
                if x.channels != d_model {
                    return Err(mismatch(format!("d_model {d_model} does not match input {x}")));
                }
                x
            }
            OpKind::GlobalAvgPool => TensorShape::new(arg(0).channels, 1, 1),
            OpKind::Linear { in_dim, out_dim } => {
                let x = arg(0);
                if x.numel() != in_dim {
                    return Err(mismatch(format!("in_dim {in_dim} does not match input {x}")));
                }
                TensorShape::new(out_dim, 1, 1)
            }
        };
        shapes[id] = Some(out);
    }
    for (node, shape) in graph.nodes_mut().iter_mut().zip(shapes) {
        node.shape = shape;
    }
    Ok(graph)
}
