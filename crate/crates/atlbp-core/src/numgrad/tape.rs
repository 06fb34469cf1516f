//! Reverse-mode gradient accumulation over a fixed primitive set: affine,
//! matrix-vector product, elementwise add/multiply, sigmoid, tanh,
//! concatenation and its slice adjoint, mean over nodes, and a fused
//! softmax + cross-entropy loss.
//!
//! A tape records one forward pass; replaying the records in reverse
//! accumulates d(loss)/d(node) for every node, and registered parameters
//! can then be read out in registration order. One tape per training
//! worker; a tape is not shared across threads.

use crate::error::{Error, Result};
use crate::numgrad::tensor::{matvec_into, sigmoid, softmax_in_place, Mat64, Vec64, PROB_CLAMP};

/// Handle to a value recorded on a [`GradTape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NodeId(usize);

#[derive(Debug)]
enum Op {
    Affine { w: NodeId, b: NodeId, x: NodeId, rows: usize, cols: usize, out: NodeId },
    MatVec { w: NodeId, x: NodeId, rows: usize, cols: usize, out: NodeId },
    Add { a: NodeId, b: NodeId, out: NodeId },
    Mul { a: NodeId, b: NodeId, out: NodeId },
    Sigmoid { x: NodeId, out: NodeId },
    Tanh { x: NodeId, out: NodeId },
    Concat { parts: Vec<NodeId>, out: NodeId },
    Slice { x: NodeId, start: usize, out: NodeId },
    Mean { parts: Vec<NodeId>, out: NodeId },
    /// Fused softmax + cross-entropy; caches the probabilities so the
    /// backward pass is the numerically stable p - onehot(target).
    SoftmaxCrossEntropy { logits: NodeId, target: usize, probs: Vec<f64>, out: NodeId },
}

/// Ordered record of the primitive operations of one forward pass.
#[derive(Debug, Default)]
pub struct GradTape {
    values: Vec<Vec<f64>>,
    ops: Vec<Op>,
    params: Vec<NodeId>,
}

impl GradTape {
    pub fn new() -> Self {
        Self::default()
    }

    fn push_value(&mut self, data: Vec<f64>) -> NodeId {
        let id = NodeId(self.values.len());
        self.values.push(data);
        id
    }

    /// Registers a matrix parameter; its gradient is reported by
    /// [`GradTape::backward`] in registration order.
    pub fn param_matrix(&mut self, m: &Mat64) -> NodeId {
        let id = self.push_value(m.as_slice().to_vec());
        self.params.push(id);
        id
    }

    /// Registers a vector parameter.
    pub fn param_vector(&mut self, v: &Vec64) -> NodeId {
        let id = self.push_value(v.as_slice().to_vec());
        self.params.push(id);
        id
    }

    /// Records a non-trainable input value.
    pub fn input(&mut self, v: &Vec64) -> NodeId {
        self.push_value(v.as_slice().to_vec())
    }

    /// Records a non-trainable zero vector (initial recurrent state).
    pub fn zeros(&mut self, len: usize) -> NodeId {
        self.push_value(vec![0.0; len])
    }

    pub fn value(&self, node: NodeId) -> &[f64] {
        &self.values[node.0]
    }

    pub fn len(&self, node: NodeId) -> usize {
        self.values[node.0].len()
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    fn check_len(&self, op: &'static str, node: NodeId, want: usize) -> Result<()> {
        let got = self.values[node.0].len();
        if got != want {
            return Err(Error::Dimension {
                op,
                detail: format!("operand has length {got}, expected {want}"),
            });
        }
        Ok(())
    }

    /// out = W x + b, with W a matrix node of shape rows x cols.
    pub fn affine(&mut self, w: NodeId, rows: usize, cols: usize, b: NodeId, x: NodeId) -> Result<NodeId> {
        self.check_len("tape affine", w, rows * cols)?;
        self.check_len("tape affine", b, rows)?;
        self.check_len("tape affine", x, cols)?;
        let mut out = vec![0.0; rows];
        matvec_into(&self.values[w.0], rows, cols, &self.values[x.0], &mut out);
        for (o, bv) in out.iter_mut().zip(self.values[b.0].iter()) {
            *o += bv;
        }
        let id = self.push_value(out);
        self.ops.push(Op::Affine { w, b, x, rows, cols, out: id });
        Ok(id)
    }

    /// out = W x (no bias; used for the recurrent term).
    pub fn matvec(&mut self, w: NodeId, rows: usize, cols: usize, x: NodeId) -> Result<NodeId> {
        self.check_len("tape matvec", w, rows * cols)?;
        self.check_len("tape matvec", x, cols)?;
        let mut out = vec![0.0; rows];
        matvec_into(&self.values[w.0], rows, cols, &self.values[x.0], &mut out);
        let id = self.push_value(out);
        self.ops.push(Op::MatVec { w, x, rows, cols, out: id });
        Ok(id)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.check_len("tape add", b, self.len(a))?;
        let out: Vec<f64> = self.values[a.0]
            .iter()
            .zip(self.values[b.0].iter())
            .map(|(x, y)| x + y)
            .collect();
        let id = self.push_value(out);
        self.ops.push(Op::Add { a, b, out: id });
        Ok(id)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.check_len("tape mul", b, self.len(a))?;
        let out: Vec<f64> = self.values[a.0]
            .iter()
            .zip(self.values[b.0].iter())
            .map(|(x, y)| x * y)
            .collect();
        let id = self.push_value(out);
        self.ops.push(Op::Mul { a, b, out: id });
        Ok(id)
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        let out: Vec<f64> = self.values[x.0].iter().map(|&v| sigmoid(v)).collect();
        let id = self.push_value(out);
        self.ops.push(Op::Sigmoid { x, out: id });
        id
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        let out: Vec<f64> = self.values[x.0].iter().map(|v| v.tanh()).collect();
        let id = self.push_value(out);
        self.ops.push(Op::Tanh { x, out: id });
        id
    }

    pub fn concat(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(Error::Usage("concat needs at least one part".into()));
        }
        let mut out = Vec::new();
        for p in parts {
            out.extend_from_slice(&self.values[p.0]);
        }
        let id = self.push_value(out);
        self.ops.push(Op::Concat { parts: parts.to_vec(), out: id });
        Ok(id)
    }

    pub fn slice(&mut self, x: NodeId, start: usize, len: usize) -> Result<NodeId> {
        if start + len > self.len(x) {
            return Err(Error::Dimension {
                op: "tape slice",
                detail: format!("range {start}..{} exceeds length {}", start + len, self.len(x)),
            });
        }
        let out = self.values[x.0][start..start + len].to_vec();
        let id = self.push_value(out);
        self.ops.push(Op::Slice { x, start, out: id });
        Ok(id)
    }

    /// Elementwise mean over same-length nodes.
    pub fn mean(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(Error::Usage("mean needs at least one part".into()));
        }
        let len = self.len(parts[0]);
        for p in parts {
            self.check_len("tape mean", *p, len)?;
        }
        let scale = 1.0 / parts.len() as f64;
        let mut out = vec![0.0; len];
        for p in parts {
            for (o, v) in out.iter_mut().zip(self.values[p.0].iter()) {
                *o += v;
            }
        }
        for o in out.iter_mut() {
            *o *= scale;
        }
        let id = self.push_value(out);
        self.ops.push(Op::Mean { parts: parts.to_vec(), out: id });
        Ok(id)
    }

    /// Scalar loss -log softmax(logits)[target], recorded as one fused op.
    pub fn softmax_cross_entropy(&mut self, logits: NodeId, target: usize) -> Result<NodeId> {
        let n = self.len(logits);
        if target >= n {
            return Err(Error::Index(format!(
                "class {target} out of range for {n} logits"
            )));
        }
        let mut probs = self.values[logits.0].clone();
        softmax_in_place(&mut probs);
        let loss = -(probs[target].max(PROB_CLAMP)).ln();
        let id = self.push_value(vec![loss]);
        self.ops.push(Op::SoftmaxCrossEntropy { logits, target, probs, out: id });
        Ok(id)
    }

    /// Accumulates d(loss)/d(node) for every node by replaying the recorded
    /// operations in reverse. `loss` must be a scalar produced by this tape's
    /// forward pass.
    pub fn backward(&self, loss: NodeId) -> Result<TapeGradients> {
        if self.ops.is_empty() {
            return Err(Error::Usage(
                "backward called before any forward operations were recorded".into(),
            ));
        }
        if self.len(loss) != 1 {
            return Err(Error::Usage(format!(
                "backward requires a scalar loss node, got length {}",
                self.len(loss)
            )));
        }
        let mut grads: Vec<Vec<f64>> = self.values.iter().map(|v| vec![0.0; v.len()]).collect();
        grads[loss.0][0] = 1.0;

        for op in self.ops.iter().rev() {
            match op {
                Op::Affine { w, b, x, rows, cols, out } => {
                    let g = std::mem::take(&mut grads[out.0]);
                    {
                        let xv = &self.values[x.0];
                        for r in 0..*rows {
                            let gr = g[r];
                            if gr == 0.0 {
                                continue;
                            }
                            let gw_row = &mut grads[w.0][r * cols..(r + 1) * cols];
                            for (gw, xval) in gw_row.iter_mut().zip(xv.iter()) {
                                *gw += gr * xval;
                            }
                        }
                    }
                    for (gb, gv) in grads[b.0].iter_mut().zip(g.iter()) {
                        *gb += gv;
                    }
                    {
                        let wv = &self.values[w.0];
                        let gx = &mut grads[x.0];
                        for r in 0..*rows {
                            let gr = g[r];
                            if gr == 0.0 {
                                continue;
                            }
                            let w_row = &wv[r * cols..(r + 1) * cols];
                            for (gxv, wval) in gx.iter_mut().zip(w_row.iter()) {
                                *gxv += gr * wval;
                            }
                        }
                    }
                    grads[out.0] = g;
                }
                Op::MatVec { w, x, rows, cols, out } => {
                    let g = std::mem::take(&mut grads[out.0]);
                    {
                        let xv = &self.values[x.0];
                        for r in 0..*rows {
                            let gr = g[r];
                            if gr == 0.0 {
                                continue;
                            }
                            let gw_row = &mut grads[w.0][r * cols..(r + 1) * cols];
                            for (gw, xval) in gw_row.iter_mut().zip(xv.iter()) {
                                *gw += gr * xval;
                            }
                        }
                    }
                    {
                        let wv = &self.values[w.0];
                        let gx = &mut grads[x.0];
                        for r in 0..*rows {
                            let gr = g[r];
                            if gr == 0.0 {
                                continue;
                            }
                            let w_row = &wv[r * cols..(r + 1) * cols];
                            for (gxv, wval) in gx.iter_mut().zip(w_row.iter()) {
                                *gxv += gr * wval;
                            }
                        }
                    }
                    grads[out.0] = g;
                }
                Op::Add { a, b, out } => {
                    let g = std::mem::take(&mut grads[out.0]);
                    for (ga, gv) in grads[a.0].iter_mut().zip(g.iter()) {
                        *ga += gv;
                    }
                    for (gb, gv) in grads[b.0].iter_mut().zip(g.iter()) {
                        *gb += gv;
                    }
                    grads[out.0] = g;
                }
                Op::Mul { a, b, out } => {
                    let g = std::mem::take(&mut grads[out.0]);
                    {
                        let bv = &self.values[b.0];
                        for ((ga, gv), bval) in grads[a.0].iter_mut().zip(g.iter()).zip(bv.iter()) {
                            *ga += gv * bval;
                        }
                    }
                    {
                        let av = &self.values[a.0];
                        for ((gb, gv), aval) in grads[b.0].iter_mut().zip(g.iter()).zip(av.iter()) {
                            *gb += gv * aval;
                        }
                    }
                    grads[out.0] = g;
                }
                Op::Sigmoid { x, out } => {
                    let g = std::mem::take(&mut grads[out.0]);
                    let y = &self.values[out.0];
                    for ((gx, gv), yv) in grads[x.0].iter_mut().zip(g.iter()).zip(y.iter()) {
                        *gx += gv * yv * (1.0 - yv);
                    }
                    grads[out.0] = g;
                }
                Op::Tanh { x, out } => {
                    let g = std::mem::take(&mut grads[out.0]);
                    let y = &self.values[out.0];
                    for ((gx, gv), yv) in grads[x.0].iter_mut().zip(g.iter()).zip(y.iter()) {
                        *gx += gv * (1.0 - yv * yv);
                    }
                    grads[out.0] = g;
                }
                Op::Concat { parts, out } => {
                    let g = std::mem::take(&mut grads[out.0]);
                    let mut offset = 0;
                    for p in parts {
                        let len = self.values[p.0].len();
                        for (gp, gv) in grads[p.0].iter_mut().zip(g[offset..offset + len].iter()) {
                            *gp += gv;
                        }
                        offset += len;
                    }
                    grads[out.0] = g;
                }
                Op::Slice { x, start, out } => {
                    let g = std::mem::take(&mut grads[out.0]);
                    for (gx, gv) in grads[x.0][*start..*start + g.len()].iter_mut().zip(g.iter()) {
                        *gx += gv;
                    }
                    grads[out.0] = g;
                }
                Op::Mean { parts, out } => {
                    let g = std::mem::take(&mut grads[out.0]);
                    let scale = 1.0 / parts.len() as f64;
                    for p in parts {
                        for (gp, gv) in grads[p.0].iter_mut().zip(g.iter()) {
                            *gp += gv * scale;
                        }
                    }
                    grads[out.0] = g;
                }
                Op::SoftmaxCrossEntropy { logits, target, probs, out } => {
                    let g = grads[out.0][0];
                    for (i, (gl, p)) in grads[logits.0].iter_mut().zip(probs.iter()).enumerate() {
                        let indicator = if i == *target { 1.0 } else { 0.0 };
                        *gl += g * (p - indicator);
                    }
                }
            }
        }

        Ok(TapeGradients { grads, params: self.params.clone() })
    }
}

/// Result of a backward pass: one gradient buffer per node, with accessors
/// for registered parameters.
pub struct TapeGradients {
    grads: Vec<Vec<f64>>,
    params: Vec<NodeId>,
}

impl TapeGradients {
    /// Gradient of the loss with respect to an arbitrary node.
    pub fn get(&self, node: NodeId) -> &[f64] {
        &self.grads[node.0]
    }

    /// Gradients for registered parameters, in registration order.
    pub fn param_grads(&self) -> Vec<&[f64]> {
        self.params.iter().map(|p| self.grads[p.0].as_slice()).collect()
    }

    /// Consumes the gradients, returning owned parameter buffers in
    /// registration order.
    pub fn into_param_grads(mut self) -> Vec<Vec<f64>> {
        self.params
            .iter()
            .map(|p| std::mem::take(&mut self.grads[p.0]))
            .collect()
    }
}
