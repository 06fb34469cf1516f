//! Forward computation: embedding compression, feature fusion, the LSTM
//! recurrence, and sequence classification.
//!
//! There are two paths over the same kernels: a pure inference path and a
//! tape-recorded training path. Both apply the identical operations in the
//! identical order, so they produce bit-identical values.

use crate::data::Segment;
use crate::error::{Error, Result};
use crate::model::config::Pooling;
use crate::model::params::{LstmLayerParams, ModelParams};
use crate::numgrad::{apply_affine, sigmoid, softmax, GradTape, NodeId, Vec64};

/// Per-layer hidden and cell state, zero-initialized at the start of each
/// segment.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmState {
    pub h: Vec64,
    pub c: Vec64,
}

impl LstmState {
    pub fn zeros(hidden_units: usize) -> Self {
        Self {
            h: Vec64::zeros(hidden_units),
            c: Vec64::zeros(hidden_units),
        }
    }
}

/// One LSTM cell step:
///
///   pre = W x + b + U h
///   i = sigmoid(pre[0..H]),  f = sigmoid(pre[H..2H])
///   g = tanh(pre[2H..3H]),   o = sigmoid(pre[3H..4H])
///   c' = f * c + i * g,      h' = o * tanh(c')
pub fn lstm_cell_step(layer: &LstmLayerParams, x: &Vec64, state: &LstmState) -> Result<LstmState> {
    let h = layer.u.cols();
    if layer.w.cols() != x.len() || state.h.len() != h || state.c.len() != h {
        return Err(Error::Dimension {
            op: "lstm_cell_step",
            detail: format!(
                "W is {}x{}, U is {}x{}, x has length {}, state has length {}",
                layer.w.rows(),
                layer.w.cols(),
                layer.u.rows(),
                layer.u.cols(),
                x.len(),
                state.h.len()
            ),
        });
    }
    let mut pre = apply_affine(&layer.w, &layer.b, x)?;
    let rec = apply_affine(&layer.u, &Vec64::zeros(4 * h), &state.h)?;
    for (p, r) in pre.as_mut_slice().iter_mut().zip(rec.iter()) {
        *p += r;
    }
    let mut next = LstmState::zeros(h);
    for j in 0..h {
        let i_gate = sigmoid(pre[j]);
        let f_gate = sigmoid(pre[h + j]);
        let g = pre[2 * h + j].tanh();
        let o_gate = sigmoid(pre[3 * h + j]);
        let c_new = f_gate * state.c[j] + i_gate * g;
        next.c[j] = c_new;
        next.h[j] = o_gate * c_new.tanh();
    }
    if !next.h.is_finite() || !next.c.is_finite() {
        return Err(Error::Numeric("LSTM state became non-finite".into()));
    }
    Ok(next)
}

/// Applies the learned compression layers to whichever raw embeddings the
/// configuration requires. Returns `(c_a(rho), c_v(xi))`.
pub fn compress_embeddings(
    params: &ModelParams,
    rho: Option<&Vec64>,
    xi: Option<&Vec64>,
) -> Result<(Option<Vec64>, Option<Vec64>)> {
    let config = params.config();
    let ca = if config.uses_affect() {
        let rho = rho.ok_or_else(|| Error::Data("affect embedding (rho) missing".into()))?;
        let layer = params.c_a.as_ref().expect("affect mode implies c_a params");
        let mut out = apply_affine(&layer.w, &layer.b, rho)?;
        if config.compress_tanh {
            for v in out.as_mut_slice() {
                *v = v.tanh();
            }
        }
        Some(out)
    } else {
        None
    };
    let cv = if config.uses_identity() {
        let xi = xi.ok_or_else(|| Error::Data("identity embedding (xi) missing".into()))?;
        let layer = params.c_v.as_ref().expect("identity mode implies c_v params");
        let mut out = apply_affine(&layer.w, &layer.b, xi)?;
        if config.compress_tanh {
            for v in out.as_mut_slice() {
                *v = v.tanh();
            }
        }
        Some(out)
    } else {
        None
    };
    Ok((ca, cv))
}

/// Concatenates psi, then the compressed affect embedding, then the
/// compressed identity embedding; absent components are skipped.
pub fn fuse_features(psi: &Vec64, ca: Option<&Vec64>, cv: Option<&Vec64>) -> Vec64 {
    let mut data = psi.as_slice().to_vec();
    if let Some(ca) = ca {
        data.extend_from_slice(ca.as_slice());
    }
    if let Some(cv) = cv {
        data.extend_from_slice(cv.as_slice());
    }
    Vec64::new(data).expect("fusing finite vectors yields a finite vector")
}

fn check_frame_dims(params: &ModelParams, segment: &Segment) -> Result<()> {
    let config = params.config();
    for (t, frame) in segment.frames.iter().enumerate() {
        if frame.psi.len() != config.dim_psi {
            return Err(Error::Config(format!(
                "segment {} frame {t}: psi has length {}, model expects {}",
                segment.id(),
                frame.psi.len(),
                config.dim_psi
            )));
        }
        if let Some(rho) = &frame.rho {
            if config.uses_affect() && rho.len() != config.dim_rho {
                return Err(Error::Config(format!(
                    "segment {} frame {t}: rho has length {}, model expects {}",
                    segment.id(),
                    rho.len(),
                    config.dim_rho
                )));
            }
        }
        if let Some(xi) = &frame.xi {
            if config.uses_identity() && xi.len() != config.dim_xi {
                return Err(Error::Config(format!(
                    "segment {} frame {t}: xi has length {}, model expects {}",
                    segment.id(),
                    xi.len(),
                    config.dim_xi
                )));
            }
        }
    }
    Ok(())
}

/// Runs the stacked LSTM over the segment's fused frame sequence and
/// returns class probabilities.
pub fn classify_sequence(params: &ModelParams, segment: &Segment) -> Result<Vec64> {
    if segment.frames.is_empty() {
        return Err(Error::Data(format!("segment {} has no frames", segment.id())));
    }
    check_frame_dims(params, segment)?;
    let config = params.config();
    let h = config.hidden_units;
    let mut states: Vec<LstmState> = (0..config.num_layers).map(|_| LstmState::zeros(h)).collect();
    let mut top_hidden: Vec<Vec64> = Vec::with_capacity(segment.frames.len());

    for (t, frame) in segment.frames.iter().enumerate() {
        let (ca, cv) = compress_embeddings(params, frame.rho.as_ref(), frame.xi.as_ref())
            .map_err(|e| amend_frame_context(e, segment, t))?;
        let mut x = fuse_features(&frame.psi, ca.as_ref(), cv.as_ref());
        for (layer, state) in params.lstm.iter().zip(states.iter_mut()) {
            *state = lstm_cell_step(layer, &x, state)
                .map_err(|e| amend_frame_context(e, segment, t))?;
            x = state.h.clone();
        }
        top_hidden.push(x);
    }

    let feature = match config.pooling {
        Pooling::Last => top_hidden.last().expect("non-empty sequence").clone(),
        Pooling::Mean => mean_vectors(&top_hidden),
    };
    let logits = apply_affine(&params.head.w, &params.head.b, &feature)?;
    softmax(&logits)
}

fn mean_vectors(vectors: &[Vec64]) -> Vec64 {
    let scale = 1.0 / vectors.len() as f64;
    let mut out = vec![0.0; vectors[0].len()];
    for v in vectors {
        for (o, x) in out.iter_mut().zip(v.iter()) {
            *o += x;
        }
    }
    for o in out.iter_mut() {
        *o *= scale;
    }
    Vec64::new(out).expect("mean of finite vectors is finite")
}

fn amend_frame_context(e: Error, segment: &Segment, t: usize) -> Error {
    match e {
        Error::Data(msg) => Error::Data(format!("segment {} frame {t}: {msg}", segment.id())),
        Error::Numeric(msg) => Error::Numeric(format!("segment {} timestep {t}: {msg}", segment.id())),
        other => other,
    }
}

/// Parameter node handles for one tape-recorded forward pass, registered in
/// the same canonical order as [`ModelParams::tensors`].
pub(crate) struct TapeParams {
    c_a: Option<(NodeId, NodeId)>,
    c_v: Option<(NodeId, NodeId)>,
    lstm: Vec<(NodeId, NodeId, NodeId)>,
    head: (NodeId, NodeId),
}

pub(crate) fn register_params(tape: &mut GradTape, params: &ModelParams) -> TapeParams {
    let c_a = params
        .c_a
        .as_ref()
        .map(|l| (tape.param_matrix(&l.w), tape.param_vector(&l.b)));
    let c_v = params
        .c_v
        .as_ref()
        .map(|l| (tape.param_matrix(&l.w), tape.param_vector(&l.b)));
    let lstm = params
        .lstm
        .iter()
        .map(|l| (tape.param_matrix(&l.w), tape.param_matrix(&l.u), tape.param_vector(&l.b)))
        .collect();
    let head = (tape.param_matrix(&params.head.w), tape.param_vector(&params.head.b));
    TapeParams { c_a, c_v, lstm, head }
}

/// Tape-recorded forward pass up to the head logits. Mirrors
/// [`classify_sequence`] exactly (same kernels, same order).
pub(crate) fn forward_logits_on_tape(
    tape: &mut GradTape,
    nodes: &TapeParams,
    params: &ModelParams,
    segment: &Segment,
) -> Result<NodeId> {
    if segment.frames.is_empty() {
        return Err(Error::Data(format!("segment {} has no frames", segment.id())));
    }
    check_frame_dims(params, segment)?;
    let config = params.config();
    let h = config.hidden_units;

    let mut states: Vec<(NodeId, NodeId)> =
        (0..config.num_layers).map(|_| (tape.zeros(h), tape.zeros(h))).collect();
    let mut top_hidden: Vec<NodeId> = Vec::with_capacity(segment.frames.len());

    for (t, frame) in segment.frames.iter().enumerate() {
        // Compression + fusion.
        let psi = tape.input(&frame.psi);
        let mut parts = vec![psi];
        if let Some((w, b)) = nodes.c_a {
            let rho = frame.rho.as_ref().ok_or_else(|| {
                Error::Data(format!(
                    "segment {} frame {t}: affect embedding (rho) missing",
                    segment.id()
                ))
            })?;
            let rho_node = tape.input(rho);
            let mut ca = tape.affine(w, config.dim_ca, config.dim_rho, b, rho_node)?;
            if config.compress_tanh {
                ca = tape.tanh(ca);
            }
            parts.push(ca);
        }
        if let Some((w, b)) = nodes.c_v {
            let xi = frame.xi.as_ref().ok_or_else(|| {
                Error::Data(format!(
                    "segment {} frame {t}: identity embedding (xi) missing",
                    segment.id()
                ))
            })?;
            let xi_node = tape.input(xi);
            let mut cv = tape.affine(w, config.dim_cv, config.dim_xi, b, xi_node)?;
            if config.compress_tanh {
                cv = tape.tanh(cv);
            }
            parts.push(cv);
        }
        let mut x = if parts.len() == 1 { parts[0] } else { tape.concat(&parts)? };

        // Stacked recurrence.
        let mut input_dim = config.fused_dim();
        for (layer_idx, (w, u, b)) in nodes.lstm.iter().enumerate() {
            let (h_prev, c_prev) = states[layer_idx];
            let wx = tape.affine(*w, 4 * h, input_dim, *b, x)?;
            let uh = tape.matvec(*u, 4 * h, h, h_prev)?;
            let pre = tape.add(wx, uh)?;
            let i_gate = {
                let s = tape.slice(pre, 0, h)?;
                tape.sigmoid(s)
            };
            let f_gate = {
                let s = tape.slice(pre, h, h)?;
                tape.sigmoid(s)
            };
            let g = {
                let s = tape.slice(pre, 2 * h, h)?;
                tape.tanh(s)
            };
            let o_gate = {
                let s = tape.slice(pre, 3 * h, h)?;
                tape.sigmoid(s)
            };
            let fc = tape.mul(f_gate, c_prev)?;
            let ig = tape.mul(i_gate, g)?;
            let c_new = tape.add(fc, ig)?;
            let c_tanh = tape.tanh(c_new);
            let h_new = tape.mul(o_gate, c_tanh)?;
            if tape.value(h_new).iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!(
                    "segment {} timestep {t}: LSTM state became non-finite",
                    segment.id()
                )));
            }
            states[layer_idx] = (h_new, c_new);
            x = h_new;
            input_dim = h;
        }
        top_hidden.push(x);
    }

    let feature = match config.pooling {
        Pooling::Last => *top_hidden.last().expect("non-empty sequence"),
        Pooling::Mean => tape.mean(&top_hidden)?,
    };
    tape.affine(nodes.head.0, config.num_classes, h, nodes.head.1, feature)
}
