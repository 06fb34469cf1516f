//! Reference baselines: the constant predominant-label predictor and a
//! non-temporal classifier that mean-pools the fused features over time
//! before a single affine + softmax layer.

use crate::data::{OutcomeLabel, Segment};
use crate::error::{Error, Result};
use crate::model::{AffineParams, ModelConfig};
use crate::numgrad::{apply_affine, softmax, AdamConfig, AdamState, GradTape, Mat64, Vec64};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// The most frequent training label; ties break toward the lowest label
/// code. Predicting this constant is the floor any trained model must beat.
pub fn predominant_label_baseline(train_labels: &[OutcomeLabel]) -> Result<OutcomeLabel> {
    if train_labels.is_empty() {
        return Err(Error::Usage("predominant-label baseline needs at least one label".into()));
    }
    let mut counts = [0u64; OutcomeLabel::COUNT];
    for label in train_labels {
        counts[label.code()] += 1;
    }
    let mut best = 0;
    for (code, &count) in counts.iter().enumerate() {
        if count > counts[best] {
            best = code;
        }
    }
    OutcomeLabel::from_code(best)
}

/// Non-temporal classifier: averages the fused per-frame features over the
/// segment, then applies one affine + softmax. The compression layers are
/// trained jointly; the head starts at zero so an untrained classifier
/// predicts uniformly.
#[derive(Clone, Debug, PartialEq)]
pub struct MeanPoolParams {
    config: ModelConfig,
    c_a: Option<AffineParams>,
    c_v: Option<AffineParams>,
    head: AffineParams,
}

#[derive(Clone, Debug)]
pub struct MeanPoolResult {
    pub params: MeanPoolParams,
    pub epoch_losses: Vec<f64>,
    pub steps: u64,
}

fn uniform_mat(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Mat64 {
    let k = 1.0 / (cols as f64).sqrt();
    Mat64::new(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-k..k)).collect())
        .expect("generated weights are finite")
}

impl MeanPoolParams {
    fn init(config: &ModelConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        config.validate()?;
        let c_a = config.uses_affect().then(|| AffineParams {
            w: uniform_mat(rng, config.dim_ca, config.dim_rho),
            b: Vec64::zeros(config.dim_ca),
        });
        let c_v = config.uses_identity().then(|| AffineParams {
            w: uniform_mat(rng, config.dim_cv, config.dim_xi),
            b: Vec64::zeros(config.dim_cv),
        });
        let head = AffineParams {
            w: Mat64::zeros(config.num_classes, config.fused_dim()),
            b: Vec64::zeros(config.num_classes),
        };
        Ok(Self { config: config.clone(), c_a, c_v, head })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    fn tensor_lens(&self) -> Vec<usize> {
        self.tensor_slices().iter().map(|s| s.len()).collect()
    }

    fn tensor_slices(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        if let Some(ca) = &self.c_a {
            out.push(ca.w.as_slice());
            out.push(ca.b.as_slice());
        }
        if let Some(cv) = &self.c_v {
            out.push(cv.w.as_slice());
            out.push(cv.b.as_slice());
        }
        out.push(self.head.w.as_slice());
        out.push(self.head.b.as_slice());
        out
    }

    fn tensor_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        if let Some(ca) = &mut self.c_a {
            out.push(ca.w.as_mut_slice());
            out.push(ca.b.as_mut_slice());
        }
        if let Some(cv) = &mut self.c_v {
            out.push(cv.w.as_mut_slice());
            out.push(cv.b.as_mut_slice());
        }
        out.push(self.head.w.as_mut_slice());
        out.push(self.head.b.as_mut_slice());
        out
    }

    fn compress(&self, layer: &AffineParams, raw: &Vec64) -> Result<Vec64> {
        let mut out = apply_affine(&layer.w, &layer.b, raw)?;
        if self.config.compress_tanh {
            for v in out.as_mut_slice() {
                *v = v.tanh();
            }
        }
        Ok(out)
    }

    /// Mean of the fused per-frame feature vectors.
    pub fn pooled_features(&self, segment: &Segment) -> Result<Vec64> {
        if segment.frames.is_empty() {
            return Err(Error::Data(format!("segment {} has no frames", segment.id())));
        }
        let d = self.config.fused_dim();
        let mut sum = vec![0.0; d];
        for (t, frame) in segment.frames.iter().enumerate() {
            let mut fused = frame.psi.as_slice().to_vec();
            if let Some(ca) = &self.c_a {
                let rho = frame.rho.as_ref().ok_or_else(|| {
                    Error::Data(format!(
                        "segment {} frame {t}: affect embedding (rho) missing",
                        segment.id()
                    ))
                })?;
                fused.extend_from_slice(self.compress(ca, rho)?.as_slice());
            }
            if let Some(cv) = &self.c_v {
                let xi = frame.xi.as_ref().ok_or_else(|| {
                    Error::Data(format!(
                        "segment {} frame {t}: identity embedding (xi) missing",
                        segment.id()
                    ))
                })?;
                fused.extend_from_slice(self.compress(cv, xi)?.as_slice());
            }
            if fused.len() != d {
                return Err(Error::Config(format!(
                    "segment {} frame {t}: fused length {} does not match configuration {d}",
                    segment.id(),
                    fused.len()
                )));
            }
            for (s, v) in sum.iter_mut().zip(fused.iter()) {
                *s += v;
            }
        }
        let scale = 1.0 / segment.frames.len() as f64;
        for s in sum.iter_mut() {
            *s *= scale;
        }
        Vec64::new(sum).map_err(|e| Error::Numeric(format!("pooled features: {e}")))
    }

    /// Predicted class and probabilities; ties break toward the lowest
    /// class index.
    pub fn predict(&self, segment: &Segment) -> Result<(usize, Vec64)> {
        let pooled = self.pooled_features(segment)?;
        let logits = apply_affine(&self.head.w, &self.head.b, &pooled)?;
        let probs = softmax(&logits)?;
        let mut best = 0;
        for (i, p) in probs.iter().enumerate() {
            if *p > probs[best] {
                best = i;
            }
        }
        Ok((best, probs))
    }
}

/// Trains the mean-pool baseline with the same optimizer settings and
/// epoch/shuffle discipline as the temporal model.
pub fn train_mean_pool(config: &ModelConfig, segments: &[Segment]) -> Result<MeanPoolResult> {
    if segments.is_empty() {
        return Err(Error::Usage("training requires at least one segment".into()));
    }
    for seg in segments {
        if seg.label.code() >= config.num_classes {
            return Err(Error::Data(format!(
                "segment {}: label {} outside 0..{}",
                seg.id(),
                seg.label,
                config.num_classes
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = MeanPoolParams::init(config, &mut rng)?;
    let adam_config = AdamConfig {
        learning_rate: config.learning_rate,
        beta1: config.beta1,
        beta2: config.beta2,
        epsilon: config.epsilon,
    };
    let mut adam = AdamState::new(adam_config, &params.tensor_lens());
    let mut order: Vec<usize> = (0..segments.len()).collect();
    let mut epoch_losses = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for &idx in &order {
            let segment = &segments[idx];
            let mut tape = GradTape::new();
            let ca_nodes = params
                .c_a
                .as_ref()
                .map(|l| (tape.param_matrix(&l.w), tape.param_vector(&l.b)));
            let cv_nodes = params
                .c_v
                .as_ref()
                .map(|l| (tape.param_matrix(&l.w), tape.param_vector(&l.b)));
            let head_nodes = (tape.param_matrix(&params.head.w), tape.param_vector(&params.head.b));

            let mut fused_nodes = Vec::with_capacity(segment.frames.len());
            for (t, frame) in segment.frames.iter().enumerate() {
                let psi = tape.input(&frame.psi);
                let mut parts = vec![psi];
                if let Some((w, b)) = ca_nodes {
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
                if let Some((w, b)) = cv_nodes {
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
                fused_nodes.push(if parts.len() == 1 { parts[0] } else { tape.concat(&parts)? });
            }
            let pooled = tape.mean(&fused_nodes)?;
            let logits = tape.affine(head_nodes.0, config.num_classes, config.fused_dim(), head_nodes.1, pooled)?;
            let loss_node = tape.softmax_cross_entropy(logits, segment.label.code())?;
            let loss = tape.value(loss_node)[0];
            if !loss.is_finite() {
                return Err(Error::Numeric(format!(
                    "baseline loss became non-finite at epoch {epoch} on segment {}",
                    segment.id()
                )));
            }
            loss_sum += loss;

            let grads = tape.backward(loss_node)?.into_param_grads();
            let grad_refs: Vec<&[f64]> = grads.iter().map(|g| g.as_slice()).collect();
            adam.step(&mut params.tensor_slices_mut(), &grad_refs)?;
        }
        epoch_losses.push(loss_sum / segments.len() as f64);
    }

    Ok(MeanPoolResult {
        params,
        epoch_losses,
        steps: adam.step_count(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::tests_support::make_segment_with;
    use crate::model::EmbeddingMode;

    #[test]
    fn predominant_label_picks_the_mode() {
        use OutcomeLabel::*;
        assert_eq!(predominant_label_baseline(&[SOF, SOF, SKIP]).unwrap(), SOF);
    }

    #[test]
    fn predominant_label_tie_breaks_toward_lowest_code() {
        use OutcomeLabel::*;
        // GIVEUP (1) and NOTR (3) tie at two each.
        assert_eq!(
            predominant_label_baseline(&[NOTR, GIVEUP, NOTR, GIVEUP]).unwrap(),
            GIVEUP
        );
    }

    #[test]
    fn predominant_label_requires_input() {
        assert!(matches!(predominant_label_baseline(&[]), Err(Error::Usage(_))));
    }

    #[test]
    fn predominant_accuracy_equals_label_test_frequency() {
        use OutcomeLabel::*;
        let train = [SKIP, SKIP, SOF];
        let constant = predominant_label_baseline(&train).unwrap();
        let test = [SOF, SKIP, SKIP, SKIP, ATT, GIVEUP];
        let correct = test.iter().filter(|l| **l == constant).count();
        let freq = correct as f64 / test.len() as f64;

        let truths: Vec<usize> = test.iter().map(|l| l.code()).collect();
        let preds = vec![constant.code(); test.len()];
        let cm = confusion_matrix(&truths, &preds, OutcomeLabel::COUNT).unwrap();
        assert_eq!(accuracy(&cm).unwrap(), freq);
    }

    use crate::metrics::{accuracy, confusion_matrix};

    fn pool_config() -> ModelConfig {
        ModelConfig {
            dim_psi: 3,
            num_classes: 3,
            embedding_mode: EmbeddingMode::None,
            learning_rate: 0.05,
            epochs: 4,
            seed: 8,
            ..ModelConfig::default()
        }
    }

    #[test]
    fn zero_epoch_baseline_predicts_uniformly() {
        let mut config = pool_config();
        config.epochs = 0;
        let segs = vec![make_segment_with("u", "s", 0, 4, |_| vec![1.0, 2.0, 3.0])];
        let result = train_mean_pool(&config, &segs).unwrap();
        let (label, probs) = result.params.predict(&segs[0]).unwrap();
        assert_eq!(label, 0);
        for p in probs.iter() {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn single_frame_pooling_is_identity() {
        let config = pool_config();
        let segs = vec![make_segment_with("u", "s", 0, 1, |_| vec![0.25, -1.5, 3.0])];
        let result = train_mean_pool(&config, &segs).unwrap();
        let pooled = result.params.pooled_features(&segs[0]).unwrap();
        assert_eq!(pooled, segs[0].frames[0].psi);
    }

    #[test]
    fn baseline_learns_mean_coded_classes() {
        // Class written into the feature mean is learnable without
        // temporal structure.
        let mut segs = Vec::new();
        for i in 0..30 {
            let class = i % 3;
            let mut seg = make_segment_with("u", "s", i as u32, 5, move |t| {
                vec![class as f64 * 2.0, t as f64 * 0.01, 1.0]
            });
            seg.label = OutcomeLabel::from_code(class).unwrap();
            segs.push(seg);
        }
        let mut config = pool_config();
        config.epochs = 60;
        config.learning_rate = 0.1;
        let result = train_mean_pool(&config, &segs).unwrap();
        let correct = segs
            .iter()
            .filter(|s| result.params.predict(s).unwrap().0 == s.label.code())
            .count();
        assert!(correct >= 28, "only {correct}/30 correct");
        assert_eq!(result.steps, 60 * 30);
    }
}
