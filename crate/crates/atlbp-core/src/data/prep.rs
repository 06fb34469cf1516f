//! Frame-rate downsampling and train-fitted feature normalization.

use crate::data::Segment;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Keeps every stride-th frame starting at index 0, where
/// stride = round(fps / target_fps), and restamps the segment's frame rate.
pub fn downsample(segment: &Segment, target_fps: f64) -> Result<Segment> {
    if target_fps.is_nan() || target_fps <= 0.0 {
        return Err(Error::Usage(format!(
            "target fps must be positive, got {target_fps}"
        )));
    }
    if target_fps > segment.fps {
        return Err(Error::Usage(format!(
            "target fps {target_fps} exceeds source fps {} for segment {}",
            segment.fps,
            segment.id()
        )));
    }
    let stride = (segment.fps / target_fps).round().max(1.0) as usize;
    let frames = segment.frames.iter().step_by(stride).cloned().collect();
    Ok(Segment {
        fps: target_fps,
        frames,
        ..segment.clone()
    })
}

/// Floor applied to per-dimension standard deviations so constant feature
/// columns normalize to zero instead of dividing by zero.
pub const STD_FLOOR: f64 = 1e-8;

/// Per-dimension mean and standard deviation of the traditional feature
/// vector, fitted on training frames only. Embeddings pass through
/// unchanged; their compressions are learned.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalizer {
    /// Fits mean/std over every frame of the given (training) segments.
    pub fn fit(train: &[Segment]) -> Result<Self> {
        let dim = train
            .first()
            .and_then(|s| s.frames.first())
            .map(|f| f.psi.len())
            .ok_or_else(|| Error::Usage("cannot fit a normalizer on empty training data".into()))?;
        let mut mean = vec![0.0; dim];
        let mut count = 0u64;
        for seg in train {
            for frame in &seg.frames {
                for (m, v) in mean.iter_mut().zip(frame.psi.iter()) {
                    *m += v;
                }
                count += 1;
            }
        }
        for m in mean.iter_mut() {
            *m /= count as f64;
        }
        let mut var = vec![0.0; dim];
        for seg in train {
            for frame in &seg.frames {
                for (s, (v, m)) in var.iter_mut().zip(frame.psi.iter().zip(mean.iter())) {
                    let d = v - m;
                    *s += d * d;
                }
            }
        }
        let std = var
            .into_iter()
            .map(|s| (s / count as f64).sqrt().max(STD_FLOOR))
            .collect();
        Ok(Self { mean, std })
    }

    /// Returns a copy of the segment with psi standardized to
    /// (psi - mean) / std.
    pub fn apply(&self, segment: &Segment) -> Result<Segment> {
        let mut out = segment.clone();
        for frame in out.frames.iter_mut() {
            if frame.psi.len() != self.mean.len() {
                return Err(Error::Dimension {
                    op: "apply_normalizer",
                    detail: format!(
                        "segment {} psi has length {}, normalizer was fitted on {}",
                        segment.id(),
                        frame.psi.len(),
                        self.mean.len()
                    ),
                });
            }
            for (i, v) in frame.psi.as_mut_slice().iter_mut().enumerate() {
                *v = (*v - self.mean[i]) / self.std[i];
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::tests_support::{make_segment, make_segment_with};

    #[test]
    fn downsample_30_to_3_keeps_every_tenth_frame() {
        let seg = make_segment_with("u", "s", 0, 300, |i| vec![i as f64]);
        let out = downsample(&seg, 3.0).unwrap();
        assert_eq!(out.frames.len(), 30);
        assert_eq!(out.fps, 3.0);
        for (k, frame) in out.frames.iter().enumerate() {
            assert_eq!(frame.psi[0], (10 * k) as f64);
        }
    }

    #[test]
    fn downsample_to_same_rate_is_identity() {
        let seg = make_segment("u", "s", 0, 12);
        let out = downsample(&seg, seg.fps).unwrap();
        assert_eq!(out.frames, seg.frames);
    }

    #[test]
    fn downsample_short_segment_keeps_first_frame() {
        let seg = make_segment_with("u", "s", 0, 7, |i| vec![i as f64]);
        let out = downsample(&seg, 3.0).unwrap();
        assert_eq!(out.frames.len(), 1);
        assert_eq!(out.frames[0].psi[0], 0.0);
    }

    #[test]
    fn downsample_rejects_upsampling() {
        let seg = make_segment("u", "s", 0, 5);
        assert!(matches!(downsample(&seg, 60.0), Err(Error::Usage(_))));
    }

    #[test]
    fn constant_column_normalizes_to_zero() {
        let segs = vec![make_segment_with("u", "s", 0, 5, |_| vec![4.25, 1.0])];
        let norm = Normalizer::fit(&segs).unwrap();
        let out = norm.apply(&segs[0]).unwrap();
        for frame in &out.frames {
            assert_eq!(frame.psi[0], 0.0);
            assert_eq!(frame.psi[1], 0.0);
        }
    }

    #[test]
    fn standardized_column_is_nearly_unchanged() {
        // Column with mean 0 and unit population std.
        let values = [-1.0, 1.0];
        let segs = vec![make_segment_with("u", "s", 0, 2, |i| vec![values[i]])];
        let norm = Normalizer::fit(&segs).unwrap();
        let out = norm.apply(&segs[0]).unwrap();
        assert!((out.frames[0].psi[0] + 1.0).abs() < 1e-12);
        assert!((out.frames[1].psi[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn train_statistics_are_zero_mean_unit_std_after_normalization() {
        let segs: Vec<_> = (0..4)
            .map(|p| make_segment_with("u", "s", p, 25, |i| {
                vec![(i as f64) * 0.37 + p as f64, (i as f64).sin() * 3.0 - 1.0]
            }))
            .collect();
        let norm = Normalizer::fit(&segs).unwrap();
        let normalized: Vec<_> = segs.iter().map(|s| norm.apply(s).unwrap()).collect();

        // Direct statistics oracle over the normalized training frames.
        let mut n = 0.0;
        let mut sum = [0.0f64; 2];
        let mut sumsq = [0.0f64; 2];
        for seg in &normalized {
            for frame in &seg.frames {
                for d in 0..2 {
                    sum[d] += frame.psi[d];
                    sumsq[d] += frame.psi[d] * frame.psi[d];
                }
                n += 1.0;
            }
        }
        for d in 0..2 {
            let mean = sum[d] / n;
            let std = (sumsq[d] / n - mean * mean).sqrt();
            assert!(mean.abs() < 1e-9, "dim {d} mean {mean}");
            assert!((std - 1.0).abs() < 1e-9, "dim {d} std {std}");
        }
    }
}
