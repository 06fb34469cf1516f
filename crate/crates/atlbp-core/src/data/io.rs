//! JSONL dataset ingestion and writing.
//!
//! Line 1 is a header declaring the format version, feature dimensions, and
//! the label vocabulary; every following line is one segment record. Files
//! ending in `.gz` are gzip-compressed.

use crate::data::{FrameFeatures, OutcomeLabel, Segment};
use crate::error::{Error, Result};
use crate::numgrad::Vec64;
use flate2::read::GzDecoder;
use flate2::{Compression, GzBuilder};
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

pub const DATASET_FORMAT_VERSION: u32 = 1;

/// Dataset header: feature dimensions and label vocabulary.
///
/// `dim_rho` or `dim_xi` of 0 declares that the corresponding embedding is
/// absent from every record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetHeader {
    pub format_version: u32,
    pub dim_psi: usize,
    pub dim_rho: usize,
    pub dim_xi: usize,
    pub labels: Vec<String>,
}

impl DatasetHeader {
    pub fn new(dim_psi: usize, dim_rho: usize, dim_xi: usize) -> Self {
        Self {
            format_version: DATASET_FORMAT_VERSION,
            dim_psi,
            dim_rho,
            dim_xi,
            labels: OutcomeLabel::ALL.iter().map(|l| l.name().to_string()).collect(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.format_version != DATASET_FORMAT_VERSION {
            return Err(Error::Schema(format!(
                "unsupported dataset format_version {}, expected {DATASET_FORMAT_VERSION}",
                self.format_version
            )));
        }
        if self.dim_psi == 0 {
            return Err(Error::Schema("header dim_psi must be positive".into()));
        }
        let expected: Vec<&str> = OutcomeLabel::ALL.iter().map(|l| l.name()).collect();
        if self.labels != expected {
            return Err(Error::Schema(format!(
                "header labels {:?} do not match the outcome vocabulary {:?}",
                self.labels, expected
            )));
        }
        Ok(())
    }
}

/// A loaded dataset: the header plus every validated segment.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub header: DatasetHeader,
    pub segments: Vec<Segment>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FrameRecord {
    psi: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    rho: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    xi: Option<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SegmentRecord {
    user_id: String,
    session_id: String,
    problem_index: u32,
    outcome: String,
    fps: f64,
    frames: Vec<FrameRecord>,
}

fn open_reader(path: &Path) -> Result<Box<dyn BufRead>> {
    let file = File::open(path)?;
    if path.extension().is_some_and(|e| e == "gz") {
        Ok(Box::new(BufReader::new(GzDecoder::new(file))))
    } else {
        Ok(Box::new(BufReader::new(file)))
    }
}

fn open_writer(path: &Path) -> Result<Box<dyn Write>> {
    let file = File::create(path)?;
    if path.extension().is_some_and(|e| e == "gz") {
        // Fixed mtime keeps generated files byte-identical across runs.
        let gz = GzBuilder::new().mtime(0).write(file, Compression::default());
        Ok(Box::new(BufWriter::new(gz)))
    } else {
        Ok(Box::new(BufWriter::new(file)))
    }
}

/// Loads and validates a JSONL dataset. Every record either becomes a valid
/// [`Segment`] or the load fails with an error naming the offending line.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let reader = open_reader(path.as_ref())?;
    load_from_reader(reader)
}

fn load_from_reader(reader: impl Read) -> Result<Dataset> {
    let mut lines = BufReader::new(reader).lines();
    let header_line = lines
        .next()
        .ok_or_else(|| Error::Schema("dataset file is empty, expected a header line".into()))??;
    let header: DatasetHeader = serde_json::from_str(&header_line).map_err(|e| Error::Parse {
        line: 1,
        message: format!("invalid header: {e}"),
    })?;
    header.validate()?;

    let mut segments = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in lines.enumerate() {
        let line_no = idx + 2;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: SegmentRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let segment = validate_record(record, &header, line_no)?;
        if !seen.insert(segment.id()) {
            return Err(Error::Data(format!(
                "duplicate problem_index for segment {} (line {line_no})",
                segment.id()
            )));
        }
        segments.push(segment);
    }
    Ok(Dataset { header, segments })
}

fn validate_record(record: SegmentRecord, header: &DatasetHeader, line_no: usize) -> Result<Segment> {
    let label: OutcomeLabel = record
        .outcome
        .parse()
        .map_err(|_| Error::Label(format!("'{}' (line {line_no})", record.outcome)))?;
    if !(record.fps > 0.0 && record.fps.is_finite()) {
        return Err(Error::Parse {
            line: line_no,
            message: format!("fps must be a positive finite number, got {}", record.fps),
        });
    }
    let seg_id = format!(
        "{}/{}/{}",
        record.user_id, record.session_id, record.problem_index
    );
    if record.frames.is_empty() {
        return Err(Error::Data(format!(
            "segment {seg_id}: empty frame list (line {line_no})"
        )));
    }
    let mut frames = Vec::with_capacity(record.frames.len());
    for (f, frame) in record.frames.into_iter().enumerate() {
        if frame.psi.len() != header.dim_psi {
            return Err(Error::Schema(format!(
                "segment {seg_id} frame {f}: psi has length {}, header declares {} (line {line_no})",
                frame.psi.len(),
                header.dim_psi
            )));
        }
        let psi = Vec64::new(frame.psi).map_err(|e| Error::Parse {
            line: line_no,
            message: format!("segment {seg_id} frame {f} psi: {e}"),
        })?;
        let rho = convert_embedding(frame.rho, header.dim_rho, "rho", &seg_id, f, line_no)?;
        let xi = convert_embedding(frame.xi, header.dim_xi, "xi", &seg_id, f, line_no)?;
        frames.push(FrameFeatures { psi, rho, xi });
    }
    Ok(Segment {
        user_id: record.user_id,
        session_id: record.session_id,
        problem_index: record.problem_index,
        label,
        fps: record.fps,
        frames,
    })
}

fn convert_embedding(
    raw: Option<Vec<f64>>,
    declared_dim: usize,
    name: &str,
    seg_id: &str,
    frame: usize,
    line_no: usize,
) -> Result<Option<Vec64>> {
    match raw {
        None => Ok(None),
        Some(values) => {
            if declared_dim == 0 {
                return Err(Error::Schema(format!(
                    "segment {seg_id} frame {frame}: {name} present but header declares dim 0 (line {line_no})"
                )));
            }
            if values.len() != declared_dim {
                return Err(Error::Schema(format!(
                    "segment {seg_id} frame {frame}: {name} has length {}, header declares {declared_dim} (line {line_no})",
                    values.len()
                )));
            }
            let v = Vec64::new(values).map_err(|e| Error::Parse {
                line: line_no,
                message: format!("segment {seg_id} frame {frame} {name}: {e}"),
            })?;
            Ok(Some(v))
        }
    }
}

/// Writes a dataset in the JSONL ingestion format (gzip when the path ends
/// in `.gz`). Floats are written in shortest round-trip decimal form, so a
/// load of the written file reproduces the exact same values.
pub fn write_dataset(path: impl AsRef<Path>, header: &DatasetHeader, segments: &[Segment]) -> Result<()> {
    let mut w = open_writer(path.as_ref())?;
    let header_json = serde_json::to_string(header)
        .map_err(|e| Error::Data(format!("failed to serialize header: {e}")))?;
    writeln!(w, "{header_json}")?;
    for seg in segments {
        let record = SegmentRecord {
            user_id: seg.user_id.clone(),
            session_id: seg.session_id.clone(),
            problem_index: seg.problem_index,
            outcome: seg.label.name().to_string(),
            fps: seg.fps,
            frames: seg
                .frames
                .iter()
                .map(|f| FrameRecord {
                    psi: f.psi.as_slice().to_vec(),
                    rho: f.rho.as_ref().map(|v| v.as_slice().to_vec()),
                    xi: f.xi.as_ref().map(|v| v.as_slice().to_vec()),
                })
                .collect(),
        };
        let line = serde_json::to_string(&record)
            .map_err(|e| Error::Data(format!("failed to serialize segment: {e}")))?;
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}
