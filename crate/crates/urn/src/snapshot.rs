//! The container file format and the typed snapshot / dataset files built on
//! it.
//!
//! A container is a single JSON header line (UTF-8, terminated by `\n`)
//! followed by raw binary payload: named sections of little-endian 64-bit
//! floats. The header carries the format version, a kind tag, typed metadata,
//! and a section table with byte offsets relative to the end of the header
//! line. Saving the result of a load reproduces the file byte for byte.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::data::LabeledDataset;
use crate::error::{Result, UrnError};
use crate::math::{Matrix, Vector};
use crate::model::{UrnParams, UrnVariant};
use crate::train::EpochMetrics;

pub const FORMAT_VERSION: u32 = 1;
pub const SNAPSHOT_KIND: &str = "urn-snapshot";
pub const DATASET_KIND: &str = "urn-dataset";
pub const MASK_KIND: &str = "urn-mask";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SectionDesc {
    pub name: String,
    pub offset_bytes: u64,
    pub len_bytes: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound(serialize = "M: Serialize", deserialize = "M: DeserializeOwned"))]
struct ContainerHeader<M> {
    format_version: u32,
    kind: String,
    meta: M,
    sections: Vec<SectionDesc>,
}

/// Writes a container file with the given typed metadata and named payloads.
pub fn write_container<M: Serialize>(
    path: &Path,
    kind: &str,
    meta: &M,
    payloads: &[(&str, &[f64])],
) -> Result<()> {
    let mut sections = Vec::with_capacity(payloads.len());
    let mut offset = 0u64;
    for (name, data) in payloads {
        let len = (data.len() * 8) as u64;
        sections.push(SectionDesc {
            name: (*name).to_string(),
            offset_bytes: offset,
            len_bytes: len,
        });
        offset += len;
    }
    let header = ContainerHeader {
        format_version: FORMAT_VERSION,
        kind: kind.to_string(),
        meta,
        sections,
    };
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer(&mut w, &header).map_err(|e| UrnError::Format(e.to_string()))?;
    w.write_all(b"\n")?;
    for (_, data) in payloads {
        for v in *data {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a container, checking version, kind, and the declared payload sizes
/// against the file length.
pub fn read_container<M: DeserializeOwned>(
    path: &Path,
    expected_kind: &str,
) -> Result<(M, Vec<(String, Vec<f64>)>)> {
    let mut bytes = Vec::new();
    File::open(path)
        .map_err(|e| {
            UrnError::Io(std::io::Error::new(
                e.kind(),
                format!("cannot open {}: {e}", path.display()),
            ))
        })?
        .read_to_end(&mut bytes)?;
    let newline = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| UrnError::Format("missing header line".into()))?;
    let header: ContainerHeader<M> = serde_json::from_slice(&bytes[..newline])
        .map_err(|e| UrnError::Format(format!("bad header: {e}")))?;
    if header.format_version != FORMAT_VERSION {
        return Err(UrnError::Format(format!(
            "format version {} not supported (expected {})",
            header.format_version, FORMAT_VERSION
        )));
    }
    if header.kind != expected_kind {
        return Err(UrnError::Format(format!(
            "container kind `{}` where `{expected_kind}` was expected",
            header.kind
        )));
    }
    let payload = &bytes[newline + 1..];
    let declared: u64 = header.sections.iter().map(|s| s.len_bytes).sum();
    if declared != payload.len() as u64 {
        return Err(UrnError::Format(format!(
            "declared payload of {declared} bytes, file holds {}",
            payload.len()
        )));
    }
    let mut out = Vec::with_capacity(header.sections.len());
    for s in &header.sections {
        let start = s.offset_bytes as usize;
        let end = start + s.len_bytes as usize;
        if end > payload.len() || s.len_bytes % 8 != 0 {
            return Err(UrnError::Format(format!(
                "section `{}` exceeds payload or is not f64-aligned",
                s.name
            )));
        }
        let values: Vec<f64> = payload[start..end]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        out.push((s.name.clone(), values));
    }
    Ok((header.meta, out))
}

fn take_section(
    sections: &mut Vec<(String, Vec<f64>)>,
    name: &str,
    expected_len: usize,
) -> Result<Vec<f64>> {
    let idx = sections
        .iter()
        .position(|(n, _)| n == name)
        .ok_or_else(|| UrnError::Format(format!("missing section `{name}`")))?;
    let (_, data) = sections.remove(idx);
    if data.len() != expected_len {
        return Err(UrnError::Format(format!(
            "section `{name}` holds {} values, expected {expected_len}",
            data.len()
        )));
    }
    Ok(data)
}

// ---------------------------------------------------------------------------
// Snapshots

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SnapshotMeta {
    pub config: ExperimentConfig,
    pub epoch: usize,
    pub metrics: Option<EpochMetrics>,
    /// Number of evaluation traces in the optional `traces` section.
    pub trace_samples: usize,
}

#[derive(Debug, Clone)]
pub struct Snapshot {
    pub meta: SnapshotMeta,
    pub params: UrnParams,
    /// Optional recorded activations, flattened as
    /// `[sample][iteration 0..=I][neuron]`.
    pub traces: Option<Vec<f64>>,
}

pub fn save_snapshot(
    path: &Path,
    config: &ExperimentConfig,
    epoch: usize,
    metrics: Option<&EpochMetrics>,
    params: &UrnParams,
    traces: Option<&[f64]>,
) -> Result<()> {
    let meta = SnapshotMeta {
        config: config.clone(),
        epoch,
        metrics: metrics.cloned(),
        trace_samples: traces.map_or(0, |t| {
            t.len() / ((config.iterations + 1) * config.size)
        }),
    };
    let mut payloads: Vec<(&str, &[f64])> = vec![
        ("weights", params.weights.data()),
        ("bias", params.bias.as_slice()),
    ];
    if let Some(t) = traces {
        payloads.push(("traces", t));
    }
    write_container(path, SNAPSHOT_KIND, &meta, &payloads)
}

pub fn load_snapshot(path: &Path) -> Result<Snapshot> {
    let (meta, mut sections): (SnapshotMeta, _) = read_container(path, SNAPSHOT_KIND)?;
    let size = meta.config.size;
    let weights = Matrix::from_vec(size, size, take_section(&mut sections, "weights", size * size)?)?;
    let bias = Vector::from(take_section(&mut sections, "bias", size)?);
    let traces = if meta.trace_samples > 0 {
        Some(take_section(
            &mut sections,
            "traces",
            meta.trace_samples * (meta.config.iterations + 1) * size,
        )?)
    } else {
        None
    };
    let variant: UrnVariant = meta.config.variant;
    let params = UrnParams::new(
        weights,
        bias,
        variant,
        meta.config.iterations,
        meta.config.input_dim(),
        meta.config.output_dim(),
    )?;
    Ok(Snapshot {
        meta,
        params,
        traces,
    })
}

// ---------------------------------------------------------------------------
// Datasets in the same container format

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub n: usize,
    pub input_dim: usize,
    pub n_classes: usize,
}

pub fn save_dataset(path: &Path, data: &LabeledDataset) -> Result<()> {
    let meta = DatasetMeta {
        n: data.len(),
        input_dim: data.input_dim,
        n_classes: data.n_classes,
    };
    let mut inputs = Vec::with_capacity(data.len() * data.input_dim);
    for x in &data.inputs {
        inputs.extend_from_slice(x.as_slice());
    }
    let labels: Vec<f64> = data.labels.iter().map(|&l| l as f64).collect();
    write_container(
        path,
        DATASET_KIND,
        &meta,
        &[("inputs", &inputs), ("labels", &labels)],
    )
}

pub fn load_dataset(path: &Path) -> Result<LabeledDataset> {
    let (meta, mut sections): (DatasetMeta, _) = read_container(path, DATASET_KIND)?;
    let flat = take_section(&mut sections, "inputs", meta.n * meta.input_dim)?;
    let labels_f = take_section(&mut sections, "labels", meta.n)?;
    let inputs = flat
        .chunks_exact(meta.input_dim)
        .map(|c| Vector::from(c.to_vec()))
        .collect();
    let labels = labels_f.iter().map(|&l| l as usize).collect();
    Ok(LabeledDataset {
        inputs,
        labels,
        input_dim: meta.input_dim,
        n_classes: meta.n_classes,
    })
}

// ---------------------------------------------------------------------------
// Masks

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MaskMeta {
    pub size: usize,
    pub retained: usize,
}

pub fn save_mask(path: &Path, size: usize, mask_values: &[f64], retained: usize) -> Result<()> {
    write_container(
        path,
        MASK_KIND,
        &MaskMeta { size, retained },
        &[("mask", mask_values)],
    )
}
