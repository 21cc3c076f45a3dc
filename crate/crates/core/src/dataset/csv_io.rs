//! CSV ingestion and export.
//!
//! Layout: optional `#` comment lines carrying provenance metadata, then a
//! header `device,time,<attr names...>`, then one row per (device, time).
//! Continuous cells use the shortest round-trip float form; discrete cells
//! carry their category label. Missing (device, time) cells are an error,
//! never imputed.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use super::{AttributeKind, Provenance, TimeSeriesDataset};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct IngestColumn {
    /// Column name in the file header.
    pub name: String,
    pub kind: AttributeKind,
    /// Min-Max rescale this (continuous) column to [-1, 1].
    pub rescale: bool,
}

/// Column-to-attribute mapping for ingestion.
#[derive(Debug, Clone)]
pub struct IngestSchema {
    pub columns: Vec<IngestColumn>,
}

impl IngestSchema {
    pub fn validate(&self) -> Result<()> {
        if self.columns.is_empty() {
            return Err(Error::config("schema maps no columns"));
        }
        for c in &self.columns {
            c.kind.validate()?;
            if c.rescale && !c.kind.is_continuous() {
                return Err(Error::config(format!(
                    "column {:?}: rescaling applies to continuous columns only",
                    c.name
                )));
            }
        }
        Ok(())
    }
}

pub fn export_csv(ds: &TimeSeriesDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if path.as_os_str().is_empty() {
        return Err(Error::config("export path is empty"));
    }
    let mut out = String::new();
    let stages: Vec<String> = ds.stage_history().iter().map(|s| s.to_string()).collect();
    out.push_str(&format!("# provenance: {}\n", stages.join(",")));

    let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
    let mut header = vec!["device".to_string(), "time".to_string()];
    header.extend(ds.attributes().iter().cloned());
    w.write_record(&header)?;
    for (i, device) in ds.devices().iter().enumerate() {
        for (ti, time) in ds.times().iter().enumerate() {
            let mut rec = vec![device.clone(), time.to_string()];
            for j in 0..ds.n_attributes() {
                let v = ds.value(i, j, ti);
                rec.push(match ds.kind(j) {
                    AttributeKind::Continuous { .. } => format!("{v}"),
                    AttributeKind::Discrete { categories } => categories[v as usize].clone(),
                });
            }
            w.write_record(&rec)?;
        }
    }
    let body = w.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
    out.push_str(std::str::from_utf8(&body).expect("csv output is utf-8"));

    let mut f = std::fs::File::create(path)?;
    f.write_all(out.as_bytes())?;
    Ok(())
}

pub fn ingest_csv(path: impl AsRef<Path>, schema: &IngestSchema) -> Result<TimeSeriesDataset> {
    schema.validate()?;
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;

    // Leading comment lines carry provenance metadata.
    let mut stages: Vec<Provenance> = vec![Provenance::Raw];
    let mut comment_lines = 0usize;
    let mut body_start = 0usize;
    for line in text.split_inclusive('\n') {
        if line.starts_with('#') {
            comment_lines += 1;
            body_start += line.len();
            if let Some(rest) = line.trim_start_matches('#').trim().strip_prefix("provenance:") {
                stages = rest
                    .trim()
                    .split(',')
                    .filter(|s| !s.is_empty())
                    .map(|s| s.trim().parse())
                    .collect::<Result<Vec<_>>>()?;
                if stages.is_empty() {
                    stages = vec![Provenance::Raw];
                }
            }
        } else {
            break;
        }
    }
    let body = &text[body_start..];

    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(body.as_bytes());
    let header = reader.headers()?.clone();
    if header.len() < 2 || &header[0] != "device" || &header[1] != "time" {
        return Err(Error::Parse {
            location: format!("{}:{}", path.display(), comment_lines + 1),
            message: "header must start with device,time".into(),
        });
    }
    let mut col_of = Vec::with_capacity(schema.columns.len());
    for c in &schema.columns {
        let idx = header
            .iter()
            .position(|h| h == c.name)
            .ok_or_else(|| Error::config(format!("column {:?} not present in header", c.name)))?;
        col_of.push(idx);
    }

    let mut devices: Vec<String> = Vec::new();
    let mut cells: BTreeMap<(usize, i64), Vec<f64>> = BTreeMap::new();
    for (row_idx, rec) in reader.records().enumerate() {
        let rec = rec?;
        let line = comment_lines + 2 + row_idx; // comments + header + prior rows
        let location = |msg: String| Error::Parse {
            location: format!("{}:{}", path.display(), line),
            message: msg,
        };
        let device = rec.get(0).unwrap_or("").to_string();
        let time: i64 = rec
            .get(1)
            .unwrap_or("")
            .parse()
            .map_err(|_| location(format!("bad time value {:?}", rec.get(1).unwrap_or(""))))?;
        let dev_idx = match devices.iter().position(|d| d == &device) {
            Some(i) => i,
            None => {
                devices.push(device.clone());
                devices.len() - 1
            }
        };
        let mut row = Vec::with_capacity(schema.columns.len());
        for (c, &ci) in schema.columns.iter().zip(&col_of) {
            let cell = rec
                .get(ci)
                .ok_or_else(|| location(format!("row is missing column {:?}", c.name)))?;
            let v = match &c.kind {
                AttributeKind::Continuous { .. } => cell.parse::<f64>().map_err(|_| {
                    location(format!("column {:?}: bad numeric value {cell:?}", c.name))
                })?,
                AttributeKind::Discrete { categories } => {
                    match categories.iter().position(|l| l == cell) {
                        Some(i) => i as f64,
                        None => {
                            return Err(location(format!(
                                "column {:?}: category {cell:?} is not in the declared label set",
                                c.name
                            )))
                        }
                    }
                }
            };
            row.push(v);
        }
        if cells.insert((dev_idx, time), row).is_some() {
            return Err(Error::MissingData(format!(
                "duplicate row for device {device:?}, time {time}"
            )));
        }
    }

    if devices.is_empty() {
        return Err(Error::MissingData("file contains no data rows".into()));
    }
    let mut times: Vec<i64> = cells.keys().map(|&(_, t)| t).collect();
    times.sort_unstable();
    times.dedup();

    // Every (device, time) combination must be present.
    for (di, device) in devices.iter().enumerate() {
        for &t in &times {
            if !cells.contains_key(&(di, t)) {
                return Err(Error::MissingData(format!(
                    "no row for device {device:?} at time {t}"
                )));
            }
        }
    }

    let k = schema.columns.len();
    let mut values = vec![0.0; devices.len() * k * times.len()];
    for ((di, t), row) in &cells {
        let ti = times.binary_search(t).unwrap();
        for (j, v) in row.iter().enumerate() {
            values[(di * k + j) * times.len() + ti] = *v;
        }
    }

    let mut kinds: Vec<AttributeKind> = schema.columns.iter().map(|c| c.kind.clone()).collect();
    for (j, c) in schema.columns.iter().enumerate() {
        if !c.rescale {
            continue;
        }
        let column: Vec<f64> = (0..devices.len())
            .flat_map(|di| (0..times.len()).map(move |ti| (di, ti)))
            .map(|(di, ti)| values[(di * k + j) * times.len() + ti])
            .collect();
        let lo = column.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = column.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !(hi > lo) {
            return Err(Error::invalid(format!(
                "column {:?}: min-max rescale needs non-constant values",
                c.name
            )));
        }
        for di in 0..devices.len() {
            for ti in 0..times.len() {
                let idx = (di * k + j) * times.len() + ti;
                values[idx] = -1.0 + 2.0 * (values[idx] - lo) / (hi - lo);
            }
        }
        kinds[j] = AttributeKind::Continuous { lo: -1.0, hi: 1.0 };
    }

    TimeSeriesDataset::from_parts(
        devices,
        schema.columns.iter().map(|c| c.name.clone()).collect(),
        kinds,
        times,
        values,
        stages,
    )
}
