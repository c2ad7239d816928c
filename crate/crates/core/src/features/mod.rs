//! Feature families: global (high-order cumulants, order statistics) and
//! local (shingle Fisher Vectors), plus the tagged vector type shared by
//! the classifier and the feature CSV interchange format.

pub mod global;
pub mod local;

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::iq::{InstanceMeta, Modulation, Source};

/// Which feature family a vector belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FeatureTag {
    Hoc,
    Os,
    Fv,
    FvHoc,
}

impl FeatureTag {
    pub fn name(&self) -> &'static str {
        match self {
            FeatureTag::Hoc => "hoc",
            FeatureTag::Os => "os",
            FeatureTag::Fv => "lp",
            FeatureTag::FvHoc => "lp+hoc",
        }
    }
}

impl fmt::Display for FeatureTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FeatureTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "hoc" => Ok(FeatureTag::Hoc),
            "os" => Ok(FeatureTag::Os),
            "lp" | "fv" => Ok(FeatureTag::Fv),
            "lp+hoc" | "fv+hoc" => Ok(FeatureTag::FvHoc),
            other => Err(Error::ConfigError(format!("unknown feature family: {other}"))),
        }
    }
}

/// A tagged numeric feature vector attached to an instance.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub tag: FeatureTag,
    pub values: Vec<f64>,
}

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Concatenate a Fisher Vector with the 7 HOC features; the result is
/// tagged `lp+hoc` regardless of input tags.
pub fn concat_with_hoc(fv: &FeatureVector, hoc: &global::CumulantVector) -> FeatureVector {
    let mut values = fv.values.clone();
    values.extend_from_slice(&hoc.values);
    FeatureVector { tag: FeatureTag::FvHoc, values }
}

/// One row of a feature CSV: instance id and label columns plus the vector.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub id: u64,
    pub meta: InstanceMeta,
    pub values: Vec<f64>,
}

/// Write a feature table as CSV: id, label columns, tag, then values.
pub fn write_feature_csv(path: &Path, tag: FeatureTag, rows: &[FeatureRow]) -> Result<()> {
    let dim = rows.first().map_or(0, |r| r.values.len());
    let mut out = String::new();
    out.push_str("id,modulation,snr_db,overlap_pct,missing_symbols,rotation_rad,tag");
    for k in 0..dim {
        out.push_str(&format!(",f{k}"));
    }
    out.push('\n');
    for row in rows {
        if row.values.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: row.values.len() });
        }
        out.push_str(&format!(
            "{},{},{},{},{},{},{}",
            row.id,
            row.meta.modulation,
            row.meta.snr_db,
            row.meta.overlap_pct,
            row.meta.missing_symbols,
            row.meta.rotation_rad,
            tag
        ));
        for v in &row.values {
            out.push(',');
            out.push_str(&format!("{v}"));
        }
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Read a feature CSV written by [`write_feature_csv`].
pub fn read_feature_csv(path: &Path) -> Result<(FeatureTag, Vec<FeatureRow>)> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::FormatError("empty feature CSV".into()))?;
    let n_cols = header.split(',').count();
    if n_cols < 7 {
        return Err(Error::FormatError("feature CSV header too short".into()));
    }
    let mut tag: Option<FeatureTag> = None;
    let mut rows = Vec::new();
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != n_cols {
            return Err(Error::FormatError(format!(
                "feature CSV row has {} fields, header has {n_cols}",
                fields.len()
            )));
        }
        let bad = |what: &str, v: &str| Error::FormatError(format!("feature CSV {what}: {v}"));
        let row_tag: FeatureTag = fields[6].parse()?;
        match tag {
            None => tag = Some(row_tag),
            Some(t) if t != row_tag => {
                return Err(Error::TagMismatch { expected: t.to_string(), got: row_tag.to_string() })
            }
            _ => {}
        }
        rows.push(FeatureRow {
            id: fields[0].parse().map_err(|_| bad("id", fields[0]))?,
            meta: InstanceMeta {
                modulation: fields[1].parse::<Modulation>()?,
                snr_db: fields[2].parse().map_err(|_| bad("snr_db", fields[2]))?,
                overlap_pct: fields[3].parse().map_err(|_| bad("overlap_pct", fields[3]))?,
                missing_symbols: fields[4].parse().map_err(|_| bad("missing_symbols", fields[4]))?,
                rotation_rad: fields[5].parse().map_err(|_| bad("rotation_rad", fields[5]))?,
                source: Source::File,
            },
            values: fields[7..]
                .iter()
                .map(|v| v.parse().map_err(|_| bad("value", v)))
                .collect::<Result<Vec<f64>>>()?,
        });
    }
    let tag = tag.ok_or_else(|| Error::FormatError("feature CSV has no rows".into()))?;
    Ok((tag, rows))
}
