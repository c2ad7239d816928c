//! Dataset manifests: one line per instance pointing into a shared raw
//! I/Q blob, carrying all metadata knobs.

use std::fs;
use std::io::{Read as _, Seek as _, SeekFrom, Write as _};
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::iq::{self, InstanceMeta, IqInstance, Modulation, Source};
use crate::sim::{generate_instance, instance_seed, SimConfig};

pub const BLOB_FILE: &str = "instances.iq";
pub const MANIFEST_FILE: &str = "manifest.tsv";

/// One manifest record.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub id: u64,
    /// Blob path relative to the manifest location.
    pub path: String,
    pub offset_bytes: u64,
    pub n_samples: usize,
    pub meta: InstanceMeta,
}

impl ManifestEntry {
    fn to_line(&self) -> String {
        format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            self.id,
            self.path,
            self.offset_bytes,
            self.n_samples,
            self.meta.modulation,
            self.meta.snr_db,
            self.meta.overlap_pct,
            self.meta.missing_symbols,
            self.meta.rotation_rad,
            match self.meta.source {
                Source::Simulated => "simulated",
                Source::File => "file",
            },
        )
    }

    fn parse(line: &str) -> Result<Self> {
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 10 {
            return Err(Error::FormatError(format!(
                "manifest line has {} fields, expected 10",
                fields.len()
            )));
        }
        let num = |s: &str, what: &str| -> Result<f64> {
            s.parse().map_err(|_| Error::FormatError(format!("manifest {what}: {s}")))
        };
        Ok(ManifestEntry {
            id: fields[0].parse().map_err(|_| Error::FormatError(format!("manifest id: {}", fields[0])))?,
            path: fields[1].to_string(),
            offset_bytes: fields[2]
                .parse()
                .map_err(|_| Error::FormatError(format!("manifest offset: {}", fields[2])))?,
            n_samples: fields[3]
                .parse()
                .map_err(|_| Error::FormatError(format!("manifest n_samples: {}", fields[3])))?,
            meta: InstanceMeta {
                modulation: fields[4].parse::<Modulation>()?,
                snr_db: num(fields[5], "snr_db")?,
                overlap_pct: num(fields[6], "overlap_pct")?,
                missing_symbols: fields[7]
                    .parse()
                    .map_err(|_| Error::FormatError(format!("manifest missing_symbols: {}", fields[7])))?,
                rotation_rad: num(fields[8], "rotation_rad")?,
                source: match fields[9] {
                    "simulated" => Source::Simulated,
                    "file" => Source::File,
                    other => return Err(Error::FormatError(format!("manifest source: {other}"))),
                },
            },
        })
    }
}

/// A dataset manifest together with the directory it lives in.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub dir: PathBuf,
    pub entries: Vec<ManifestEntry>,
}

impl Dataset {
    pub fn read(manifest_path: &Path) -> Result<Self> {
        let text = fs::read_to_string(manifest_path)?;
        let entries = text
            .lines()
            .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
            .map(ManifestEntry::parse)
            .collect::<Result<Vec<_>>>()?;
        let dir = manifest_path.parent().unwrap_or_else(|| Path::new(".")).to_path_buf();
        Ok(Dataset { dir, entries })
    }

    /// Load one instance from the blob it points into.
    pub fn load(&self, entry: &ManifestEntry) -> Result<IqInstance> {
        let mut file = fs::File::open(self.dir.join(&entry.path))?;
        file.seek(SeekFrom::Start(entry.offset_bytes))?;
        let mut bytes = vec![0u8; entry.n_samples * 8];
        file.read_exact(&mut bytes).map_err(|_| Error::TruncatedFile)?;
        IqInstance::new(iq::decode_samples(&bytes)?, entry.meta)
    }

    /// Load every instance, in manifest order.
    pub fn load_all(&self) -> Result<Vec<IqInstance>> {
        // One read per entry; blobs are small enough to go through the page cache.
        self.entries.iter().map(|e| self.load(e)).collect()
    }
}

/// Generate `count` instances per config and write a blob + manifest under
/// `out_dir`. Per-instance seeds derive from each config's base seed, so
/// two runs with identical configs are byte-identical.
pub fn generate_dataset(configs: &[(SimConfig, usize)], out_dir: &Path) -> Result<Dataset> {
    fs::create_dir_all(out_dir)?;

    let jobs: Vec<SimConfig> = configs
        .iter()
        .flat_map(|(cfg, count)| {
            (0..*count).map(move |k| {
                let mut c = cfg.clone();
                c.rng_seed = instance_seed(cfg.rng_seed, k as u64);
                c
            })
        })
        .collect();
    let instances: Vec<IqInstance> = jobs
        .par_iter()
        .map(generate_instance)
        .collect::<Result<Vec<_>>>()?;

    let blob_path = out_dir.join(BLOB_FILE);
    let mut blob = fs::File::create(&blob_path)?;
    let mut manifest = String::new();
    let mut offset = 0u64;
    for (id, inst) in instances.iter().enumerate() {
        let bytes = iq::encode_samples(inst.samples());
        blob.write_all(&bytes)?;
        let entry = ManifestEntry {
            id: id as u64,
            path: BLOB_FILE.to_string(),
            offset_bytes: offset,
            n_samples: inst.len(),
            meta: inst.meta,
        };
        manifest.push_str(&entry.to_line());
        manifest.push('\n');
        offset += bytes.len() as u64;
    }
    fs::write(out_dir.join(MANIFEST_FILE), &manifest)?;
    Dataset::read(&out_dir.join(MANIFEST_FILE))
}
