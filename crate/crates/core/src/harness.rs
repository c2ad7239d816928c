//! Experiment orchestration: declarative configs drive dataset generation,
//! dictionary and classifier training, and evaluation, emitting result
//! tables and confusion matrices as plot-ready CSV. Datasets, dictionaries,
//! and feature tables are content-addressed in a cache directory so reruns
//! and overlapping experiments reuse work without any staleness risk.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{generate_dataset, Dataset, MANIFEST_FILE};
use crate::error::{Error, Result};
use crate::features::global::{compute_cumulants, compute_moments, compute_order_stats, hoc_features, DEFAULT_QUANTILES};
use crate::features::local::{
    encode_instance, load_dictionary_pair, save_dictionary_pair, train_dictionary_pair,
    GmmDictionary,
};
use crate::features::{write_feature_csv, FeatureRow, FeatureTag};
use crate::iq::{to_polar, InstanceMeta, Modulation};
use crate::sim::SimConfig;
use crate::svm::{predict, stratified_folds, train_svm, train_svm_auto, SvmModel};

/// Overlap sweep grid used when a config does not say otherwise.
pub const DEFAULT_OVERLAPS_PCT: [f64; 6] = [50.0, 60.0, 70.0, 80.0, 90.0, 100.0];

/// Rotation grid mixed into dictionary training data.
pub const DICT_ROTATIONS_RAD: [f64; 5] = [
    0.0,
    std::f64::consts::FRAC_PI_8,
    std::f64::consts::FRAC_PI_4,
    3.0 * std::f64::consts::FRAC_PI_8,
    std::f64::consts::FRAC_PI_2,
];

/// Default SNR sweep: 0 to 20 dB in steps of 2.
pub fn default_snr_grid() -> Vec<f64> {
    (0..=10).map(|i| (2 * i) as f64).collect()
}

/// The dataset axis an experiment sweeps; results are grouped by its value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Knob {
    Snr,
    Overlap,
    Missing,
    Rotation,
}

impl Knob {
    pub fn name(&self) -> &'static str {
        match self {
            Knob::Snr => "snr_db",
            Knob::Overlap => "overlap_pct",
            Knob::Missing => "missing_symbols",
            Knob::Rotation => "rotation_rad",
        }
    }
}

/// Dataset grid: the cartesian product of all axis lists, with per-class
/// train/test counts for every cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default = "all_modulations")]
    pub modulations: Vec<Modulation>,
    pub snrs_db: Vec<f64>,
    #[serde(default = "default_overlap_100")]
    pub overlaps_pct: Vec<f64>,
    #[serde(default = "default_missing_0")]
    pub missing: Vec<usize>,
    #[serde(default = "default_rotation_0")]
    pub rotations_rad: Vec<f64>,
    pub train_per_class: usize,
    pub test_per_class: usize,
    #[serde(default = "default_instance_len")]
    pub instance_len: usize,
    #[serde(default = "default_sps")]
    pub samples_per_symbol: usize,
}

fn all_modulations() -> Vec<Modulation> {
    Modulation::ALL.to_vec()
}
fn default_overlap_100() -> Vec<f64> {
    vec![100.0]
}
fn default_missing_0() -> Vec<usize> {
    vec![0]
}
fn default_rotation_0() -> Vec<f64> {
    vec![0.0]
}
fn default_instance_len() -> usize {
    512
}
fn default_sps() -> usize {
    4
}

/// One dataset-grid cell: everything but the modulation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Condition {
    pub snr_db: f64,
    pub overlap_pct: f64,
    pub missing_symbols: usize,
    pub rotation_rad: f64,
}

impl Condition {
    fn knob_value(&self, knob: Knob) -> f64 {
        match knob {
            Knob::Snr => self.snr_db,
            Knob::Overlap => self.overlap_pct,
            Knob::Missing => self.missing_symbols as f64,
            Knob::Rotation => self.rotation_rad,
        }
    }
}

impl GridConfig {
    /// All grid cells, in deterministic axis-major order.
    pub fn conditions(&self) -> Vec<Condition> {
        let mut out = Vec::new();
        for &snr_db in &self.snrs_db {
            for &overlap_pct in &self.overlaps_pct {
                for &missing_symbols in &self.missing {
                    for &rotation_rad in &self.rotations_rad {
                        out.push(Condition { snr_db, overlap_pct, missing_symbols, rotation_rad });
                    }
                }
            }
        }
        out
    }

    fn knob_values(&self, knob: Knob) -> Vec<f64> {
        match knob {
            Knob::Snr => self.snrs_db.clone(),
            Knob::Overlap => self.overlaps_pct.clone(),
            Knob::Missing => self.missing.iter().map(|&m| m as f64).collect(),
            Knob::Rotation => self.rotations_rad.clone(),
        }
    }
}

/// Whether one dictionary serves every condition or each knob value gets
/// its own, trained at the matching condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DictPolicy {
    Universal,
    PerCondition,
}

/// Dictionary training policy. The universal training condition defaults
/// to 10 dB, 100% overlap, no bias, rotations mixed over
/// [`DICT_ROTATIONS_RAD`]. Training data is capped per class to keep EM
/// tractable; the cap is part of the cache key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DictionaryConfig {
    #[serde(default = "default_dict_policy")]
    pub policy: DictPolicy,
    #[serde(default = "default_shingle_len")]
    pub l: usize,
    #[serde(default = "default_dict_size")]
    pub k: usize,
    #[serde(default = "default_dict_snr")]
    pub snr_db: f64,
    #[serde(default = "default_dict_overlap")]
    pub overlap_pct: f64,
    #[serde(default)]
    pub missing_symbols: usize,
    #[serde(default = "default_dict_cap")]
    pub max_instances_per_class: usize,
    #[serde(default = "default_dict_seed")]
    pub seed: u64,
}

fn default_dict_policy() -> DictPolicy {
    DictPolicy::Universal
}
fn default_shingle_len() -> usize {
    3
}
fn default_dict_size() -> usize {
    50
}
fn default_dict_snr() -> f64 {
    10.0
}
fn default_dict_overlap() -> f64 {
    100.0
}
fn default_dict_cap() -> usize {
    100
}
fn default_dict_seed() -> u64 {
    17
}

impl Default for DictionaryConfig {
    fn default() -> Self {
        DictionaryConfig {
            policy: default_dict_policy(),
            l: default_shingle_len(),
            k: default_dict_size(),
            snr_db: default_dict_snr(),
            overlap_pct: default_dict_overlap(),
            missing_symbols: 0,
            max_instances_per_class: default_dict_cap(),
            seed: default_dict_seed(),
        }
    }
}

/// Classifier policy: knob-aware trains one model per knob value on
/// matching conditions; knob-blind trains a single model on the mix.
/// `train_at` pins training to one knob value instead (e.g. train on
/// unbiased scans, test under bias) and overrides `aware`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifierConfig {
    #[serde(default = "default_true")]
    pub aware: bool,
    /// Train only on conditions where the knob equals this grid value.
    #[serde(default)]
    pub train_at: Option<f64>,
    /// Fixed C; omit to pick from the grid on an inner validation split.
    #[serde(default)]
    pub c: Option<f64>,
}

fn default_true() -> bool {
    true
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig { aware: true, train_at: None, c: None }
    }
}

/// A declarative experiment: dataset grid, swept knob, dictionary and
/// classifier policies, and the feature families to compare. The classifier
/// code path is identical across families by construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub id: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_folds")]
    pub folds: usize,
    pub knob: Knob,
    #[serde(default = "default_families", with = "family_list")]
    pub families: Vec<FeatureTag>,
    pub grid: GridConfig,
    #[serde(default)]
    pub dictionary: DictionaryConfig,
    #[serde(default)]
    pub classifier: ClassifierConfig,
}

fn default_folds() -> usize {
    10
}
fn default_families() -> Vec<FeatureTag> {
    vec![FeatureTag::Hoc, FeatureTag::Os, FeatureTag::Fv, FeatureTag::FvHoc]
}

/// Serialize feature families by their CSV names ("hoc", "os", "lp", "lp+hoc").
mod family_list {
    use super::FeatureTag;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[FeatureTag], s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_seq(v.iter().map(|t| t.name()))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        d: D,
    ) -> std::result::Result<Vec<FeatureTag>, D::Error> {
        let names = Vec::<String>::deserialize(d)?;
        names.iter().map(|n| n.parse().map_err(serde::de::Error::custom)).collect()
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::ConfigError(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_toml_file(path: &Path) -> Result<Self> {
        Self::from_toml_str(&fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::ConfigError(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.id.is_empty() {
            return Err(Error::ConfigError("experiment id must not be empty".into()));
        }
        if self.folds < 2 {
            return Err(Error::ConfigError("folds must be >= 2".into()));
        }
        if self.families.is_empty() {
            return Err(Error::ConfigError("at least one feature family is required".into()));
        }
        let g = &self.grid;
        if g.modulations.is_empty()
            || g.snrs_db.is_empty()
            || g.overlaps_pct.is_empty()
            || g.missing.is_empty()
            || g.rotations_rad.is_empty()
        {
            return Err(Error::ConfigError("every grid axis needs at least one value".into()));
        }
        if g.modulations.contains(&Modulation::Unknown) {
            return Err(Error::ConfigError("grid modulations must be classifiable".into()));
        }
        if g.train_per_class == 0 || g.test_per_class == 0 {
            return Err(Error::ConfigError("train/test counts must be >= 1".into()));
        }
        if let Some(t) = self.classifier.train_at {
            if !self.grid.knob_values(self.knob).contains(&t) {
                return Err(Error::ConfigError(format!(
                    "classifier train_at {t} is not a grid value of knob {}",
                    self.knob.name()
                )));
            }
        }
        if self.dictionary.l == 0 || self.dictionary.k == 0 {
            return Err(Error::ConfigError("dictionary l and K must be >= 1".into()));
        }
        if self.dictionary.max_instances_per_class == 0 {
            return Err(Error::ConfigError("dictionary instance cap must be >= 1".into()));
        }
        // validate one representative simulator config per condition
        for cond in self.grid.conditions() {
            for &m in &g.modulations {
                sim_config(m, &cond, g, 0).validate()?;
            }
        }
        Ok(())
    }
}

/// One result-table row: accuracy of one feature family at one knob value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub experiment: String,
    pub family: FeatureTag,
    /// Human-readable dictionary description ("-" for global features).
    pub dictionary: String,
    pub knob: Knob,
    pub knob_value: f64,
    pub accuracy: f64,
    /// Sample std of accuracy over stratified test folds.
    pub accuracy_std: f64,
    /// Per-class accuracy, aligned with `ResultTable::classes`.
    pub per_class: Vec<f64>,
}

/// Plot-ready accuracy table plus the confusion matrices behind it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub classes: Vec<Modulation>,
    pub rows: Vec<ResultRow>,
    /// confusion[row index][true][predicted]
    pub confusions: Vec<Vec<Vec<usize>>>,
}

impl ResultTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("experiment,family,dictionary,knob,knob_value,accuracy,accuracy_std");
        for class in &self.classes {
            out.push_str(&format!(",acc_{class}"));
        }
        out.push('\n');
        for row in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}",
                row.experiment,
                row.family,
                row.dictionary,
                row.knob.name(),
                row.knob_value,
                row.accuracy,
                row.accuracy_std
            ));
            for v in &row.per_class {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }

    /// Rows of one family, sorted by knob value.
    pub fn family_rows(&self, family: FeatureTag) -> Vec<&ResultRow> {
        let mut rows: Vec<&ResultRow> = self.rows.iter().filter(|r| r.family == family).collect();
        rows.sort_by(|a, b| a.knob_value.total_cmp(&b.knob_value));
        rows
    }

    /// Accuracy of one family at one knob value.
    pub fn accuracy_at(&self, family: FeatureTag, knob_value: f64) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.family == family && r.knob_value == knob_value)
            .map(|r| r.accuracy)
    }
}

// ---------------------------------------------------------------------------
// content-addressed caching

fn hash_hex(parts: &[&str]) -> String {
    let mut hasher = Sha256::new();
    for p in parts {
        hasher.update(p.as_bytes());
        hasher.update([0]);
    }
    let digest = hasher.finalize();
    digest.iter().take(12).map(|b| format!("{b:02x}")).collect()
}

fn seed_from(parts: &[&str]) -> u64 {
    let mut hasher = Sha256::new();
    for p in parts {
        hasher.update(p.as_bytes());
        hasher.update([0]);
    }
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

fn canonical_configs(configs: &[(SimConfig, usize)]) -> String {
    // serde_json of the full config list captures every knob, so a cache
    // key derived from it can never go stale
    serde_json::to_string(configs).expect("SimConfig serializes")
}

fn sim_config(modulation: Modulation, cond: &Condition, grid: &GridConfig, seed: u64) -> SimConfig {
    let mut c = SimConfig::new(modulation, cond.snr_db, grid.instance_len, seed);
    c.overlap_pct = cond.overlap_pct;
    c.missing_symbols = cond.missing_symbols;
    c.rotation_rad = cond.rotation_rad;
    c.samples_per_symbol = grid.samples_per_symbol;
    c
}

/// Generate (or reuse) the dataset described by `configs` under the cache.
pub fn cached_dataset(configs: &[(SimConfig, usize)], cache_dir: &Path) -> Result<(String, Dataset)> {
    let key = hash_hex(&["dataset", &canonical_configs(configs)]);
    let dir = cache_dir.join("datasets").join(&key);
    let manifest = dir.join(MANIFEST_FILE);
    let ds = if manifest.exists() {
        Dataset::read(&manifest)?
    } else {
        generate_dataset(configs, &dir)?
    };
    Ok((key, ds))
}

fn split_evenly(total: usize, parts: usize) -> Vec<usize> {
    let base = total / parts;
    let extra = total % parts;
    (0..parts).map(|i| base + usize::from(i < extra)).collect()
}

/// Dictionary training dataset configs: one per (modulation, rotation),
/// with the per-class cap split over the rotation grid.
fn dict_training_configs(dict: &DictionaryConfig, grid: &GridConfig) -> Vec<(SimConfig, usize)> {
    let counts = split_evenly(dict.max_instances_per_class, DICT_ROTATIONS_RAD.len());
    let mut out = Vec::new();
    for &m in &grid.modulations {
        for (ri, &rotation_rad) in DICT_ROTATIONS_RAD.iter().enumerate() {
            let cond = Condition {
                snr_db: dict.snr_db,
                overlap_pct: dict.overlap_pct,
                missing_symbols: dict.missing_symbols,
                rotation_rad,
            };
            let seed = seed_from(&[
                "dict-data",
                &dict.seed.to_string(),
                m.name(),
                &format!("{cond:?}"),
            ]);
            out.push((sim_config(m, &cond, grid, seed), counts[ri]));
        }
    }
    out
}

/// Train (or load from cache) the dictionary pair for one training
/// condition. The key covers l, K, seed, and every dataset knob.
pub fn cached_dictionary_pair(
    dict: &DictionaryConfig,
    grid: &GridConfig,
    cache_dir: &Path,
) -> Result<(String, GmmDictionary, GmmDictionary)> {
    let configs = dict_training_configs(dict, grid);
    let key = hash_hex(&[
        "dict",
        &dict.l.to_string(),
        &dict.k.to_string(),
        &dict.seed.to_string(),
        &canonical_configs(&configs),
    ]);
    let dir = cache_dir.join("dicts").join(&key);
    if dir.join("amplitude.json").exists() {
        let (amp, phase) = load_dictionary_pair(&dir)?;
        return Ok((key, amp, phase));
    }
    let (_, ds) = cached_dataset(&configs, cache_dir)?;
    let polars: Vec<_> = ds.load_all()?.par_iter().map(to_polar).collect();
    let description = format!(
        "simulated mix: {} instances/class at {} dB, {}% overlap, {} missing, rotations {:?}",
        dict.max_instances_per_class, dict.snr_db, dict.overlap_pct, dict.missing_symbols,
        DICT_ROTATIONS_RAD
    );
    let (amp, phase) = train_dictionary_pair(&polars, dict.l, dict.k, dict.seed, &description)?;
    save_dictionary_pair(&dir, &amp, &phase)?;
    Ok((key, amp, phase))
}

fn extract_rows(
    ds: &Dataset,
    family: FeatureTag,
    dicts: Option<(&GmmDictionary, &GmmDictionary)>,
) -> Result<Vec<FeatureRow>> {
    let instances = ds.load_all()?;
    let values: Vec<Vec<f64>> = instances
        .par_iter()
        .map(|inst| -> Result<Vec<f64>> {
            match family {
                FeatureTag::Hoc => Ok(hoc_features(inst)?.values.to_vec()),
                FeatureTag::Os => {
                    Ok(compute_order_stats(&to_polar(inst), DEFAULT_QUANTILES)?.values)
                }
                FeatureTag::Fv => {
                    let (amp, phase) = dicts.expect("local features need a dictionary");
                    Ok(encode_instance(amp, phase, &to_polar(inst))?.values)
                }
                FeatureTag::FvHoc => {
                    let (amp, phase) = dicts.expect("local features need a dictionary");
                    let mut v = encode_instance(amp, phase, &to_polar(inst))?.values;
                    v.extend_from_slice(&compute_cumulants(&compute_moments(inst)?)?.values);
                    Ok(v)
                }
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ds
        .entries
        .iter()
        .zip(values)
        .map(|(e, values)| FeatureRow { id: e.id, meta: e.meta, values })
        .collect())
}

/// Extract (or reuse cached) features of one family over one dataset.
pub fn cached_features(
    dataset_key: &str,
    ds: &Dataset,
    family: FeatureTag,
    dicts: Option<(&str, &GmmDictionary, &GmmDictionary)>,
    cache_dir: &Path,
) -> Result<Vec<FeatureRow>> {
    let dict_key = dicts.map_or("-", |(k, _, _)| k);
    let key = hash_hex(&["features", dataset_key, family.name(), dict_key]);
    let path = cache_dir.join("features").join(format!("{key}.csv"));
    if path.exists() {
        let (_, rows) = crate::features::read_feature_csv(&path)?;
        return Ok(rows);
    }
    let rows = extract_rows(ds, family, dicts.map(|(_, a, p)| (a, p)))?;
    fs::create_dir_all(path.parent().unwrap())?;
    write_feature_csv(&path, family, &rows)?;
    Ok(rows)
}

// ---------------------------------------------------------------------------
// experiment driver

struct CellData {
    condition: Condition,
    train_key: String,
    train: Dataset,
    test_key: String,
    test: Dataset,
}

fn cell_datasets(config: &ExperimentConfig, cache_dir: &Path) -> Result<Vec<CellData>> {
    config
        .grid
        .conditions()
        .into_iter()
        .map(|cond| {
            let build = |role: &str, count: usize| -> Result<(String, Dataset)> {
                let configs: Vec<(SimConfig, usize)> = config
                    .grid
                    .modulations
                    .iter()
                    .map(|&m| {
                        let seed = seed_from(&[
                            "cell",
                            role,
                            &config.seed.to_string(),
                            m.name(),
                            &format!("{cond:?}"),
                        ]);
                        (sim_config(m, &cond, &config.grid, seed), count)
                    })
                    .collect();
                cached_dataset(&configs, cache_dir)
            };
            let (train_key, train) = build("train", config.grid.train_per_class)?;
            let (test_key, test) = build("test", config.grid.test_per_class)?;
            Ok(CellData { condition: cond, train_key, train, test_key, test })
        })
        .collect()
}

type DictHandle = (String, GmmDictionary, GmmDictionary);

/// Dictionary per knob value (universal policy maps every value to the
/// same pair; per-condition retrains with the knob axis overridden).
fn dictionaries_by_knob(
    config: &ExperimentConfig,
    cache_dir: &Path,
) -> Result<BTreeMap<u64, DictHandle>> {
    let knob_values = config.grid.knob_values(config.knob);
    let mut out = BTreeMap::new();
    match config.dictionary.policy {
        DictPolicy::Universal => {
            let handle = cached_dictionary_pair(&config.dictionary, &config.grid, cache_dir)?;
            for &v in &knob_values {
                out.insert(v.to_bits(), handle.clone());
            }
        }
        DictPolicy::PerCondition => {
            for &v in &knob_values {
                let mut dict = config.dictionary.clone();
                match config.knob {
                    Knob::Snr => dict.snr_db = v,
                    Knob::Overlap => dict.overlap_pct = v,
                    Knob::Missing => dict.missing_symbols = v as usize,
                    // rotation is already mixed into every dictionary
                    Knob::Rotation => {}
                }
                out.insert(v.to_bits(), cached_dictionary_pair(&dict, &config.grid, cache_dir)?);
            }
        }
    }
    Ok(out)
}

fn dict_label(config: &ExperimentConfig, knob_value: f64) -> String {
    let d = &config.dictionary;
    match d.policy {
        DictPolicy::Universal => format!("universal(l={} K={} @{}dB)", d.l, d.k, d.snr_db),
        DictPolicy::PerCondition => {
            format!("per-condition(l={} K={} {}={})", d.l, d.k, config.knob.name(), knob_value)
        }
    }
}

fn gather(
    cells: &[CellData],
    select: impl Fn(&CellData) -> bool,
    family: FeatureTag,
    dicts: &BTreeMap<u64, DictHandle>,
    knob: Knob,
    role_test: bool,
    cache_dir: &Path,
) -> Result<(Vec<Vec<f64>>, Vec<Modulation>, Vec<InstanceMeta>)> {
    let mut x = Vec::new();
    let mut y = Vec::new();
    let mut meta = Vec::new();
    for cell in cells.iter().filter(|c| select(c)) {
        let dict = dicts
            .get(&cell.condition.knob_value(knob).to_bits())
            .map(|(k, a, p)| (k.as_str(), a, p));
        let dict = if matches!(family, FeatureTag::Fv | FeatureTag::FvHoc) { dict } else { None };
        let (key, ds) =
            if role_test { (&cell.test_key, &cell.test) } else { (&cell.train_key, &cell.train) };
        for row in cached_features(key, ds, family, dict, cache_dir)? {
            x.push(row.values);
            y.push(row.meta.modulation);
            meta.push(row.meta);
        }
    }
    Ok((x, y, meta))
}

fn fit(
    x: &[Vec<f64>],
    y: &[Modulation],
    family: FeatureTag,
    classifier: &ClassifierConfig,
    seed: u64,
) -> Result<SvmModel> {
    match classifier.c {
        Some(c) => train_svm(x, y, family, c, seed),
        None => train_svm_auto(x, y, family, seed),
    }
}

/// Run one experiment end to end; artifacts (config copy, result CSV,
/// confusion matrices, models) land under `out_dir`, reusable intermediates
/// under `cache_dir`. Any failure aborts before results are written.
pub fn run_experiment(
    config: &ExperimentConfig,
    out_dir: &Path,
    cache_dir: &Path,
) -> Result<ResultTable> {
    config.validate()?;
    let cells = cell_datasets(config, cache_dir)?;
    let dicts = dictionaries_by_knob(config, cache_dir)?;

    let mut classes = config.grid.modulations.clone();
    classes.sort();
    let class_index = |m: Modulation| classes.iter().position(|&c| c == m).unwrap();

    let mut rows = Vec::new();
    let mut confusions = Vec::new();
    let mut models: Vec<(String, SvmModel)> = Vec::new();

    for &family in &config.families {
        // pinned or knob-blind: a single model shared across knob values,
        // trained at the pinned value or on the mix of all conditions
        let shared_model = if let Some(t) = config.classifier.train_at {
            let at_t = |c: &CellData| c.condition.knob_value(config.knob) == t;
            let (x, y, _) = gather(&cells, at_t, family, &dicts, config.knob, false, cache_dir)?;
            Some(fit(&x, &y, family, &config.classifier, config.seed)?)
        } else if config.classifier.aware {
            None
        } else {
            let (x, y, _) =
                gather(&cells, |_| true, family, &dicts, config.knob, false, cache_dir)?;
            Some(fit(&x, &y, family, &config.classifier, config.seed)?)
        };

        for &v in &config.grid.knob_values(config.knob) {
            let at_v = |c: &CellData| c.condition.knob_value(config.knob) == v;
            let model = match &shared_model {
                Some(m) => m.clone(),
                None => {
                    let (x, y, _) =
                        gather(&cells, at_v, family, &dicts, config.knob, false, cache_dir)?;
                    fit(&x, &y, family, &config.classifier, config.seed)?
                }
            };

            let (tx, ty, _) = gather(&cells, at_v, family, &dicts, config.knob, true, cache_dir)?;
            let mut confusion = vec![vec![0usize; classes.len()]; classes.len()];
            let mut correct_flags = Vec::with_capacity(tx.len());
            for (xi, yi) in tx.iter().zip(&ty) {
                let (pred, _) = predict(&model, xi)?;
                confusion[class_index(*yi)][class_index(pred)] += 1;
                correct_flags.push(pred == *yi);
            }
            let accuracy = correct_flags.iter().filter(|&&c| c).count() as f64 / tx.len() as f64;

            // spread estimate: accuracy over stratified test folds
            let folds = stratified_folds(&ty, config.folds, config.seed)?;
            let fold_accs: Vec<f64> = folds
                .iter()
                .map(|idx| {
                    idx.iter().filter(|&&i| correct_flags[i]).count() as f64 / idx.len() as f64
                })
                .collect();
            let mean = fold_accs.iter().sum::<f64>() / fold_accs.len() as f64;
            let var = fold_accs.iter().map(|a| (a - mean).powi(2)).sum::<f64>()
                / (fold_accs.len() - 1) as f64;

            let per_class = (0..classes.len())
                .map(|i| {
                    let total: usize = confusion[i].iter().sum();
                    confusion[i][i] as f64 / total as f64
                })
                .collect();
            let needs_dict = matches!(family, FeatureTag::Fv | FeatureTag::FvHoc);
            rows.push(ResultRow {
                experiment: config.id.clone(),
                family,
                dictionary: if needs_dict { dict_label(config, v) } else { "-".into() },
                knob: config.knob,
                knob_value: v,
                accuracy,
                accuracy_std: var.sqrt(),
                per_class,
            });
            confusions.push(confusion);
            models.push((format!("{}_{}", family.name().replace('+', "_"), v), model));
        }
    }

    let table = ResultTable { classes, rows, confusions };
    write_artifacts(config, &table, &models, out_dir)?;
    Ok(table)
}

fn write_artifacts(
    config: &ExperimentConfig,
    table: &ResultTable,
    models: &[(String, SvmModel)],
    out_dir: &Path,
) -> Result<()> {
    fs::create_dir_all(out_dir)?;
    fs::write(out_dir.join("config.toml"), config.to_toml_string()?)?;
    fs::write(out_dir.join("results.csv"), table.to_csv())?;
    let conf_dir = out_dir.join("confusion");
    fs::create_dir_all(&conf_dir)?;
    for (row, confusion) in table.rows.iter().zip(&table.confusions) {
        let mut out = String::from("true\\pred");
        for class in &table.classes {
            out.push_str(&format!(",{class}"));
        }
        out.push('\n');
        for (class, counts) in table.classes.iter().zip(confusion) {
            out.push_str(&class.to_string());
            for c in counts {
                out.push_str(&format!(",{c}"));
            }
            out.push('\n');
        }
        let name = format!("{}_{}.csv", row.family.name().replace('+', "_"), row.knob_value);
        fs::write(conf_dir.join(name), out)?;
    }
    let model_dir = out_dir.join("models");
    fs::create_dir_all(&model_dir)?;
    for (name, model) in models {
        model.save(&model_dir.join(format!("{name}.json")))?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// diagnostics

/// Mean/std of one tracked feature for one modulation at one knob value.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityRow {
    pub modulation: Modulation,
    pub knob: Knob,
    pub knob_value: f64,
    pub feature: String,
    pub mean: f64,
    pub std: f64,
}

/// Per knob value, the mean and std of |Ĉ42|, |Ĉ63|, and the 75%-ile
/// amplitude order statistic over `count` instances per modulation.
pub fn diagnostic_feature_stability(
    modulations: &[Modulation],
    knob: Knob,
    values: &[f64],
    snr_db: f64,
    count: usize,
    seed: u64,
) -> Result<Vec<StabilityRow>> {
    if modulations.is_empty() || values.is_empty() || count < 2 {
        return Err(Error::ConfigError("diagnostic needs modulations, knob values, count >= 2".into()));
    }
    let grid = GridConfig {
        modulations: modulations.to_vec(),
        snrs_db: vec![snr_db],
        overlaps_pct: default_overlap_100(),
        missing: default_missing_0(),
        rotations_rad: default_rotation_0(),
        train_per_class: count,
        test_per_class: count,
        instance_len: default_instance_len(),
        samples_per_symbol: default_sps(),
    };
    let mut rows = Vec::new();
    for &m in modulations {
        for &v in values {
            let mut cond =
                Condition { snr_db, overlap_pct: 100.0, missing_symbols: 0, rotation_rad: 0.0 };
            match knob {
                Knob::Snr => cond.snr_db = v,
                Knob::Overlap => cond.overlap_pct = v,
                Knob::Missing => cond.missing_symbols = v as usize,
                Knob::Rotation => cond.rotation_rad = v,
            }
            let base = seed_from(&["diag", &seed.to_string(), m.name(), &format!("{cond:?}")]);
            let cfg = sim_config(m, &cond, &grid, base);
            let instances: Vec<_> = (0..count)
                .into_par_iter()
                .map(|i| {
                    let mut c = cfg.clone();
                    c.rng_seed = crate::sim::instance_seed(cfg.rng_seed, i as u64);
                    crate::sim::generate_instance(&c)
                })
                .collect::<Result<Vec<_>>>()?;

            let mut samples: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
            for inst in &instances {
                let cum = compute_cumulants(&compute_moments(inst)?)?;
                // values layout: [C40, C41, C42, C60, C61, C62, C63]
                samples.entry("c42_mag").or_default().push(cum.values[2]);
                samples.entry("c63_mag").or_default().push(cum.values[6]);
                let os = compute_order_stats(&to_polar(inst), DEFAULT_QUANTILES)?;
                // amplitude block is first; index q*3/4 is the 75%-ile
                samples.entry("os_amp_p75").or_default().push(os.values[DEFAULT_QUANTILES * 3 / 4]);
            }
            for (feature, xs) in samples {
                let mean = xs.iter().sum::<f64>() / xs.len() as f64;
                let var =
                    xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
                rows.push(StabilityRow {
                    modulation: m,
                    knob,
                    knob_value: v,
                    feature: feature.to_string(),
                    mean,
                    std: var.sqrt(),
                });
            }
        }
    }
    Ok(rows)
}

pub fn stability_csv(rows: &[StabilityRow]) -> String {
    let mut out = String::from("modulation,knob,knob_value,feature,mean,std\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.modulation,
            r.knob.name(),
            r.knob_value,
            r.feature,
            r.mean,
            r.std
        ));
    }
    out
}

/// Sweep shingle length and dictionary size over the base experiment,
/// returning one combined table (each row's dictionary column carries the
/// (l, K) pair). Families are restricted to local-feature ones.
pub fn parameter_sweep(
    base: &ExperimentConfig,
    ls: &[usize],
    ks: &[usize],
    out_dir: &Path,
    cache_dir: &Path,
) -> Result<ResultTable> {
    let mut combined: Option<ResultTable> = None;
    for &l in ls {
        for &k in ks {
            let mut config = base.clone();
            config.id = format!("{}-l{}-K{}", base.id, l, k);
            config.dictionary.l = l;
            config.dictionary.k = k;
            config.families.retain(|f| matches!(f, FeatureTag::Fv | FeatureTag::FvHoc));
            if config.families.is_empty() {
                return Err(Error::ConfigError(
                    "parameter sweep needs a local feature family".into(),
                ));
            }
            let table = run_experiment(&config, &out_dir.join(&config.id), cache_dir)?;
            match &mut combined {
                None => combined = Some(table),
                Some(acc) => {
                    acc.rows.extend(table.rows);
                    acc.confusions.extend(table.confusions);
                }
            }
        }
    }
    let combined = combined.ok_or_else(|| Error::ConfigError("empty sweep grid".into()))?;
    fs::create_dir_all(out_dir)?;
    fs::write(out_dir.join("sweep.csv"), combined.to_csv())?;
    Ok(combined)
}
