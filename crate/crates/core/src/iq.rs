//! Core I/Q types, the amplitude/phase transform, and trace file ingestion.
//!
//! An *instance* is a fixed-length ordered sequence of complex baseband
//! samples treated as one classification example. Trace files are raw
//! little-endian interleaved `f32` pairs (I then Q per sample) with a
//! sidecar key-value manifest carrying the metadata.

use std::fmt;
use std::fs;
use std::io::{Read as _, Write as _};
use std::path::Path;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One complex baseband sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IqSample {
    pub i: f64,
    pub q: f64,
}

impl IqSample {
    pub fn new(i: f64, q: f64) -> Self {
        IqSample { i, q }
    }

    pub fn is_finite(&self) -> bool {
        self.i.is_finite() && self.q.is_finite()
    }

    pub fn to_complex(self) -> Complex64 {
        Complex64::new(self.i, self.q)
    }
}

impl From<Complex64> for IqSample {
    fn from(c: Complex64) -> Self {
        IqSample { i: c.re, q: c.im }
    }
}

/// Supported modulation schemes (plus `Unknown` for unlabeled traces).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Modulation {
    #[serde(rename = "QPSK")]
    Qpsk,
    #[serde(rename = "8PSK")]
    Psk8,
    #[serde(rename = "8QAM")]
    Qam8,
    #[serde(rename = "16QAM")]
    Qam16,
    #[serde(rename = "64QAM")]
    Qam64,
    #[serde(rename = "unknown")]
    Unknown,
}

impl Modulation {
    /// The five classifiable schemes, in canonical order.
    pub const ALL: [Modulation; 5] = [
        Modulation::Qpsk,
        Modulation::Psk8,
        Modulation::Qam8,
        Modulation::Qam16,
        Modulation::Qam64,
    ];

    /// Constellation order (number of symbols).
    pub fn order(&self) -> usize {
        match self {
            Modulation::Qpsk => 4,
            Modulation::Psk8 | Modulation::Qam8 => 8,
            Modulation::Qam16 => 16,
            Modulation::Qam64 => 64,
            Modulation::Unknown => 0,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Modulation::Qpsk => "QPSK",
            Modulation::Psk8 => "8PSK",
            Modulation::Qam8 => "8QAM",
            Modulation::Qam16 => "16QAM",
            Modulation::Qam64 => "64QAM",
            Modulation::Unknown => "unknown",
        }
    }
}

impl fmt::Display for Modulation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Modulation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().replace('-', "").as_str() {
            "QPSK" | "4PSK" => Ok(Modulation::Qpsk),
            "8PSK" | "PSK8" => Ok(Modulation::Psk8),
            "8QAM" | "QAM8" => Ok(Modulation::Qam8),
            "16QAM" | "QAM16" => Ok(Modulation::Qam16),
            "64QAM" | "QAM64" => Ok(Modulation::Qam64),
            "UNKNOWN" => Ok(Modulation::Unknown),
            other => Err(Error::UnsupportedModulation(other.to_string())),
        }
    }
}

/// Where an instance came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Source {
    Simulated,
    File,
}

/// Metadata attached to every instance: the label and the scan conditions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InstanceMeta {
    pub modulation: Modulation,
    /// Es/N0 in dB; `f64::INFINITY` means noiseless.
    pub snr_db: f64,
    /// Fraction of the transmitter bandwidth covered by the scan, in (0, 100].
    pub overlap_pct: f64,
    pub missing_symbols: usize,
    /// Constellation rotation in [0, 2π).
    pub rotation_rad: f64,
    pub source: Source,
}

impl InstanceMeta {
    pub fn unknown() -> Self {
        InstanceMeta {
            modulation: Modulation::Unknown,
            snr_db: f64::NAN,
            overlap_pct: 100.0,
            missing_symbols: 0,
            rotation_rad: 0.0,
            source: Source::File,
        }
    }
}

/// An ordered sequence of I/Q samples with metadata. Immutable after
/// construction; sample order is preserved by every downstream operation
/// except explicitly-sorting order-statistic extraction.
#[derive(Debug, Clone, PartialEq)]
pub struct IqInstance {
    samples: Vec<IqSample>,
    pub meta: InstanceMeta,
}

impl IqInstance {
    pub fn new(samples: Vec<IqSample>, meta: InstanceMeta) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyInstance);
        }
        if let Some(idx) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::NonFiniteSample(idx));
        }
        Ok(IqInstance { samples, meta })
    }

    pub fn samples(&self) -> &[IqSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn iter_complex(&self) -> impl Iterator<Item = Complex64> + '_ {
        self.samples.iter().map(|s| s.to_complex())
    }
}

/// Paired amplitude and phase sequences derived from an instance.
/// Phase is the four-quadrant arctangent in (−π, π].
#[derive(Debug, Clone, PartialEq)]
pub struct PolarSeries {
    pub amplitude: Vec<f64>,
    pub phase: Vec<f64>,
}

impl PolarSeries {
    pub fn len(&self) -> usize {
        self.amplitude.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amplitude.is_empty()
    }
}

/// Transform an instance into (amplitude, phase) series, order preserved.
///
/// The zero sample maps to (A=0, φ=0); `atan2` is undefined there.
pub fn to_polar(instance: &IqInstance) -> PolarSeries {
    let n = instance.len();
    let mut amplitude = Vec::with_capacity(n);
    let mut phase = Vec::with_capacity(n);
    for s in instance.samples() {
        amplitude.push(s.i.hypot(s.q));
        if s.i == 0.0 && s.q == 0.0 {
            phase.push(0.0);
        } else {
            // atan2 returns [-π, π]; fold -π onto π to keep (−π, π].
            let mut p = s.q.atan2(s.i);
            if p <= -std::f64::consts::PI {
                p = std::f64::consts::PI;
            }
            phase.push(p);
        }
    }
    PolarSeries { amplitude, phase }
}

/// Sidecar description of a raw trace file: instance segmentation length
/// plus the metadata applied to every instance cut from it.
#[derive(Debug, Clone, PartialEq)]
pub struct FormatSpec {
    pub instance_length: usize,
    pub meta: InstanceMeta,
}

impl FormatSpec {
    /// Parse the sidecar manifest text format (`key value` per line,
    /// `#` comments allowed).
    pub fn parse(text: &str) -> Result<Self> {
        let mut instance_length = None;
        let mut meta = InstanceMeta::unknown();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once(char::is_whitespace)
                .ok_or_else(|| Error::FormatError(format!("sidecar line {}: no value", lineno + 1)))?;
            let value = value.trim();
            let bad = |what: &str| Error::FormatError(format!("sidecar {key}: {what}: {value}"));
            match key {
                "instance_length" => {
                    instance_length = Some(value.parse().map_err(|_| bad("not an integer"))?)
                }
                "modulation" => meta.modulation = value.parse()?,
                "snr_db" => meta.snr_db = value.parse().map_err(|_| bad("not a number"))?,
                "overlap_pct" => meta.overlap_pct = value.parse().map_err(|_| bad("not a number"))?,
                "missing_symbols" => {
                    meta.missing_symbols = value.parse().map_err(|_| bad("not an integer"))?
                }
                "rotation_rad" => meta.rotation_rad = value.parse().map_err(|_| bad("not a number"))?,
                _ => return Err(Error::FormatError(format!("unknown sidecar key: {key}"))),
            }
        }
        let instance_length =
            instance_length.ok_or_else(|| Error::FormatError("sidecar missing instance_length".into()))?;
        if instance_length == 0 {
            return Err(Error::FormatError("instance_length must be positive".into()));
        }
        Ok(FormatSpec { instance_length, meta })
    }

    pub fn to_text(&self) -> String {
        format!(
            "instance_length {}\nmodulation {}\nsnr_db {}\noverlap_pct {}\nmissing_symbols {}\nrotation_rad {}\n",
            self.instance_length,
            self.meta.modulation,
            self.meta.snr_db,
            self.meta.overlap_pct,
            self.meta.missing_symbols,
            self.meta.rotation_rad,
        )
    }
}

/// Decode raw little-endian interleaved f32 pairs into samples.
pub fn decode_samples(bytes: &[u8]) -> Result<Vec<IqSample>> {
    if bytes.len() % 8 != 0 {
        return Err(Error::FormatError(format!(
            "byte length {} is not a whole number of f32 I/Q pairs",
            bytes.len()
        )));
    }
    let mut samples = Vec::with_capacity(bytes.len() / 8);
    for pair in bytes.chunks_exact(8) {
        let i = f32::from_le_bytes([pair[0], pair[1], pair[2], pair[3]]) as f64;
        let q = f32::from_le_bytes([pair[4], pair[5], pair[6], pair[7]]) as f64;
        samples.push(IqSample::new(i, q));
    }
    Ok(samples)
}

/// Encode samples as little-endian interleaved f32 pairs.
pub fn encode_samples(samples: &[IqSample]) -> Vec<u8> {
    let mut bytes = Vec::with_capacity(samples.len() * 8);
    for s in samples {
        bytes.extend_from_slice(&(s.i as f32).to_le_bytes());
        bytes.extend_from_slice(&(s.q as f32).to_le_bytes());
    }
    bytes
}

/// Segment a decoded sample stream into instances of `spec.instance_length`.
/// The trailing partial window is dropped, never zero-padded.
pub fn segment_samples(samples: Vec<IqSample>, spec: &FormatSpec) -> Result<Vec<IqInstance>> {
    let n = spec.instance_length;
    if samples.len() < n {
        return Err(Error::TruncatedFile);
    }
    samples
        .chunks_exact(n)
        .map(|chunk| IqInstance::new(chunk.to_vec(), spec.meta))
        .collect()
}

/// Read a raw I/Q trace file and segment it into instances.
pub fn read_iq_file(path: &Path, spec: &FormatSpec) -> Result<Vec<IqInstance>> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    segment_samples(decode_samples(&bytes)?, spec)
}

/// Read a trace file using the sidecar manifest found at `<path>.meta`.
pub fn read_iq_file_with_sidecar(path: &Path) -> Result<Vec<IqInstance>> {
    let sidecar = path.with_extension(format!(
        "{}.meta",
        path.extension().and_then(|e| e.to_str()).unwrap_or("iq")
    ));
    let spec = FormatSpec::parse(&fs::read_to_string(&sidecar)?)?;
    read_iq_file(path, &spec)
}

/// Write samples as a raw trace file plus its sidecar manifest.
pub fn write_iq_file(path: &Path, samples: &[IqSample], spec: &FormatSpec) -> Result<()> {
    fs::File::create(path)?.write_all(&encode_samples(samples))?;
    let sidecar = path.with_extension(format!(
        "{}.meta",
        path.extension().and_then(|e| e.to_str()).unwrap_or("iq")
    ));
    fs::write(sidecar, spec.to_text())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn meta() -> InstanceMeta {
        InstanceMeta {
            modulation: Modulation::Qpsk,
            snr_db: 10.0,
            overlap_pct: 100.0,
            missing_symbols: 0,
            rotation_rad: 0.0,
            source: Source::Simulated,
        }
    }

    fn instance(pairs: &[(f64, f64)]) -> IqInstance {
        IqInstance::new(pairs.iter().map(|&(i, q)| IqSample::new(i, q)).collect(), meta()).unwrap()
    }

    #[test]
    fn polar_identity_case() {
        let p = to_polar(&instance(&[(1.0, 0.0)]));
        assert_relative_eq!(p.amplitude[0], 1.0);
        assert_relative_eq!(p.phase[0], 0.0);
    }

    #[test]
    fn polar_axis_case() {
        let p = to_polar(&instance(&[(0.0, 1.0)]));
        assert_relative_eq!(p.amplitude[0], 1.0);
        assert_relative_eq!(p.phase[0], PI / 2.0);
    }

    #[test]
    fn polar_345_triangle() {
        let p = to_polar(&instance(&[(3.0, 4.0)]));
        assert_relative_eq!(p.amplitude[0], 5.0);
        assert_relative_eq!(p.phase[0], (4.0f64 / 3.0).atan());
    }

    #[test]
    fn polar_zero_sample_convention() {
        let p = to_polar(&instance(&[(0.0, 0.0)]));
        assert_eq!(p.amplitude[0], 0.0);
        assert_eq!(p.phase[0], 0.0);
    }

    #[test]
    fn polar_negative_real_axis_maps_to_plus_pi() {
        let p = to_polar(&instance(&[(-1.0, 0.0)]));
        assert_eq!(p.phase[0], PI);
        let p = to_polar(&instance(&[(-1.0, -0.0)]));
        assert_eq!(p.phase[0], PI);
    }

    #[test]
    fn empty_instance_rejected() {
        assert!(matches!(IqInstance::new(vec![], meta()), Err(Error::EmptyInstance)));
    }

    #[test]
    fn nonfinite_sample_rejected() {
        let samples = vec![IqSample::new(1.0, 0.0), IqSample::new(f64::NAN, 0.0)];
        assert!(matches!(IqInstance::new(samples, meta()), Err(Error::NonFiniteSample(1))));
    }

    #[test]
    fn segmentation_exact_division() {
        let samples: Vec<IqSample> = (0..256).map(|k| IqSample::new(k as f64, 0.0)).collect();
        let spec = FormatSpec { instance_length: 128, meta: meta() };
        let instances = segment_samples(samples, &spec).unwrap();
        assert_eq!(instances.len(), 2);
        assert!(instances.iter().all(|x| x.len() == 128));
    }

    #[test]
    fn segmentation_drops_trailing_partial() {
        let samples: Vec<IqSample> = (0..300).map(|k| IqSample::new(k as f64, 1.0)).collect();
        let spec = FormatSpec { instance_length: 128, meta: meta() };
        let instances = segment_samples(samples, &spec).unwrap();
        assert_eq!(instances.len(), 2);
        assert_eq!(instances[1].samples()[127].i, 255.0);
    }

    #[test]
    fn empty_file_is_truncated() {
        let spec = FormatSpec { instance_length: 128, meta: meta() };
        assert!(matches!(segment_samples(vec![], &spec), Err(Error::TruncatedFile)));
    }

    #[test]
    fn file_roundtrip_with_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trace.iq");
        let samples: Vec<IqSample> =
            (0..256).map(|k| IqSample::new(k as f64 / 256.0, -(k as f64) / 512.0)).collect();
        let spec = FormatSpec { instance_length: 128, meta: meta() };
        write_iq_file(&path, &samples, &spec).unwrap();
        let instances = read_iq_file_with_sidecar(&path).unwrap();
        assert_eq!(instances.len(), 2);
        // the sidecar does not carry provenance; reading marks it File
        assert_eq!(instances[0].meta, InstanceMeta { source: Source::File, ..meta() });
        // f32 storage is exact for these values
        assert_eq!(instances[1].samples()[0].i, 128.0 / 256.0);
    }

    #[test]
    fn sidecar_parse_unknown_label() {
        let spec = FormatSpec::parse("instance_length 64\nmodulation unknown\n").unwrap();
        assert_eq!(spec.meta.modulation, Modulation::Unknown);
        assert_eq!(spec.instance_length, 64);
    }

    #[test]
    fn odd_byte_count_is_format_error() {
        assert!(matches!(decode_samples(&[0u8; 12]), Err(Error::FormatError(_))));
    }
}

#[cfg(test)]
mod proptests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        // amplitude * (cos phi, sin phi) reconstructs the sample
        #[test]
        fn polar_roundtrip(pairs in proptest::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 1..64)) {
            let samples: Vec<IqSample> =
                pairs.iter().map(|&(i, q)| IqSample { i, q }).collect();
            let inst = IqInstance::new(samples.clone(), InstanceMeta::unknown()).unwrap();
            let polar = to_polar(&inst);
            for (k, s) in samples.iter().enumerate() {
                let (a, p) = (polar.amplitude[k], polar.phase[k]);
                prop_assert!((a * p.cos() - s.i).abs() <= 1e-9 * a.max(1.0));
                prop_assert!((a * p.sin() - s.q).abs() <= 1e-9 * a.max(1.0));
                prop_assert!(a >= 0.0);
                prop_assert!(p > -std::f64::consts::PI && p <= std::f64::consts::PI);
            }
        }

        // f32 little-endian interleaved encoding is lossless for f32 inputs
        #[test]
        fn sample_codec_roundtrip(pairs in proptest::collection::vec((any::<f32>(), any::<f32>()), 1..64)) {
            let finite: Vec<IqSample> = pairs
                .iter()
                .filter(|(i, q)| i.is_finite() && q.is_finite())
                .map(|&(i, q)| IqSample { i: i as f64, q: q as f64 })
                .collect();
            prop_assume!(!finite.is_empty());
            let decoded = decode_samples(&encode_samples(&finite)).unwrap();
            prop_assert_eq!(decoded, finite);
        }
    }
}
