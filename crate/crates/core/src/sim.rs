//! Baseband simulator: labeled instances for five modulations under
//! controllable SNR, partial scan overlap, symbol bias and constellation
//! rotation.
//!
//! The chain is symbol draw → upsample → root-raised-cosine shaping →
//! AWGN → receiver low-pass (when the scan is partial). At
//! `samples_per_symbol = 1` pulse shaping is skipped so emitted samples
//! sit exactly on constellation points in the noiseless case.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::iq::{InstanceMeta, IqInstance, IqSample, Modulation, Source};

/// RRC roll-off used for pulse shaping.
pub const RRC_ROLLOFF: f64 = 0.35;
/// RRC span in symbols (taps = span * sps + 1).
pub const RRC_SPAN_SYMBOLS: usize = 10;
/// Tap count of the receiver partial-band low-pass filter.
pub const LOWPASS_TAPS: usize = 127;

/// A symbol set with unit average energy.
#[derive(Debug, Clone, PartialEq)]
pub struct Constellation {
    pub modulation: Modulation,
    pub points: Vec<Complex64>,
    pub rotation_rad: f64,
}

/// Build the symbol set for a modulation, rotated by `rotation_rad`.
///
/// M-PSK points are `e^{i(2πk/M + offset + rotation)}` (QPSK carries the
/// conventional π/4 offset). QAM sets are rectangular grids normalized to
/// unit average symbol energy; 8-QAM is the 4×2 rectangular set.
pub fn make_constellation(modulation: Modulation, rotation_rad: f64) -> Result<Constellation> {
    let raw: Vec<Complex64> = match modulation {
        Modulation::Qpsk => psk_points(4, PI / 4.0),
        Modulation::Psk8 => psk_points(8, 0.0),
        Modulation::Qam8 => {
            let mut pts = Vec::with_capacity(8);
            for &re in &[-3.0, -1.0, 1.0, 3.0] {
                for &im in &[-1.0, 1.0] {
                    pts.push(Complex64::new(re, im));
                }
            }
            pts
        }
        Modulation::Qam16 => qam_grid(4),
        Modulation::Qam64 => qam_grid(8),
        Modulation::Unknown => {
            return Err(Error::UnsupportedModulation("unknown".into()));
        }
    };
    let energy: f64 = raw.iter().map(|p| p.norm_sqr()).sum::<f64>() / raw.len() as f64;
    let scale = energy.sqrt().recip();
    let rot = Complex64::from_polar(1.0, rotation_rad);
    let points = raw.iter().map(|p| p * scale * rot).collect();
    Ok(Constellation { modulation, points, rotation_rad })
}

fn psk_points(m: usize, offset: f64) -> Vec<Complex64> {
    (0..m)
        .map(|k| Complex64::from_polar(1.0, 2.0 * PI * k as f64 / m as f64 + offset))
        .collect()
}

fn qam_grid(side: usize) -> Vec<Complex64> {
    let mut pts = Vec::with_capacity(side * side);
    for a in 0..side {
        for b in 0..side {
            let re = 2.0 * a as f64 - (side as f64 - 1.0);
            let im = 2.0 * b as f64 - (side as f64 - 1.0);
            pts.push(Complex64::new(re, im));
        }
    }
    pts
}

/// All knobs for one generated instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub modulation: Modulation,
    /// Es/N0 in dB; `f64::INFINITY` disables noise.
    pub snr_db: f64,
    pub overlap_pct: f64,
    pub missing_symbols: usize,
    /// Optional per-symbol draw probabilities; must sum to 1 and carry a
    /// zero entry for every removed symbol.
    pub symbol_weights: Option<Vec<f64>>,
    pub rotation_rad: f64,
    pub n_samples: usize,
    pub samples_per_symbol: usize,
    pub rng_seed: u64,
}

impl SimConfig {
    pub fn new(modulation: Modulation, snr_db: f64, n_samples: usize, rng_seed: u64) -> Self {
        SimConfig {
            modulation,
            snr_db,
            overlap_pct: 100.0,
            missing_symbols: 0,
            symbol_weights: None,
            rotation_rad: 0.0,
            n_samples,
            samples_per_symbol: 4,
            rng_seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let order = self.modulation.order();
        if order == 0 {
            return Err(Error::UnsupportedModulation(self.modulation.to_string()));
        }
        if !(self.overlap_pct > 0.0 && self.overlap_pct <= 100.0) {
            return Err(Error::ConfigError(format!("overlap_pct {} not in (0, 100]", self.overlap_pct)));
        }
        if self.missing_symbols >= order {
            return Err(Error::ConfigError(format!(
                "missing_symbols {} must be below the constellation order {order}",
                self.missing_symbols
            )));
        }
        if self.samples_per_symbol == 0 {
            return Err(Error::ConfigError("samples_per_symbol must be >= 1".into()));
        }
        if self.n_samples == 0 {
            return Err(Error::ConfigError("n_samples must be >= 1".into()));
        }
        if let Some(w) = &self.symbol_weights {
            if w.len() != order {
                return Err(Error::ConfigError(format!(
                    "symbol_weights has {} entries, constellation order is {order}",
                    w.len()
                )));
            }
            if w.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
                return Err(Error::ConfigError("symbol_weights entries must be in [0, 1]".into()));
            }
            let sum: f64 = w.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::ConfigError(format!("symbol_weights sums to {sum}, expected 1")));
            }
            let zeros = w.iter().filter(|&&p| p == 0.0).count();
            if zeros != self.missing_symbols {
                return Err(Error::ConfigError(format!(
                    "symbol_weights has {zeros} zero entries but missing_symbols is {}",
                    self.missing_symbols
                )));
            }
        }
        Ok(())
    }
}

/// Root-raised-cosine taps, unit tap energy.
pub fn rrc_taps(sps: usize, rolloff: f64, span_symbols: usize) -> Vec<f64> {
    let n = span_symbols * sps + 1;
    let half = (n - 1) as f64 / 2.0;
    let mut taps = Vec::with_capacity(n);
    for k in 0..n {
        let t = (k as f64 - half) / sps as f64; // time in symbols
        let tap = if t == 0.0 {
            1.0 + rolloff * (4.0 / PI - 1.0)
        } else if (t.abs() - 1.0 / (4.0 * rolloff)).abs() < 1e-12 {
            (rolloff / 2.0_f64.sqrt())
                * ((1.0 + 2.0 / PI) * (PI / (4.0 * rolloff)).sin()
                    + (1.0 - 2.0 / PI) * (PI / (4.0 * rolloff)).cos())
        } else {
            ((PI * t * (1.0 - rolloff)).sin()
                + 4.0 * rolloff * t * (PI * t * (1.0 + rolloff)).cos())
                / (PI * t * (1.0 - (4.0 * rolloff * t).powi(2)))
        };
        taps.push(tap);
    }
    let energy: f64 = taps.iter().map(|h| h * h).sum();
    let scale = energy.sqrt().recip();
    taps.iter().map(|h| h * scale).collect()
}

/// Windowed-sinc (Hamming) low-pass taps. `cutoff` is in cycles/sample,
/// in (0, 0.5); DC gain is normalized to 1.
pub fn lowpass_taps(cutoff: f64, n_taps: usize) -> Vec<f64> {
    assert!(cutoff > 0.0 && cutoff < 0.5, "cutoff must be in (0, 0.5)");
    assert!(n_taps % 2 == 1, "tap count must be odd for integer group delay");
    let half = (n_taps - 1) as f64 / 2.0;
    let mut taps = Vec::with_capacity(n_taps);
    for k in 0..n_taps {
        let t = k as f64 - half;
        let sinc = if t == 0.0 {
            2.0 * cutoff
        } else {
            (2.0 * PI * cutoff * t).sin() / (PI * t)
        };
        let window = 0.54 - 0.46 * (2.0 * PI * k as f64 / (n_taps - 1) as f64).cos();
        taps.push(sinc * window);
    }
    let dc: f64 = taps.iter().sum();
    taps.iter().map(|h| h / dc).collect()
}

/// "Same"-mode FIR convolution with real taps, group delay compensated.
fn fir_same(signal: &[Complex64], taps: &[f64]) -> Vec<Complex64> {
    let delay = (taps.len() - 1) / 2;
    let n = signal.len();
    let mut out = vec![Complex64::new(0.0, 0.0); n];
    for (k, o) in out.iter_mut().enumerate() {
        let mut acc = Complex64::new(0.0, 0.0);
        // y[k] = sum_j h[j] x[k + delay - j]
        let base = k + delay;
        let j_lo = base.saturating_sub(n - 1);
        let j_hi = taps.len().min(base + 1);
        for j in j_lo..j_hi {
            acc += taps[j] * signal[base - j];
        }
        *o = acc;
    }
    out
}

/// One-sided transmitter bandwidth in cycles/sample: the symbol-rate
/// (Nyquist) band Rs/2. The RRC roll-off extends beyond this edge, so a
/// partial-overlap cutoff below 100% always removes real signal energy.
fn signal_bandwidth(sps: usize) -> f64 {
    1.0 / (2.0 * sps as f64)
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

/// Deterministic per-instance seed derivation.
pub fn instance_seed(base_seed: u64, index: u64) -> u64 {
    splitmix64(base_seed ^ splitmix64(index.wrapping_add(0x1234_5678_9abc_def0)))
}

/// Generate one labeled instance. Deterministic given `config.rng_seed`.
pub fn generate_instance(config: &SimConfig) -> Result<IqInstance> {
    config.validate()?;
    let constellation = make_constellation(config.modulation, config.rotation_rad)?;
    let order = constellation.points.len();

    // Independent sub-streams so symbol draws are identical across noise
    // settings with the same seed.
    let mut root = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let mut missing_rng = ChaCha8Rng::seed_from_u64(root.gen());
    let mut symbol_rng = ChaCha8Rng::seed_from_u64(root.gen());
    let mut noise_rng = ChaCha8Rng::seed_from_u64(root.gen());

    // Draw probabilities: explicit weights, or uniform over the symbols
    // that survive random missing-symbol removal.
    let weights: Vec<f64> = match &config.symbol_weights {
        Some(w) => w.clone(),
        None => {
            let mut alive = vec![true; order];
            let mut removed = 0;
            while removed < config.missing_symbols {
                let k = missing_rng.gen_range(0..order);
                if alive[k] {
                    alive[k] = false;
                    removed += 1;
                }
            }
            let p = 1.0 / (order - config.missing_symbols) as f64;
            alive.iter().map(|&a| if a { p } else { 0.0 }).collect()
        }
    };
    let cdf: Vec<f64> = weights
        .iter()
        .scan(0.0, |acc, &p| {
            *acc += p;
            Some(*acc)
        })
        .collect();

    let sps = config.samples_per_symbol;
    // Lead/tail symbols cover the RRC and low-pass transients.
    let filter_margin = RRC_SPAN_SYMBOLS * sps / 2 + LOWPASS_TAPS / 2;
    let lead_syms = filter_margin / sps + 1;
    let n_syms = config.n_samples.div_ceil(sps) + 2 * lead_syms;

    let mut shaped: Vec<Complex64> = Vec::with_capacity(n_syms * sps);
    for _ in 0..n_syms {
        let u: f64 = symbol_rng.gen();
        let idx = cdf.partition_point(|&c| c < u).min(order - 1);
        shaped.push(constellation.points[idx]);
        for _ in 1..sps {
            shaped.push(Complex64::new(0.0, 0.0));
        }
    }
    if sps > 1 {
        let taps = rrc_taps(sps, RRC_ROLLOFF, RRC_SPAN_SYMBOLS);
        shaped = fir_same(&shaped, &taps);
        // unit-energy taps leave 1/sps average power; restore unit power
        let scale = (sps as f64).sqrt();
        for s in &mut shaped {
            *s *= scale;
        }
    }

    let start = lead_syms * sps;
    let end = start + config.n_samples;

    if config.snr_db.is_finite() {
        let noise_power = 10f64.powf(-config.snr_db / 10.0);
        let sigma = (noise_power / 2.0).sqrt();
        for s in &mut shaped {
            let re: f64 = gauss(&mut noise_rng);
            let im: f64 = gauss(&mut noise_rng);
            *s += Complex64::new(sigma * re, sigma * im);
        }
    }

    if config.overlap_pct < 100.0 {
        let cutoff = (config.overlap_pct / 100.0) * signal_bandwidth(sps);
        let taps = lowpass_taps(cutoff, LOWPASS_TAPS);
        shaped = fir_same(&shaped, &taps);
    }

    let samples: Vec<IqSample> = shaped[start..end].iter().map(|&c| IqSample::from(c)).collect();
    let meta = InstanceMeta {
        modulation: config.modulation,
        snr_db: config.snr_db,
        overlap_pct: config.overlap_pct,
        missing_symbols: config.missing_symbols,
        rotation_rad: config.rotation_rad,
        source: Source::Simulated,
    };
    IqInstance::new(samples, meta)
}

/// Standard normal via Box-Muller (two uniforms per call pair).
fn gauss<R: Rng>(rng: &mut R) -> f64 {
    // open interval to keep ln finite
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
}
