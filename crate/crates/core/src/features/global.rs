//! Global feature families: normalized high-order cumulants and order
//! statistics. Both are permutation-invariant summaries of the sample
//! distribution within an instance.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::iq::{IqInstance, PolarSeries};

/// Moment orders (k, v) needed by the fourth- and sixth-order cumulants.
pub const MOMENT_ORDERS: [(u32, u32); 9] =
    [(2, 0), (2, 1), (4, 0), (4, 1), (4, 2), (6, 0), (6, 1), (6, 2), (6, 3)];

/// Empirical complex moments M_kv = mean of x^(k−v) · conj(x)^v.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentSet {
    pub m20: Complex64,
    pub m21: Complex64,
    pub m40: Complex64,
    pub m41: Complex64,
    pub m42: Complex64,
    pub m60: Complex64,
    pub m61: Complex64,
    pub m62: Complex64,
    pub m63: Complex64,
}

impl MomentSet {
    pub fn get(&self, k: u32, v: u32) -> Option<Complex64> {
        match (k, v) {
            (2, 0) => Some(self.m20),
            (2, 1) => Some(self.m21),
            (4, 0) => Some(self.m40),
            (4, 1) => Some(self.m41),
            (4, 2) => Some(self.m42),
            (6, 0) => Some(self.m60),
            (6, 1) => Some(self.m61),
            (6, 2) => Some(self.m62),
            (6, 3) => Some(self.m63),
            _ => None,
        }
    }
}

/// Compute the empirical moments of an instance (biased 1/n estimators).
pub fn compute_moments(instance: &IqInstance) -> Result<MomentSet> {
    if instance.is_empty() {
        return Err(Error::EmptyInstance);
    }
    let n = instance.len() as f64;
    let mut acc = [Complex64::new(0.0, 0.0); 9];
    for x in instance.iter_complex() {
        let c = x.conj();
        let x2 = x * x;
        let x3 = x2 * x;
        let c2 = c * c;
        let c3 = c2 * c;
        acc[0] += x2; // M20
        acc[1] += x * c; // M21 = |x|^2
        acc[2] += x2 * x2; // M40
        acc[3] += x3 * c; // M41
        acc[4] += x2 * c2; // M42
        acc[5] += x3 * x3; // M60
        acc[6] += x3 * x2 * c; // M61
        acc[7] += x3 * x * c2; // M62
        acc[8] += x3 * c3; // M63
    }
    for a in &mut acc {
        *a /= n;
    }
    Ok(MomentSet {
        m20: acc[0],
        m21: acc[1],
        m40: acc[2],
        m41: acc[3],
        m42: acc[4],
        m60: acc[5],
        m61: acc[6],
        m62: acc[7],
        m63: acc[8],
    })
}

/// The 7 normalized cumulant magnitudes, in order
/// |Ĉ40|, |Ĉ41|, |Ĉ42|, |Ĉ60|, |Ĉ61|, |Ĉ62|, |Ĉ63|.
#[derive(Debug, Clone, PartialEq)]
pub struct CumulantVector {
    pub values: [f64; 7],
}

/// Raw (unnormalized, complex) cumulants from moments, using the
/// even-moment identities for symmetric constellations (odd moments
/// vanish). M22 = conj(M20) and M43 = conj(M41) by conjugation symmetry.
pub fn raw_cumulants(m: &MomentSet) -> [Complex64; 7] {
    let m20 = m.m20;
    let m21 = m.m21;
    let m22 = m.m20.conj();
    let m40 = m.m40;
    let m41 = m.m41;
    let m42 = m.m42;
    let m43 = m.m41.conj();
    let c40 = m.m40 - 3.0 * m20 * m20;
    let c41 = m.m41 - 3.0 * m20 * m21;
    let c42 = m.m42 - m20 * m22 - 2.0 * m21 * m21;
    let c60 = m.m60 - 15.0 * m20 * m40 + 30.0 * m20 * m20 * m20;
    let c61 = m.m61 - 10.0 * m20 * m41 - 5.0 * m21 * m40 + 30.0 * m20 * m20 * m21;
    let c62 = m.m62 - 6.0 * m20 * m42 - 8.0 * m21 * m41 - m22 * m40
        + 6.0 * m20 * m20 * m22
        + 24.0 * m20 * m21 * m21;
    let c63 = m.m63 - 3.0 * m20 * m43 - 9.0 * m21 * m42 - 3.0 * m22 * m41
        + 18.0 * m20 * m21 * m22
        + 12.0 * m21 * m21 * m21;
    [c40, c41, c42, c60, c61, c62, c63]
}

const C21_TOLERANCE: f64 = 1e-300;

/// Normalize cumulants by C21^(k/2) and reduce to magnitudes.
pub fn compute_cumulants(m: &MomentSet) -> Result<CumulantVector> {
    let c21 = m.m21.re;
    if !(c21 > C21_TOLERANCE) {
        return Err(Error::DegenerateSignal);
    }
    let raw = raw_cumulants(m);
    let n4 = c21 * c21;
    let n6 = n4 * c21;
    let values = [
        (raw[0] / n4).norm(),
        (raw[1] / n4).norm(),
        (raw[2] / n4).norm(),
        (raw[3] / n6).norm(),
        (raw[4] / n6).norm(),
        (raw[5] / n6).norm(),
        (raw[6] / n6).norm(),
    ];
    Ok(CumulantVector { values })
}

/// HOC features straight from an instance.
pub fn hoc_features(instance: &IqInstance) -> Result<CumulantVector> {
    compute_cumulants(&compute_moments(instance)?)
}

/// q amplitude quantiles followed by q phase quantiles.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderStatVector {
    pub q: usize,
    pub values: Vec<f64>,
}

/// Default quantile count per series.
pub const DEFAULT_QUANTILES: usize = 32;

/// Evenly spaced quantiles of a series, linear interpolation between
/// order statistics.
fn quantiles(series: &[f64], q: usize) -> Vec<f64> {
    let mut sorted = series.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len();
    (0..q)
        .map(|j| {
            let pos = j as f64 / (q - 1) as f64 * (n - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            let frac = pos - lo as f64;
            sorted[lo] * (1.0 - frac) + sorted[hi] * frac
        })
        .collect()
}

/// Order-statistic features: sorts amplitude and phase independently and
/// emits q quantiles per series.
pub fn compute_order_stats(polar: &PolarSeries, q: usize) -> Result<OrderStatVector> {
    let n = polar.len();
    if q < 2 || n < 2 {
        return Err(Error::TooFewSamples { need: 2, got: n.min(q) });
    }
    let mut values = quantiles(&polar.amplitude, q);
    values.extend(quantiles(&polar.phase, q));
    Ok(OrderStatVector { q, values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::iq::{to_polar, InstanceMeta, IqSample, Modulation, Source};
    use crate::sim::{make_constellation, SimConfig};
    use approx::assert_relative_eq;

    fn meta() -> InstanceMeta {
        InstanceMeta {
            modulation: Modulation::Unknown,
            snr_db: f64::INFINITY,
            overlap_pct: 100.0,
            missing_symbols: 0,
            rotation_rad: 0.0,
            source: Source::Simulated,
        }
    }

    fn instance(samples: Vec<Complex64>) -> IqInstance {
        IqInstance::new(samples.into_iter().map(IqSample::from).collect(), meta()).unwrap()
    }

    // ---- independent brute-force oracle: joint cumulants via set partitions

    fn partitions(n: usize) -> Vec<Vec<Vec<usize>>> {
        if n == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for p in partitions(n - 1) {
            let first = n - 1;
            let mut alone = p.clone();
            alone.push(vec![first]);
            out.push(alone);
            for i in 0..p.len() {
                let mut joined = p.clone();
                joined[i].push(first);
                out.push(joined);
            }
        }
        out
    }

    /// Joint cumulant of (x repeated k−v times, conj(x) repeated v times)
    /// over the empirical distribution, via the partition formula.
    fn brute_cumulant(samples: &[Complex64], k: usize, v: usize) -> Complex64 {
        let conj_flags: Vec<bool> = (0..k).map(|i| i >= k - v).collect();
        let n = samples.len() as f64;
        let mut total = Complex64::new(0.0, 0.0);
        for p in partitions(k) {
            let m = p.len();
            let mut coef = if m % 2 == 1 { 1.0 } else { -1.0 };
            for f in 1..m {
                coef *= f as f64;
            }
            let mut prod = Complex64::new(1.0, 0.0);
            for block in &p {
                let mut mean = Complex64::new(0.0, 0.0);
                for &s in samples {
                    let mut term = Complex64::new(1.0, 0.0);
                    for &i in block {
                        term *= if conj_flags[i] { s.conj() } else { s };
                    }
                    mean += term;
                }
                prod *= mean / n;
            }
            total += coef * prod;
        }
        total
    }

    #[test]
    fn constant_instance_moments() {
        let m = compute_moments(&instance(vec![Complex64::new(1.0, 0.0); 8])).unwrap();
        assert_relative_eq!(m.m21.re, 1.0);
        assert_relative_eq!(m.m20.re, 1.0);
        assert_relative_eq!(m.m42.re, 1.0);
    }

    #[test]
    fn constant_2i_moments() {
        let m = compute_moments(&instance(vec![Complex64::new(0.0, 2.0); 8])).unwrap();
        assert_relative_eq!(m.m21.re, 4.0);
        assert_relative_eq!(m.m20.re, -4.0);
        assert_relative_eq!(m.m42.re, 16.0);
    }

    #[test]
    fn qpsk_m20_is_zero() {
        let pts = make_constellation(Modulation::Qpsk, 0.0).unwrap().points;
        let m = compute_moments(&instance(pts)).unwrap();
        assert!(m.m20.norm() < 1e-12);
    }

    #[test]
    fn constant_signal_c42_is_minus_two() {
        let m = compute_moments(&instance(vec![Complex64::new(1.0, 0.0); 16])).unwrap();
        let raw = raw_cumulants(&m);
        assert_relative_eq!(raw[2].re, -2.0, epsilon = 1e-12);
        let c = compute_cumulants(&m).unwrap();
        assert_relative_eq!(c.values[2], 2.0, epsilon = 1e-12);
    }

    #[test]
    fn qpsk_c42_magnitude_is_one() {
        let pts = make_constellation(Modulation::Qpsk, 0.0).unwrap().points;
        let c = hoc_features(&instance(pts)).unwrap();
        assert_relative_eq!(c.values[2], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn qam16_c42_magnitude() {
        // brute force over the 16 equiprobable symbols: M42 = 1.32,
        // M20 = 0, M21 = 1, so C42 = -0.68.
        let pts = make_constellation(Modulation::Qam16, 0.0).unwrap().points;
        let c = hoc_features(&instance(pts)).unwrap();
        assert_relative_eq!(c.values[2], 0.68, epsilon = 1e-12);
    }

    #[test]
    fn closed_forms_match_partition_oracle_on_symmetric_data() {
        // Symmetrized samples have exactly vanishing odd moments, the
        // regime the even-moment identities assume.
        let mut cfg = SimConfig::new(Modulation::Qam16, 15.0, 64, 77);
        cfg.samples_per_symbol = 1;
        let base: Vec<Complex64> =
            crate::sim::generate_instance(&cfg).unwrap().iter_complex().collect();
        let mut samples = base.clone();
        samples.extend(base.iter().map(|s| -s));

        let m = compute_moments(&instance(samples.clone())).unwrap();
        let raw = raw_cumulants(&m);
        let expected: Vec<Complex64> = [(4, 0), (4, 1), (4, 2), (6, 0), (6, 1), (6, 2), (6, 3)]
            .iter()
            .map(|&(k, v)| brute_cumulant(&samples, k, v))
            .collect();
        for (got, want) in raw.iter().zip(&expected) {
            assert!(
                (got - want).norm() < 1e-9 * (1.0 + want.norm()),
                "closed form {got} vs oracle {want}"
            );
        }
    }

    #[test]
    fn all_zero_signal_is_degenerate() {
        let m = compute_moments(&instance(vec![Complex64::new(0.0, 0.0); 8])).unwrap();
        assert!(matches!(compute_cumulants(&m), Err(Error::DegenerateSignal)));
    }

    #[test]
    fn cumulants_scale_invariant() {
        let mut cfg = SimConfig::new(Modulation::Qam64, 12.0, 256, 3);
        cfg.samples_per_symbol = 1;
        let base: Vec<Complex64> =
            crate::sim::generate_instance(&cfg).unwrap().iter_complex().collect();
        let a = hoc_features(&instance(base.clone())).unwrap();
        let scaled: Vec<Complex64> = base.iter().map(|s| s * 37.5).collect();
        let b = hoc_features(&instance(scaled)).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            assert_relative_eq!(x, y, epsilon = 1e-6, max_relative = 1e-6);
        }
    }

    #[test]
    fn c42_magnitude_rotation_invariant() {
        let mut cfg = SimConfig::new(Modulation::Qam16, 10.0, 256, 9);
        cfg.samples_per_symbol = 1;
        let base: Vec<Complex64> =
            crate::sim::generate_instance(&cfg).unwrap().iter_complex().collect();
        let a = hoc_features(&instance(base.clone())).unwrap();
        let rot = Complex64::from_polar(1.0, 1.234);
        let rotated: Vec<Complex64> = base.iter().map(|s| s * rot).collect();
        let b = hoc_features(&instance(rotated)).unwrap();
        assert_relative_eq!(a.values[2], b.values[2], epsilon = 1e-9, max_relative = 1e-9);
    }

    #[test]
    fn order_stats_sorting_case() {
        let polar = PolarSeries { amplitude: vec![3.0, 1.0, 2.0], phase: vec![0.0, 0.0, 0.0] };
        let os = compute_order_stats(&polar, 3).unwrap();
        assert_eq!(&os.values[..3], &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn order_stats_constant_series() {
        let polar = PolarSeries { amplitude: vec![5.0; 10], phase: vec![0.25; 10] };
        let os = compute_order_stats(&polar, 4).unwrap();
        assert!(os.values[..4].iter().all(|&v| v == 5.0));
        assert!(os.values[4..].iter().all(|&v| v == 0.25));
    }

    #[test]
    fn order_stats_linear_interpolation() {
        let polar = PolarSeries { amplitude: vec![0.0, 10.0], phase: vec![0.0, 1.0] };
        let os = compute_order_stats(&polar, 3).unwrap();
        assert_eq!(&os.values[..3], &[0.0, 5.0, 10.0]);
    }

    #[test]
    fn order_stats_too_few_samples() {
        let polar = PolarSeries { amplitude: vec![1.0], phase: vec![0.0] };
        assert!(matches!(compute_order_stats(&polar, 2), Err(Error::TooFewSamples { .. })));
    }

    #[test]
    fn global_features_permutation_invariant() {
        let mut cfg = SimConfig::new(Modulation::Psk8, 8.0, 128, 21);
        cfg.samples_per_symbol = 1;
        let base: Vec<Complex64> =
            crate::sim::generate_instance(&cfg).unwrap().iter_complex().collect();
        let mut shuffled = base.clone();
        shuffled.reverse();
        shuffled.swap(3, 50);
        let a = hoc_features(&instance(base.clone())).unwrap();
        let b = hoc_features(&instance(shuffled.clone())).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            assert_relative_eq!(x, y, epsilon = 1e-12, max_relative = 1e-12);
        }
        let osa = compute_order_stats(&to_polar(&instance(base)), 16).unwrap();
        let osb = compute_order_stats(&to_polar(&instance(shuffled)), 16).unwrap();
        for (x, y) in osa.values.iter().zip(&osb.values) {
            assert_relative_eq!(x, y, epsilon = 1e-12);
        }
    }

    #[test]
    fn quantile_halves_non_decreasing() {
        let mut cfg = SimConfig::new(Modulation::Qam64, 5.0, 512, 2);
        cfg.samples_per_symbol = 1;
        let inst = crate::sim::generate_instance(&cfg).unwrap();
        let os = compute_order_stats(&to_polar(&inst), DEFAULT_QUANTILES).unwrap();
        let (amp, phase) = os.values.split_at(DEFAULT_QUANTILES);
        assert!(amp.windows(2).all(|w| w[0] <= w[1]));
        assert!(phase.windows(2).all(|w| w[0] <= w[1]));
    }
}
