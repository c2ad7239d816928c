//! Acceptance suite: one test per criterion, each printing a single
//! pass/fail line. Heavy intermediates (datasets, dictionaries, feature
//! tables) are content-addressed under the shared target tmpdir, so the
//! universal dictionary is trained once per test run and reused.

use std::path::PathBuf;
use std::time::Instant;

use modrec::features::global::{compute_moments, hoc_features, raw_cumulants};
use modrec::features::local::{
    encode_instance, encode_shingle, posterior, train_dictionary, GmmDictionary, Provenance,
    SeriesTag,
};
use modrec::features::FeatureTag;
use modrec::harness::{
    cached_dictionary_pair, diagnostic_feature_stability, run_experiment, ClassifierConfig,
    DictPolicy, DictionaryConfig, ExperimentConfig, GridConfig, Knob, ResultTable,
    DICT_ROTATIONS_RAD,
};
use modrec::iq::{to_polar, InstanceMeta, IqInstance, IqSample, Modulation, PolarSeries, Source};
use modrec::sim::{generate_instance, SimConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn tmp(sub: &str) -> PathBuf {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance").join(sub);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn cache() -> PathBuf {
    tmp("cache")
}

fn report(criterion: &str, pass: bool, details: &str) {
    println!("acceptance [{criterion}]: {} ({details})", if pass { "pass" } else { "FAIL" });
    assert!(pass, "acceptance [{criterion}] failed: {details}");
}

fn grid(
    snrs_db: &[f64],
    overlaps_pct: &[f64],
    missing: &[usize],
    train: usize,
    test: usize,
) -> GridConfig {
    GridConfig {
        modulations: Modulation::ALL.to_vec(),
        snrs_db: snrs_db.to_vec(),
        overlaps_pct: overlaps_pct.to_vec(),
        missing: missing.to_vec(),
        rotations_rad: vec![0.0],
        train_per_class: train,
        test_per_class: test,
        instance_len: 512,
        samples_per_symbol: 4,
    }
}

fn experiment(id: &str, knob: Knob, grid: GridConfig) -> ExperimentConfig {
    ExperimentConfig {
        id: id.to_string(),
        seed: 11,
        folds: 10,
        knob,
        families: vec![FeatureTag::FvHoc],
        grid,
        dictionary: DictionaryConfig::default(),
        classifier: ClassifierConfig { aware: true, train_at: None, c: Some(1.0) },
    }
}

fn run(config: &ExperimentConfig) -> ResultTable {
    run_experiment(config, &tmp(&format!("out/{}", config.id)), &cache()).unwrap()
}

fn universal_dictionary() -> (GmmDictionary, GmmDictionary) {
    let g = grid(&[10.0], &[100.0], &[0], 1, 1);
    let (_, amp, phase) =
        cached_dictionary_pair(&DictionaryConfig::default(), &g, &cache()).unwrap();
    (amp, phase)
}

fn random_dictionary(rng: &mut ChaCha8Rng, k: usize, l: usize) -> GmmDictionary {
    let mut weights: Vec<f64> = (0..k).map(|_| rng.gen_range(0.2..1.0)).collect();
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    GmmDictionary {
        k,
        l,
        weights,
        means: (0..k * l).map(|_| rng.gen_range(-2.0..2.0)).collect(),
        variances: (0..k * l).map(|_| rng.gen_range(0.5..2.0)).collect(),
        series_tag: SeriesTag::Amplitude,
        provenance: Provenance { seed: 0, data_description: "random".into() },
    }
}

#[test]
fn criterion_01_cumulant_oracle() {
    let start = Instant::now();
    let mut config = SimConfig::new(Modulation::Qpsk, f64::INFINITY, 100_000, 42);
    config.samples_per_symbol = 1;
    let inst = generate_instance(&config).unwrap();
    let c42_mag = hoc_features(&inst).unwrap().values[2];

    // constant unit signal: C42/C21^2 is exactly -2
    let meta = InstanceMeta {
        modulation: Modulation::Unknown,
        snr_db: f64::INFINITY,
        overlap_pct: 100.0,
        missing_symbols: 0,
        rotation_rad: 0.0,
        source: Source::Simulated,
    };
    let constant =
        IqInstance::new(vec![IqSample { i: 1.0, q: 0.0 }; 1000], meta).unwrap();
    let m = compute_moments(&constant).unwrap();
    let c21 = m.get(2, 1).unwrap();
    let c42_hat = raw_cumulants(&m)[2] / (c21 * c21);

    let elapsed = start.elapsed();
    let pass = (c42_mag - 1.0).abs() <= 0.02
        && c42_hat.re == -2.0
        && c42_hat.im == 0.0
        && elapsed.as_secs_f64() < 1.0;
    report(
        "cumulant oracle",
        pass,
        &format!("QPSK |C42^|={c42_mag:.4}, constant C42^={c42_hat}, {elapsed:.2?}"),
    );
}

#[test]
fn criterion_02_gradient_correctness() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (k, l) = (5, 3);
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let dict = random_dictionary(&mut rng, k, l);
        let x: Vec<f64> = (0..l).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let code = encode_shingle(&dict, &x).unwrap();
        let log_p = |d: &GmmDictionary| {
            let logs: Vec<f64> = (0..k)
                .map(|c| d.weights[c].ln() + d.component_log_density(c, &x))
                .collect();
            let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            max + logs.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
        };
        for c in 0..k {
            for d in 0..l {
                // encode_shingle scales the raw gradient by 1/sqrt(w)
                let scale = dict.weights[c].sqrt();
                let mut plus = dict.clone();
                let mut minus = dict.clone();
                plus.means[c * l + d] += h;
                minus.means[c * l + d] -= h;
                let fd_mu = (log_p(&plus) - log_p(&minus)) / (2.0 * h);
                let analytic_mu = code[c * l + d] * scale;
                let denom = analytic_mu.abs().max(fd_mu.abs()).max(1e-3);
                worst = worst.max((analytic_mu - fd_mu).abs() / denom);

                let sigma = dict.variances[c * l + d].sqrt();
                let mut plus = dict.clone();
                let mut minus = dict.clone();
                plus.variances[c * l + d] = (sigma + h) * (sigma + h);
                minus.variances[c * l + d] = (sigma - h) * (sigma - h);
                let fd_sigma = (log_p(&plus) - log_p(&minus)) / (2.0 * h);
                let analytic_sigma = code[k * l + c * l + d] * scale;
                let denom = analytic_sigma.abs().max(fd_sigma.abs()).max(1e-3);
                worst = worst.max((analytic_sigma - fd_sigma).abs() / denom);
            }
        }
    }
    let elapsed = start.elapsed();
    let pass = worst <= 1e-5 && elapsed.as_secs_f64() < 10.0;
    report(
        "gradient correctness",
        pass,
        &format!("worst relative error {worst:.2e} over 1000 pairs, {elapsed:.2?}"),
    );
}

#[test]
fn criterion_03_posterior_normalization() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut dict = random_dictionary(&mut rng, 8, 3);
    // park half the components 100 sigma away to force underflow
    for c in 4..8 {
        for d in 0..3 {
            dict.means[c * 3 + d] = 100.0;
            dict.variances[c * 3 + d] = 1.0;
        }
    }
    let mut worst: f64 = 0.0;
    for _ in 0..100_000 {
        let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let gamma = posterior(&dict, &x).unwrap();
        let sum: f64 = gamma.iter().sum();
        worst = worst.max((sum - 1.0).abs());
    }
    let pass = worst <= 1e-12;
    report("posterior normalization", pass, &format!("worst |sum-1| = {worst:.2e}"));
}

#[test]
fn criterion_04_em_monotonicity() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst_drop: f64 = 0.0;
    for run in 0..100 {
        // random two-lobe data, random sizes
        let n = rng.gen_range(150..400);
        let data: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                let center = if rng.gen_bool(0.5) { -1.0 } else { 1.5 };
                (0..2).map(|_| center + rng.gen_range(-0.5..0.5)).collect()
            })
            .collect();
        let shingles: Vec<&[f64]> = data.iter().map(|v| v.as_slice()).collect();
        let trained = train_dictionary(&shingles, 4, run, SeriesTag::Amplitude, "mono").unwrap();
        for pair in trained.log_likelihood_trace.windows(2) {
            worst_drop = worst_drop.max(pair[0] - pair[1]);
        }
    }
    let pass = worst_drop <= 1e-10;
    report("em monotonicity", pass, &format!("worst decrease {worst_drop:.2e} over 100 runs"));
}

#[test]
fn criterion_05_fv_dimension_and_order_sensitivity() {
    let (amp, phase) = universal_dictionary();
    let config = SimConfig::new(Modulation::Qam16, 10.0, 512, 99);
    let inst = generate_instance(&config).unwrap();
    let fv = encode_instance(&amp, &phase, &to_polar(&inst)).unwrap();
    let dim_ok = fv.values.len() == 4 * 3 * 50;

    // same multiset of values, different order
    let n = 512;
    let alternating: Vec<f64> = (0..n).map(|i| if i % 2 == 0 { 0.4 } else { 1.3 }).collect();
    let mut sorted = alternating.clone();
    sorted.sort_by(f64::total_cmp);
    let series = |v: &Vec<f64>| PolarSeries { amplitude: v.clone(), phase: v.clone() };
    let a = encode_instance(&amp, &phase, &series(&alternating)).unwrap().values;
    let b = encode_instance(&amp, &phase, &series(&sorted)).unwrap().values;
    let diff: f64 = a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let norm_a: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let norm_b: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let rel = diff / norm_a.max(norm_b);

    let pass = dim_ok && rel > 0.1;
    report(
        "fv dimension and order sensitivity",
        pass,
        &format!("dim {} (want 600), order-sensitivity relative diff {rel:.3}", fv.values.len()),
    );
}

#[test]
fn criterion_06_clean_high_snr_accuracy() {
    let config = experiment("clean-aware", Knob::Snr, grid(&[10.0, 20.0], &[100.0], &[0], 1000, 500));
    let table = run(&config);
    let accs: Vec<f64> = table
        .family_rows(FeatureTag::FvHoc)
        .iter()
        .map(|r| r.accuracy)
        .collect();
    let pass = accs.iter().all(|&a| a >= 0.90);
    report("clean high-snr accuracy", pass, &format!("lp+hoc accuracy {accs:?} (want >= 0.90)"));
}

#[test]
fn criterion_07_bias_robustness() {
    let mut config =
        experiment("bias", Knob::Missing, grid(&[20.0], &[100.0], &[0, 3], 300, 150));
    config.families = vec![FeatureTag::Hoc, FeatureTag::Os, FeatureTag::FvHoc];
    // classifiers are trained on unbiased scans and tested under bias
    config.classifier.train_at = Some(0.0);
    let table = run(&config);
    let at3 = |f: FeatureTag| table.accuracy_at(f, 3.0).unwrap();
    let (lp, hoc, os) = (at3(FeatureTag::FvHoc), at3(FeatureTag::Hoc), at3(FeatureTag::Os));
    let pass = lp >= 0.90 && lp - hoc >= 0.15 && lp - os >= 0.15;
    report(
        "bias robustness",
        pass,
        &format!("3 missing @20dB: lp+hoc {lp:.3}, hoc {hoc:.3}, os {os:.3}"),
    );
}

#[test]
fn criterion_08_partial_overlap_robustness() {
    // phase-unknown transmitters: every cell mixes constellation rotations
    let mut g = grid(&[20.0], &[50.0, 70.0], &[0], 400, 200);
    g.rotations_rad = DICT_ROTATIONS_RAD.to_vec();
    let mut config = experiment("overlap-aware-20db", Knob::Overlap, g);
    config.families = vec![FeatureTag::Hoc, FeatureTag::Os, FeatureTag::FvHoc];
    config.classifier.c = None;
    let table = run(&config);
    let mut pass = true;
    let mut details = String::new();
    // the LP+HOC margin is checked at the deepest partial scan; it must
    // also widen as the overlap shrinks
    let mut gaps = Vec::new();
    for &v in &[70.0, 50.0] {
        let lp = table.accuracy_at(FeatureTag::FvHoc, v).unwrap();
        let hoc = table.accuracy_at(FeatureTag::Hoc, v).unwrap();
        let os = table.accuracy_at(FeatureTag::Os, v).unwrap();
        gaps.push((lp - hoc).min(lp - os));
        details.push_str(&format!("{v}%: lp+hoc {lp:.3} hoc {hoc:.3} os {os:.3}; "));
    }
    pass &= gaps[1] >= 0.10 && gaps[1] > gaps[0];
    // low-order modulations at 70% overlap
    let row70 = table
        .rows
        .iter()
        .find(|r| r.family == FeatureTag::FvHoc && r.knob_value == 70.0)
        .unwrap();
    for m in [Modulation::Qpsk, Modulation::Psk8, Modulation::Qam8] {
        let i = table.classes.iter().position(|&c| c == m).unwrap();
        pass &= row70.per_class[i] >= 0.90;
        details.push_str(&format!("{m}@70% {:.3}; ", row70.per_class[i]));
    }
    report("partial-overlap robustness", pass, details.trim_end_matches("; "));
}

#[test]
fn criterion_09_overlap_blind() {
    let g = grid(&[10.0], &[50.0, 70.0, 90.0, 100.0], &[0], 300, 150);
    let mut aware_config = experiment("overlap-aware-10db", Knob::Overlap, g.clone());
    aware_config.classifier.c = None;
    let aware = run(&aware_config);
    let mut blind_config = experiment("overlap-blind-10db", Knob::Overlap, g);
    blind_config.classifier.aware = false;
    blind_config.classifier.c = None;
    let blind = run(&blind_config);

    let mut pass = true;
    let mut details = String::new();
    for &v in &[50.0, 70.0, 90.0, 100.0] {
        let a = aware.accuracy_at(FeatureTag::FvHoc, v).unwrap();
        let b = blind.accuracy_at(FeatureTag::FvHoc, v).unwrap();
        pass &= b >= a - 0.10;
        details.push_str(&format!("{v}%: aware {a:.3} blind {b:.3}; "));
    }
    report("overlap-blind", pass, details.trim_end_matches("; "));
}

#[test]
fn criterion_10_snr_blind() {
    let snrs = [0.0, 5.0, 10.0, 15.0, 20.0];
    let g = grid(&snrs, &[100.0], &[0], 200, 100);
    let mut aware_config = experiment("snr-aware", Knob::Snr, g.clone());
    aware_config.families = vec![FeatureTag::Hoc, FeatureTag::FvHoc];
    let aware = run(&aware_config);
    let mut blind_config = aware_config.clone();
    blind_config.id = "snr-blind".into();
    blind_config.classifier.aware = false;
    let blind = run(&blind_config);

    let mut pass = true;
    let mut details = String::new();
    for &v in &snrs {
        let a = aware.accuracy_at(FeatureTag::FvHoc, v).unwrap();
        let b = blind.accuracy_at(FeatureTag::FvHoc, v).unwrap();
        let h = blind.accuracy_at(FeatureTag::Hoc, v).unwrap();
        pass &= (a - b).abs() <= 0.05 && b >= h;
        details.push_str(&format!("{v}dB: aware {a:.3} blind {b:.3} hoc {h:.3}; "));
    }
    report("snr-blind", pass, details.trim_end_matches("; "));
}

#[test]
fn criterion_11_dictionary_universality() {
    let snrs = [0.0, 10.0, 20.0];
    // full-overlap unbiased scans with mixed constellation rotation
    let mut g = grid(&snrs, &[100.0], &[0], 80, 80);
    g.rotations_rad = DICT_ROTATIONS_RAD.to_vec();
    let mut tables = Vec::new();
    for dict_snr in [0.0, 10.0, 20.0] {
        let mut config =
            experiment(&format!("dict-at-{dict_snr}db"), Knob::Snr, g.clone());
        config.dictionary.snr_db = dict_snr;
        tables.push(run(&config));
    }
    let mut per_condition = experiment("dict-per-condition", Knob::Snr, g);
    per_condition.dictionary.policy = DictPolicy::PerCondition;
    tables.push(run(&per_condition));

    let mut pass = true;
    let mut details = String::new();
    for &v in &snrs {
        let accs: Vec<f64> =
            tables.iter().map(|t| t.accuracy_at(FeatureTag::FvHoc, v).unwrap()).collect();
        let spread = accs.iter().cloned().fold(f64::MIN, f64::max)
            - accs.iter().cloned().fold(f64::MAX, f64::min);
        pass &= spread <= 0.05;
        details.push_str(&format!("{v}dB: {accs:?} spread {spread:.3}; "));
    }
    report("dictionary universality", pass, details.trim_end_matches("; "));
}

#[test]
fn criterion_12_encoding_linearity() {
    let (amp, phase) = universal_dictionary();
    let time_encode = |n_samples: usize| -> f64 {
        let polars: Vec<PolarSeries> = (0..200)
            .map(|k| {
                let config =
                    SimConfig::new(Modulation::Qam64, 10.0, n_samples, 1000 + k as u64);
                to_polar(&generate_instance(&config).unwrap())
            })
            .collect();
        // warm up caches and code paths
        encode_instance(&amp, &phase, &polars[0]).unwrap();
        let start = Instant::now();
        for p in &polars {
            encode_instance(&amp, &phase, p).unwrap();
        }
        start.elapsed().as_secs_f64()
    };
    let t512 = time_encode(512);
    let t1024 = time_encode(1024);
    let ratio = t1024 / t512;
    let pass = (1.7..=2.3).contains(&ratio);
    report(
        "encoding linearity",
        pass,
        &format!("512: {t512:.3}s, 1024: {t1024:.3}s, ratio {ratio:.2} (want 1.7..2.3)"),
    );
}

#[test]
fn criterion_13_global_feature_degradation() {
    let overlaps = [100.0, 90.0, 80.0, 70.0, 60.0, 50.0];
    let rows = diagnostic_feature_stability(
        &[Modulation::Qam8, Modulation::Qam16],
        Knob::Overlap,
        &overlaps,
        30.0,
        100,
        13,
    )
    .unwrap();
    let stat = |m: Modulation, v: f64| {
        rows.iter()
            .find(|r| r.modulation == m && r.knob_value == v && r.feature == "c42_mag")
            .unwrap()
    };
    let gaps: Vec<f64> = overlaps
        .iter()
        .map(|&v| (stat(Modulation::Qam8, v).mean - stat(Modulation::Qam16, v).mean).abs())
        .collect();
    // shrinks from 100% down to 50%, allowing one non-monotone step
    let violations = gaps.windows(2).filter(|w| w[1] > w[0]).count();
    let std_grow = [Modulation::Qam8, Modulation::Qam16].iter().all(|&m| {
        stat(m, 50.0).std > stat(m, 100.0).std
    });
    let pass = violations <= 1 && gaps[gaps.len() - 1] < gaps[0] && std_grow;
    report(
        "global-feature degradation",
        pass,
        &format!("|C42^| gaps 100->50%: {gaps:?}, non-monotone steps {violations}, std grows {std_grow}"),
    );
}

#[test]
fn criterion_14_determinism() {
    use modrec::dataset::generate_dataset;
    use modrec::features::local::train_dictionary_pair;
    use modrec::features::{write_feature_csv, FeatureRow};
    use modrec::svm::train_svm;

    let dir = tmp("determinism");
    let mut pass = true;
    let mut details = String::new();

    // simulate
    let configs = vec![
        (SimConfig::new(Modulation::Qpsk, 10.0, 256, 1), 6),
        (SimConfig::new(Modulation::Qam16, 10.0, 256, 2), 6),
    ];
    let ds_a = generate_dataset(&configs, &dir.join("ds_a")).unwrap();
    let _ds_b = generate_dataset(&configs, &dir.join("ds_b")).unwrap();
    let same_blob = std::fs::read(dir.join("ds_a/instances.iq")).unwrap()
        == std::fs::read(dir.join("ds_b/instances.iq")).unwrap();
    let same_manifest = std::fs::read(dir.join("ds_a/manifest.tsv")).unwrap()
        == std::fs::read(dir.join("ds_b/manifest.tsv")).unwrap();
    pass &= same_blob && same_manifest;
    details.push_str(&format!("dataset {same_blob}/{same_manifest}, "));

    // dictionary
    let polars: Vec<PolarSeries> = ds_a.load_all().unwrap().iter().map(to_polar).collect();
    let (amp_a, _) = train_dictionary_pair(&polars, 2, 3, 9, "det").unwrap();
    let (amp_b, _) = train_dictionary_pair(&polars, 2, 3, 9, "det").unwrap();
    amp_a.save(&dir.join("amp_a.json")).unwrap();
    amp_b.save(&dir.join("amp_b.json")).unwrap();
    let same_dict = std::fs::read(dir.join("amp_a.json")).unwrap()
        == std::fs::read(dir.join("amp_b.json")).unwrap();
    pass &= same_dict;
    details.push_str(&format!("dictionary {same_dict}, "));

    // features
    let feature_rows = |tag: u64| -> Vec<FeatureRow> {
        let _ = tag;
        ds_a.entries
            .iter()
            .map(|e| FeatureRow {
                id: e.id,
                meta: e.meta,
                values: hoc_features(&ds_a.load(e).unwrap()).unwrap().values.to_vec(),
            })
            .collect()
    };
    write_feature_csv(&dir.join("f_a.csv"), FeatureTag::Hoc, &feature_rows(0)).unwrap();
    write_feature_csv(&dir.join("f_b.csv"), FeatureTag::Hoc, &feature_rows(1)).unwrap();
    let same_features = std::fs::read(dir.join("f_a.csv")).unwrap()
        == std::fs::read(dir.join("f_b.csv")).unwrap();
    pass &= same_features;
    details.push_str(&format!("features {same_features}, "));

    // classifier
    let x: Vec<Vec<f64>> = feature_rows(0).into_iter().map(|r| r.values).collect();
    let y: Vec<Modulation> =
        ds_a.entries.iter().map(|e| e.meta.modulation).collect();
    let m_a = train_svm(&x, &y, FeatureTag::Hoc, 1.0, 5).unwrap();
    let m_b = train_svm(&x, &y, FeatureTag::Hoc, 1.0, 5).unwrap();
    m_a.save(&dir.join("m_a.json")).unwrap();
    m_b.save(&dir.join("m_b.json")).unwrap();
    let same_model = std::fs::read(dir.join("m_a.json")).unwrap()
        == std::fs::read(dir.join("m_b.json")).unwrap();
    pass &= same_model;
    details.push_str(&format!("model {same_model}, "));

    // full experiment
    let mut config = experiment("det", Knob::Snr, grid(&[10.0], &[100.0], &[0], 8, 8));
    config.grid.modulations = vec![Modulation::Qpsk, Modulation::Qam16];
    config.grid.instance_len = 256;
    config.families = vec![FeatureTag::Hoc];
    config.folds = 2;
    run_experiment(&config, &dir.join("run_a"), &dir.join("cache")).unwrap();
    run_experiment(&config, &dir.join("run_b"), &dir.join("cache")).unwrap();
    let same_results = std::fs::read(dir.join("run_a/results.csv")).unwrap()
        == std::fs::read(dir.join("run_b/results.csv")).unwrap();
    pass &= same_results;
    details.push_str(&format!("experiment {same_results}"));

    report("determinism", pass, &details);
}
