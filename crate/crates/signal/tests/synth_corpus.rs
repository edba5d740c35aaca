//! Corpus generation: bookkeeping, determinism, and spectral content of
//! the generated paradigms.

use stratum_signal::synth::synth_sample;
use stratum_signal::{
    generate_corpus, BandPowers, Corpus, GroupTable, LabelRule, Montage, Split, SynthConfig,
};
use stratum_tensor::fft::rfft_split;
use stratum_tensor::RngStream;

fn small_cfg(seed: u64) -> SynthConfig {
    let mut cfg = SynthConfig::default_desk(seed);
    cfg.n_train = 8;
    cfg.n_valid = 4;
    cfg.n_test = 4;
    cfg
}

#[test]
fn three_paradigms_by_64_gives_192_balanced_records() {
    let mut cfg = SynthConfig::default_desk(7);
    cfg.n_train = 64;
    cfg.n_valid = 2;
    cfg.n_test = 2;
    // Shorten generation for this bookkeeping-heavy test.
    cfg.gen_secs = 4.0;
    let dir = tempfile::tempdir().unwrap();
    let meta = generate_corpus(&cfg, dir.path()).unwrap();
    let records = &meta.records["train"];
    assert_eq!(records.len(), 192);
    for pid in 0..3 {
        let labels: Vec<usize> =
            records.iter().filter(|r| r.paradigm_id == pid).map(|r| r.label).collect();
        assert_eq!(labels.len(), 64);
        let ones = labels.iter().filter(|&&l| l == 1).count();
        let zeros = labels.len() - ones;
        assert!(ones.abs_diff(zeros) <= 1, "paradigm {pid}: {ones} vs {zeros}");
    }
}

#[test]
fn same_seed_twice_is_byte_identical() {
    let cfg = small_cfg(11);
    let d1 = tempfile::tempdir().unwrap();
    let d2 = tempfile::tempdir().unwrap();
    generate_corpus(&cfg, d1.path()).unwrap();
    generate_corpus(&cfg, d2.path()).unwrap();
    for f in ["train.bin", "valid.bin", "test.bin", "meta.json"] {
        let a = std::fs::read(d1.path().join(f)).unwrap();
        let b = std::fs::read(d2.path().join(f)).unwrap();
        assert_eq!(a, b, "{f} differs between identically seeded runs");
    }
}

#[test]
fn corpus_roundtrips_through_loader() {
    let cfg = small_cfg(13);
    let dir = tempfile::tempdir().unwrap();
    let meta = generate_corpus(&cfg, dir.path()).unwrap();
    let corpus = Corpus::open(dir.path()).unwrap();
    let train = corpus.load(Split::Train).unwrap();
    let sm = &meta.splits["train"];
    assert_eq!(train.signals.shape(), &[sm.n, sm.t, sm.c, sm.p]);
    assert_eq!(train.records.len(), sm.n);
    assert!(train.signals.data().iter().all(|v| v.is_finite()));
}

#[test]
fn duplicate_paradigms_and_zero_samples_rejected() {
    let table = GroupTable::load_default().unwrap();
    let mut cfg = small_cfg(1);
    cfg.n_train = 0;
    assert!(cfg.validate(&table).is_err());

    let mut cfg = small_cfg(1);
    let dup = cfg.paradigms[0].clone();
    cfg.paradigms[1] = dup;
    assert!(cfg.validate(&table).is_err());

    let mut cfg = small_cfg(1);
    cfg.paradigms.truncate(1);
    assert!(cfg.validate(&table).is_err());
}

/// Mean one-sided power over a frequency band, computed on a
/// power-of-two suffix of the signal.
fn band_power(x: &[f64], fs: f64, lo: f64, hi: f64) -> f64 {
    let n = 1024usize;
    let seg = &x[x.len() - n..];
    let (re, im) = rfft_split(seg).unwrap();
    let df = fs / n as f64;
    let mut acc = 0.0;
    let mut cnt = 0usize;
    for k in 0..re.len() {
        let f = k as f64 * df;
        if f >= lo && f < hi {
            acc += re[k] * re[k] + im[k] * im[k];
            cnt += 1;
        }
    }
    acc / cnt.max(1) as f64
}

#[test]
fn alpha_only_paradigm_peaks_in_alpha_band_by_6db() {
    let table = GroupTable::load_default().unwrap();
    let mut cfg = SynthConfig::default_desk(3);
    cfg.background_amp = 0.1;
    let spec = stratum_signal::SynthParadigmSpec {
        name: "alpha_only".into(),
        band_powers: BandPowers { alpha: 1.0, ..Default::default() },
        spatial_mixing: vec![("Occipital".into(), 1.0)],
        default_gain: 0.1,
        label_rule: LabelRule::GroupBurst { group: "Occipital".into(), freq: 10.0, amplitude: 0.0 },
        noise_sigma: 0.05,
    };
    let montage = Montage::new(&cfg.montage, &table).unwrap();
    let kernel = stratum_signal::filter::design_bandpass(cfg.sample_rate, 4.0, 100.0).unwrap();
    let o1 = montage.index_of("O1").unwrap();
    // Average band powers over several generated samples.
    let mut alpha = 0.0;
    let mut others: Vec<f64> = vec![0.0; 3];
    for i in 0..8 {
        let rng = RngStream::with_stream(900 + i, 1);
        let s = synth_sample(&cfg, &spec, &table, &montage, &kernel, 0, rng);
        let ch = &s.channels[o1];
        alpha += band_power(ch, cfg.sample_rate, 8.0, 13.0);
        others[0] += band_power(ch, cfg.sample_rate, 4.0, 8.0);
        others[1] += band_power(ch, cfg.sample_rate, 13.0, 30.0);
        others[2] += band_power(ch, cfg.sample_rate, 30.0, 80.0);
    }
    for (i, o) in others.iter().enumerate() {
        let ratio_db = 10.0 * (alpha / o).log10();
        assert!(ratio_db >= 6.0, "band {i}: alpha exceeds by only {ratio_db:.2} dB");
    }
}
