//! Deterministic multi-paradigm signal generator.
//!
//! Paradigm identity is carried by band power and spatial gain (visible in
//! a single channel's spectrum); class labels are carried only by the
//! relative phase of a channel pair inside one group, which no
//! single-channel or spectral feature exposes.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use stratum_tensor::RngStream;

use crate::corpus::{write_corpus, CorpusMeta, RecordMeta, SplitMeta};
use crate::filter::{apply_fir, design_bandpass};
use crate::groups::GroupTable;
use crate::montage::Montage;
use crate::{Result, SignalError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Band {
    Delta,
    Theta,
    Alpha,
    Beta,
    Gamma,
}

impl Band {
    pub fn range(self) -> (f64, f64) {
        match self {
            Band::Delta => (1.0, 4.0),
            Band::Theta => (4.0, 8.0),
            Band::Alpha => (8.0, 13.0),
            Band::Beta => (13.0, 30.0),
            Band::Gamma => (30.0, 80.0),
        }
    }

    pub const ALL: [Band; 5] = [Band::Delta, Band::Theta, Band::Alpha, Band::Beta, Band::Gamma];
}

#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
pub struct BandPowers {
    #[serde(default)]
    pub delta: f64,
    #[serde(default)]
    pub theta: f64,
    #[serde(default)]
    pub alpha: f64,
    #[serde(default)]
    pub beta: f64,
    #[serde(default)]
    pub gamma: f64,
}

impl BandPowers {
    pub fn get(&self, b: Band) -> f64 {
        match b {
            Band::Delta => self.delta,
            Band::Theta => self.theta,
            Band::Alpha => self.alpha,
            Band::Beta => self.beta,
            Band::Gamma => self.gamma,
        }
    }

    fn all_non_negative(&self) -> bool {
        Band::ALL.iter().all(|&b| self.get(b) >= 0.0)
    }

    fn as_vec(&self) -> Vec<f64> {
        Band::ALL.iter().map(|&b| self.get(b)).collect()
    }
}

/// How the class label is written into the signal.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LabelRule {
    /// A tone of `amplitude` in `band` on channels `chan_a`/`chan_b` of
    /// `group`: in phase for label 0, anti-phase for label 1.
    PhaseFlip {
        group: String,
        chan_a: String,
        chan_b: String,
        band: Band,
        amplitude: f64,
    },
    /// Label 1 adds a tone at `freq` to every channel of `group`.
    GroupBurst { group: String, freq: f64, amplitude: f64 },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SynthParadigmSpec {
    pub name: String,
    pub band_powers: BandPowers,
    /// (group name, gain) pairs; channel gain is the sum over groups that
    /// contain the channel, plus `default_gain` for every channel.
    pub spatial_mixing: Vec<(String, f64)>,
    #[serde(default = "default_gain")]
    pub default_gain: f64,
    pub label_rule: LabelRule,
    pub noise_sigma: f64,
}

fn default_gain() -> f64 {
    0.2
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SynthConfig {
    pub seed: u64,
    pub sample_rate: f64,
    /// Seconds generated per sample before filtering.
    pub gen_secs: f64,
    /// Seconds trimmed from each end after filtering (filter edges).
    pub trim_secs: f64,
    /// Band-pass applied in preprocessing.
    pub band: (f64, f64),
    pub tone_amp: f64,
    pub background_amp: f64,
    pub montage: Vec<String>,
    pub n_train: usize,
    pub n_valid: usize,
    pub n_test: usize,
    pub paradigms: Vec<SynthParadigmSpec>,
}

impl SynthConfig {
    /// Three-paradigm desk corpus on the 19-channel montage.
    pub fn default_desk(seed: u64) -> Self {
        let table = GroupTable::load_default().expect("builtin group table");
        let montage = Montage::standard_19(&table).expect("builtin montage");
        let phase = |group: &str, a: &str, b: &str, band: Band| LabelRule::PhaseFlip {
            group: group.into(),
            chan_a: a.into(),
            chan_b: b.into(),
            band,
            amplitude: 1.2,
        };
        SynthConfig {
            seed,
            sample_rate: 256.0,
            gen_secs: 6.0,
            trim_secs: 1.0,
            band: (4.0, 100.0),
            tone_amp: 1.0,
            background_amp: 0.3,
            montage: montage.names().to_vec(),
            n_train: 48,
            n_valid: 24,
            n_test: 24,
            paradigms: vec![
                SynthParadigmSpec {
                    name: "occ_alpha".into(),
                    band_powers: BandPowers { alpha: 1.0, ..Default::default() },
                    spatial_mixing: vec![("Occipital".into(), 1.0), ("Visual".into(), 0.5)],
                    default_gain: 0.2,
                    label_rule: phase("Occipital", "O1", "O2", Band::Alpha),
                    noise_sigma: 0.25,
                },
                SynthParadigmSpec {
                    name: "mot_beta".into(),
                    band_powers: BandPowers { beta: 1.0, ..Default::default() },
                    spatial_mixing: vec![("Somatomotor".into(), 1.0), ("Central".into(), 0.5)],
                    default_gain: 0.2,
                    label_rule: phase("Somatomotor", "C3", "C4", Band::Beta),
                    noise_sigma: 0.25,
                },
                SynthParadigmSpec {
                    name: "fro_theta".into(),
                    band_powers: BandPowers { theta: 1.0, ..Default::default() },
                    spatial_mixing: vec![("Frontal".into(), 1.0), ("SN".into(), 0.4)],
                    default_gain: 0.2,
                    label_rule: phase("Frontal", "F3", "F4", Band::Theta),
                    noise_sigma: 0.25,
                },
            ],
        }
    }

    pub fn validate(&self, table: &GroupTable) -> Result<Montage> {
        if self.paradigms.len() < 2 {
            return Err(SignalError::BadSynthConfig("need at least 2 paradigms".into()));
        }
        if self.n_train == 0 || self.n_valid == 0 || self.n_test == 0 {
            return Err(SignalError::BadSynthConfig("zero samples in a split".into()));
        }
        let mut names = std::collections::BTreeSet::new();
        for p in &self.paradigms {
            if !names.insert(&p.name) {
                return Err(SignalError::BadSynthConfig(format!(
                    "duplicate paradigm {:?}",
                    p.name
                )));
            }
            if !p.band_powers.all_non_negative() {
                return Err(SignalError::BadSynthConfig(format!(
                    "negative band power in {:?}",
                    p.name
                )));
            }
            for (g, _) in &p.spatial_mixing {
                if table.get(g).is_none() {
                    return Err(SignalError::BadSynthConfig(format!("unknown group {g:?}")));
                }
            }
        }
        // At least two paradigms must differ in band powers or mixing.
        let all_same = self.paradigms.windows(2).all(|w| {
            w[0].band_powers.as_vec() == w[1].band_powers.as_vec()
                && w[0].spatial_mixing == w[1].spatial_mixing
        });
        if all_same {
            return Err(SignalError::BadSynthConfig(
                "paradigms are indistinguishable (same band powers and mixing)".into(),
            ));
        }
        Montage::new(&self.montage, table)
    }
}

/// Pink-ish background noise via 1/sqrt(f) spectral shaping.
fn pink_noise(rng: &mut RngStream, len: usize, fs: f64) -> Vec<f64> {
    let nfft = len.next_power_of_two().max(2);
    let mut re = vec![0.0f64; nfft];
    let mut im = vec![0.0f64; nfft];
    for k in 1..nfft / 2 {
        let f = k as f64 * fs / nfft as f64;
        let scale = 1.0 / f.max(1.0).sqrt();
        re[k] = rng.normal_f64() * scale;
        im[k] = rng.normal_f64() * scale;
        re[nfft - k] = re[k];
        im[nfft - k] = -im[k];
    }
    stratum_tensor::fft::ifft_inplace(&mut re, &mut im);
    re.truncate(len);
    // Normalize to unit standard deviation for a predictable floor.
    let mean = re.iter().sum::<f64>() / len as f64;
    let std = (re.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / len as f64)
        .sqrt()
        .max(1e-12);
    re.iter().map(|v| (v - mean) / std).collect()
}

fn add_tone(buf: &mut [f64], fs: f64, freq: f64, phase: f64, amp: f64) {
    for (t, v) in buf.iter_mut().enumerate() {
        *v += amp * (std::f64::consts::TAU * freq * t as f64 / fs + phase).sin();
    }
}

/// One generated, filtered, trimmed multi-channel stream plus its label.
pub struct RawSample {
    pub channels: Vec<Vec<f64>>,
    pub label: usize,
}

pub fn synth_sample(
    cfg: &SynthConfig,
    spec: &SynthParadigmSpec,
    table: &GroupTable,
    montage: &Montage,
    kernel: &[f64],
    label: usize,
    rng: RngStream,
) -> RawSample {
    let fs = cfg.sample_rate;
    let len = (cfg.gen_secs * fs) as usize;
    let c = montage.len();

    // Per-channel spatial gain from group membership.
    let mut gain = vec![spec.default_gain; c];
    for (gname, g) in &spec.spatial_mixing {
        if let Some(group) = table.get(gname) {
            for m in &group.members {
                if let Some(i) = montage.index_of(m) {
                    gain[i] += g;
                }
            }
        }
    }

    let mut chans: Vec<Vec<f64>> = Vec::with_capacity(c);
    for ci in 0..c {
        let mut bg_rng = rng.substream(1000 + ci as u64);
        let mut ch: Vec<f64> =
            pink_noise(&mut bg_rng, len, fs).iter().map(|v| v * cfg.background_amp).collect();
        let mut noise_rng = rng.substream(2000 + ci as u64);
        for v in ch.iter_mut() {
            *v += noise_rng.normal_f64() * spec.noise_sigma;
        }
        chans.push(ch);
    }

    // Paradigm band tones with per-channel random phase.
    for (bi, &band) in Band::ALL.iter().enumerate() {
        let p = spec.band_powers.get(band);
        if p <= 0.0 {
            continue;
        }
        let (lo, hi) = band.range();
        let mut band_rng = rng.substream(3000 + bi as u64);
        let freq = lo + band_rng.uniform_f64() * (hi - lo);
        let amp = cfg.tone_amp * p.sqrt();
        for (ci, ch) in chans.iter_mut().enumerate() {
            let phase = band_rng.uniform_f64() * std::f64::consts::TAU;
            add_tone(ch, fs, freq, phase, amp * gain[ci]);
        }
    }

    // Label structure.
    match &spec.label_rule {
        LabelRule::PhaseFlip { chan_a, chan_b, band, amplitude, .. } => {
            let (lo, hi) = band.range();
            let mut lr = rng.substream(4000);
            let freq = lo + lr.uniform_f64() * (hi - lo);
            let phase = lr.uniform_f64() * std::f64::consts::TAU;
            let flip = if label == 1 { std::f64::consts::PI } else { 0.0 };
            if let Some(a) = montage.index_of(chan_a) {
                add_tone(&mut chans[a], fs, freq, phase, *amplitude);
            }
            if let Some(b) = montage.index_of(chan_b) {
                add_tone(&mut chans[b], fs, freq, phase + flip, *amplitude);
            }
        }
        LabelRule::GroupBurst { group, freq, amplitude } => {
            if label == 1 {
                let mut lr = rng.substream(4000);
                if let Some(g) = table.get(group) {
                    for m in &g.members {
                        if let Some(ci) = montage.index_of(m) {
                            let phase = lr.uniform_f64() * std::f64::consts::TAU;
                            add_tone(&mut chans[ci], fs, *freq, phase, *amplitude);
                        }
                    }
                }
            }
        }
    }

    // Preprocess: band-pass then trim the filter-edge seconds.
    let trim = (cfg.trim_secs * fs) as usize;
    let channels: Vec<Vec<f64>> = chans
        .into_iter()
        .map(|ch| {
            let f = apply_fir(&ch, kernel);
            f[trim..len - trim].to_vec()
        })
        .collect();
    RawSample { channels, label }
}

/// Generate the full corpus to `out_dir`: `train.bin`, `valid.bin`,
/// `test.bin` plus `meta.json`. Deterministic in `cfg.seed`; labels are
/// balanced within +-1 per paradigm in every split.
pub fn generate_corpus(cfg: &SynthConfig, out_dir: &std::path::Path) -> Result<CorpusMeta> {
    let table = GroupTable::load_default()?;
    let montage = cfg.validate(&table)?;
    let kernel = design_bandpass(cfg.sample_rate, cfg.band.0, cfg.band.1)?;

    let splits = [("train", cfg.n_train, 0u64), ("valid", cfg.n_valid, 1), ("test", cfg.n_test, 2)];
    let p = cfg.sample_rate as usize;
    let t = ((cfg.gen_secs - 2.0 * cfg.trim_secs) * cfg.sample_rate) as usize / p;
    if t == 0 {
        return Err(SignalError::BadSynthConfig("no full patches after trimming".into()));
    }
    let c = montage.len();

    let mut meta = CorpusMeta {
        format_version: 1,
        seed: cfg.seed,
        sample_rate: cfg.sample_rate,
        band: cfg.band,
        montage: montage.names().to_vec(),
        paradigms: cfg.paradigms.clone(),
        splits: Default::default(),
        records: Default::default(),
    };

    let root = RngStream::with_stream(cfg.seed, 0xC0FFEE);
    let mut split_payloads = Vec::new();
    for (split, n_per, split_id) in splits {
        // (paradigm, index) jobs in deterministic order.
        let jobs: Vec<(usize, usize)> = (0..cfg.paradigms.len())
            .flat_map(|pi| (0..n_per).map(move |i| (pi, i)))
            .collect();
        let samples: Vec<(RecordMeta, RawSample)> = jobs
            .par_iter()
            .map(|&(pi, i)| {
                let spec = &cfg.paradigms[pi];
                let label = i % 2;
                let rng = root
                    .substream(split_id)
                    .substream(pi as u64)
                    .substream(i as u64);
                let raw = synth_sample(cfg, spec, &table, &montage, &kernel, label, rng);
                (RecordMeta { paradigm_id: pi, dataset_id: pi, label }, raw)
            })
            .collect();

        let mut data = Vec::with_capacity(samples.len() * t * c * p);
        let mut records = Vec::with_capacity(samples.len());
        for (rec, raw) in &samples {
            for ti in 0..t {
                for ch in &raw.channels {
                    data.extend_from_slice(&ch[ti * p..(ti + 1) * p]);
                }
            }
            records.push(rec.clone());
        }
        meta.splits.insert(
            split.to_string(),
            SplitMeta { n: samples.len(), t, c, p },
        );
        meta.records.insert(split.to_string(), records);
        split_payloads.push((split.to_string(), data));
    }
    write_corpus(out_dir, &meta, &split_payloads)?;
    Ok(meta)
}
