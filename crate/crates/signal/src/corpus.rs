//! On-disk corpus layout: one little-endian f64 binary per split plus a
//! JSON sidecar with shapes, paradigm specs and per-sample metadata.

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use stratum_tensor::Tensor64;

use crate::synth::SynthParadigmSpec;
use crate::{Result, SignalError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SplitMeta {
    pub n: usize,
    pub t: usize,
    pub c: usize,
    pub p: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RecordMeta {
    pub paradigm_id: usize,
    pub dataset_id: usize,
    pub label: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CorpusMeta {
    pub format_version: u32,
    pub seed: u64,
    pub sample_rate: f64,
    pub band: (f64, f64),
    pub montage: Vec<String>,
    pub paradigms: Vec<SynthParadigmSpec>,
    pub splits: BTreeMap<String, SplitMeta>,
    pub records: BTreeMap<String, Vec<RecordMeta>>,
}

pub(crate) fn write_corpus(
    dir: &Path,
    meta: &CorpusMeta,
    splits: &[(String, Vec<f64>)],
) -> Result<()> {
    fs::create_dir_all(dir)?;
    for (name, data) in splits {
        let mut f = fs::File::create(dir.join(format!("{name}.bin")))?;
        let mut bytes = Vec::with_capacity(data.len() * 8);
        for v in data {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        f.write_all(&bytes)?;
    }
    let json = serde_json::to_string_pretty(meta)?;
    fs::write(dir.join("meta.json"), json)?;
    Ok(())
}

/// Handle to a corpus directory; split tensors load lazily.
pub struct Corpus {
    pub meta: CorpusMeta,
    dir: PathBuf,
}

/// A fully loaded split.
pub struct SplitData {
    /// (N, T, C, P)
    pub signals: Tensor64,
    pub records: Vec<RecordMeta>,
}

impl Corpus {
    pub fn open(dir: &Path) -> Result<Self> {
        let meta_path = dir.join("meta.json");
        let text = fs::read_to_string(&meta_path).map_err(|e| {
            SignalError::Corpus(format!("cannot read {}: {e}", meta_path.display()))
        })?;
        let meta: CorpusMeta = serde_json::from_str(&text)?;
        if meta.format_version != 1 {
            return Err(SignalError::Corpus(format!(
                "unsupported corpus format version {}",
                meta.format_version
            )));
        }
        Ok(Self { meta, dir: dir.to_path_buf() })
    }

    pub fn n_paradigms(&self) -> usize {
        self.meta.paradigms.len()
    }

    pub fn load(&self, split: Split) -> Result<SplitData> {
        let name = split.name();
        let sm = self
            .meta
            .splits
            .get(name)
            .ok_or_else(|| SignalError::Corpus(format!("missing split {name}")))?;
        let records = self
            .meta
            .records
            .get(name)
            .ok_or_else(|| SignalError::Corpus(format!("missing records for {name}")))?
            .clone();
        let path = self.dir.join(format!("{name}.bin"));
        let mut bytes = Vec::new();
        fs::File::open(&path)
            .map_err(|e| SignalError::Corpus(format!("cannot open {}: {e}", path.display())))?
            .read_to_end(&mut bytes)?;
        let expect = sm.n * sm.t * sm.c * sm.p * 8;
        if bytes.len() != expect {
            return Err(SignalError::Corpus(format!(
                "{name}.bin is {} bytes, expected {expect}",
                bytes.len()
            )));
        }
        let data: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect();
        let signals = Tensor64::from_vec(vec![sm.n, sm.t, sm.c, sm.p], data)?;
        if records.len() != sm.n {
            return Err(SignalError::Corpus(format!(
                "{name}: {} records for {} samples",
                records.len(),
                sm.n
            )));
        }
        Ok(SplitData { signals, records })
    }
}
