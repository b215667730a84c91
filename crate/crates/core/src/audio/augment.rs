//! Five-fold environmental-noise augmentation.
//!
//! Every clean record is mixed with `noises_per_clip` distinct noise files
//! drawn without replacement from the split's pool; noise `k` is paired
//! with SNR level `k`. The draw for a record depends only on the seed and
//! the record id, so records can be processed in any order or in parallel.

use std::collections::HashSet;
use std::path::Path;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{mix_at_snr, read_wav, AudioClip};
use crate::data::{Manifest, Utterance};
use crate::error::{Error, Result};

pub const DEFAULT_SNR_LEVELS_DB: [f64; 5] = [0.0, 10.0, 20.0, 30.0, 40.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseFile {
    pub name: String,
    pub clip: AudioClip,
}

impl NoiseFile {
    fn content_digest(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        for s in &self.clip.samples {
            h.update(s.to_bits().to_le_bytes());
        }
        h.finalize().into()
    }
}

/// Train and test noise sets; construction fails if they share a file
/// name or identical audio content.
#[derive(Debug, Clone)]
pub struct NoisePool {
    train: Vec<NoiseFile>,
    test: Vec<NoiseFile>,
}

impl NoisePool {
    pub fn new(train: Vec<NoiseFile>, test: Vec<NoiseFile>) -> Result<Self> {
        let names: HashSet<&str> = train.iter().map(|n| n.name.as_str()).collect();
        let digests: HashSet<[u8; 32]> = train.iter().map(NoiseFile::content_digest).collect();
        for n in &test {
            if names.contains(n.name.as_str()) || digests.contains(&n.content_digest()) {
                return Err(Error::Validation(format!(
                    "noise `{}` appears in both train and test pools",
                    n.name
                )));
            }
        }
        Ok(NoisePool { train, test })
    }

    /// Loads `<dir>/train/*.wav` and `<dir>/test/*.wav`, sorted by file name.
    pub fn from_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let load = |sub: &str| -> Result<Vec<NoiseFile>> {
            let path = dir.join(sub);
            let mut names: Vec<_> = std::fs::read_dir(&path)
                .map_err(|e| Error::io(&path, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "wav"))
                .collect();
            names.sort();
            names
                .into_iter()
                .map(|p| {
                    Ok(NoiseFile {
                        name: format!("{sub}/{}", p.file_name().unwrap().to_string_lossy()),
                        clip: read_wav(&p)?,
                    })
                })
                .collect()
        };
        NoisePool::new(load("train")?, load("test")?)
    }

    pub fn split(&self, split: Split) -> &[NoiseFile] {
        match split {
            Split::Train => &self.train,
            Split::Test => &self.test,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentSpec {
    pub snr_levels_db: Vec<f64>,
    pub noises_per_clip: usize,
    pub seed: u64,
    /// Start each noise at a random offset instead of sample 0.
    #[serde(default)]
    pub random_offset: bool,
}

impl Default for AugmentSpec {
    fn default() -> Self {
        AugmentSpec {
            snr_levels_db: DEFAULT_SNR_LEVELS_DB.to_vec(),
            noises_per_clip: DEFAULT_SNR_LEVELS_DB.len(),
            seed: 0,
            random_offset: false,
        }
    }
}

impl AugmentSpec {
    pub fn with_levels(snr_levels_db: Vec<f64>, seed: u64) -> Self {
        AugmentSpec {
            noises_per_clip: snr_levels_db.len(),
            snr_levels_db,
            seed,
            random_offset: false,
        }
    }
}

/// Where one augmented record came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub id: String,
    pub source_id: String,
    pub noise: String,
    pub snr_db: f64,
    pub offset: usize,
    pub gain: f64,
    pub clipped: usize,
}

#[derive(Debug, Clone)]
pub struct AugmentedCorpus {
    pub manifest: Manifest,
    pub provenance: Vec<Provenance>,
}

impl AugmentedCorpus {
    pub fn clipped_total(&self) -> usize {
        self.provenance.iter().map(|p| p.clipped).sum()
    }
}

/// `{id}#snr{level}`, with integral levels printed without a fraction.
pub fn augmented_id(id: &str, snr_db: f64) -> String {
    if snr_db.fract() == 0.0 {
        format!("{id}#snr{snr_db:.0}")
    } else {
        format!("{id}#snr{snr_db}")
    }
}

fn record_rng(seed: u64, id: &str) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(id.as_bytes());
    ChaCha8Rng::from_seed(h.finalize().into())
}

fn augment_record(utt: &Utterance, noises: &[NoiseFile], spec: &AugmentSpec) -> Result<Vec<(Utterance, Provenance)>> {
    let samples = utt
        .samples
        .as_ref()
        .ok_or_else(|| Error::Input(format!("record `{}` has no audio", utt.id)))?;
    let clean = AudioClip::new(samples.clone(), crate::data::SAMPLE_RATE)
        .map_err(|_| Error::Input(format!("record `{}` has empty audio", utt.id)))?;
    let mut rng = record_rng(spec.seed, &utt.id);
    let picks = sample(&mut rng, noises.len(), spec.noises_per_clip);
    let mut out = Vec::with_capacity(spec.noises_per_clip);
    for (noise_idx, &snr_db) in picks.iter().zip(&spec.snr_levels_db) {
        let noise = &noises[noise_idx];
        let offset = if spec.random_offset {
            rng.gen_range(0..noise.clip.len())
        } else {
            0
        };
        let mixed = mix_at_snr(&clean, &noise.clip, snr_db, offset)
            .map_err(|e| Error::Input(format!("record `{}`: {e}", utt.id)))?;
        let id = augmented_id(&utt.id, snr_db);
        let record = Utterance {
            id: id.clone(),
            audio_path: Some(format!("{}.wav", id.replace('/', "_"))),
            samples: Some(mixed.clip.samples),
            words: utt.words.clone(),
            slots: utt.slots.clone(),
            intent: utt.intent.clone(),
        };
        let prov = Provenance {
            id,
            source_id: utt.id.clone(),
            noise: noise.name.clone(),
            snr_db,
            offset,
            gain: mixed.gain,
            clipped: mixed.clipped,
        };
        out.push((record, prov));
    }
    Ok(out)
}

/// Mixes every record with noises from `split`'s pool. Records must carry samples.
pub fn augment_corpus(
    manifest: &Manifest,
    pool: &NoisePool,
    spec: &AugmentSpec,
    split: Split,
) -> Result<AugmentedCorpus> {
    if spec.noises_per_clip != spec.snr_levels_db.len() {
        return Err(Error::Config(format!(
            "noises_per_clip ({}) must equal the number of SNR levels ({})",
            spec.noises_per_clip,
            spec.snr_levels_db.len()
        )));
    }
    let noises = pool.split(split);
    if noises.len() < spec.noises_per_clip {
        return Err(Error::Input(format!(
            "{split:?} noise pool has {} files but {} are needed per clip",
            noises.len(),
            spec.noises_per_clip
        )));
    }
    let per_record: Vec<_> = manifest
        .records
        .par_iter()
        .map(|utt| augment_record(utt, noises, spec))
        .collect::<Result<_>>()?;
    let mut records = Vec::with_capacity(manifest.len() * spec.noises_per_clip);
    let mut provenance = Vec::with_capacity(records.capacity());
    for (r, p) in per_record.into_iter().flatten() {
        records.push(r);
        provenance.push(p);
    }
    let mut out = Manifest::from_records(records)?;
    out.base_dir = manifest.base_dir.clone();
    Ok(AugmentedCorpus {
        manifest: out,
        provenance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn noise(name: &str, seed: u64) -> NoiseFile {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        NoiseFile {
            name: name.into(),
            clip: AudioClip::new((0..800).map(|_| rng.gen_range(-0.3..0.3)).collect(), 16_000).unwrap(),
        }
    }

    fn pool(train: usize, test: usize) -> NoisePool {
        NoisePool::new(
            (0..train)
                .map(|i| noise(&format!("train/n{i}.wav"), i as u64))
                .collect(),
            (0..test)
                .map(|i| noise(&format!("test/n{i}.wav"), 100 + i as u64))
                .collect(),
        )
        .unwrap()
    }

    fn corpus(n: usize) -> Manifest {
        let records = (0..n)
            .map(|i| {
                let mut u = Utterance::new(
                    format!("utt{i}"),
                    vec!["to".into(), "boston".into()],
                    vec!["O".into(), "B-toloc".into()],
                    "flight",
                )
                .unwrap();
                u.samples = Some((0..1600).map(|t| 0.3 * ((t + i) as f64 * 0.02).sin()).collect());
                u
            })
            .collect();
        Manifest::from_records(records).unwrap()
    }

    #[test]
    fn five_fold_cardinality() {
        let out = augment_corpus(&corpus(10), &pool(8, 6), &AugmentSpec::default(), Split::Train).unwrap();
        assert_eq!(out.manifest.len(), 50);
        assert_eq!(out.provenance.len(), 50);
        assert_eq!(out.manifest.records[0].id, "utt0#snr0");
        assert_eq!(out.manifest.records[4].id, "utt0#snr40");
    }

    #[test]
    fn five_levels_are_default() {
        assert_eq!(AugmentSpec::default().snr_levels_db, vec![0.0, 10.0, 20.0, 30.0, 40.0]);
    }

    #[test]
    fn noises_distinct_per_record_and_split_respected() {
        let p = pool(6, 5);
        let out = augment_corpus(&corpus(4), &p, &AugmentSpec::default(), Split::Test).unwrap();
        for chunk in out.provenance.chunks(5) {
            let used: HashSet<_> = chunk.iter().map(|p| p.noise.as_str()).collect();
            assert_eq!(used.len(), 5);
            assert!(used.iter().all(|n| n.starts_with("test/")));
        }
    }

    #[test]
    fn deterministic_for_seed() {
        let p = pool(8, 6);
        let spec = AugmentSpec {
            seed: 17,
            ..AugmentSpec::default()
        };
        let a = augment_corpus(&corpus(3), &p, &spec, Split::Train).unwrap();
        let b = augment_corpus(&corpus(3), &p, &spec, Split::Train).unwrap();
        assert_eq!(a.manifest, b.manifest);
        assert_eq!(a.provenance, b.provenance);
        let spec = AugmentSpec { seed: 18, ..spec };
        let c = augment_corpus(&corpus(3), &p, &spec, Split::Train).unwrap();
        assert_ne!(a.provenance, c.provenance);
    }

    #[test]
    fn pool_too_small() {
        let err = augment_corpus(&corpus(1), &pool(4, 6), &AugmentSpec::default(), Split::Train).unwrap_err();
        assert!(matches!(err, Error::Input(_)));
    }

    #[test]
    fn missing_audio_names_record() {
        let mut m = corpus(2);
        m.records[1].samples = None;
        let err = augment_corpus(&m, &pool(8, 6), &AugmentSpec::default(), Split::Train).unwrap_err();
        assert!(err.to_string().contains("utt1"));
    }

    #[test]
    fn overlapping_pools_rejected() {
        let n = noise("shared.wav", 1);
        assert!(NoisePool::new(vec![n.clone()], vec![n.clone()]).is_err());
        let renamed = NoiseFile {
            name: "other.wav".into(),
            ..n.clone()
        };
        assert!(NoisePool::new(vec![n], vec![renamed]).is_err());
    }

    #[test]
    fn mismatched_spec_rejected() {
        let spec = AugmentSpec {
            noises_per_clip: 3,
            ..AugmentSpec::default()
        };
        assert!(matches!(
            augment_corpus(&corpus(1), &pool(8, 6), &spec, Split::Train),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn fractional_level_ids() {
        assert_eq!(augmented_id("a", 7.5), "a#snr7.5");
        assert_eq!(augmented_id("a", -5.0), "a#snr-5");
    }
}
