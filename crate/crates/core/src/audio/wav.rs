use std::io::{Cursor, Read};
use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use super::AudioClip;
use crate::error::{Error, Result};
use crate::fsutil::write_atomic;

const SCALE: f64 = 32768.0;

fn format_err(e: hound::Error) -> Error {
    Error::Format(e.to_string())
}

/// Decodes 16-bit PCM mono WAV data. Samples are scaled by 1/32768.
pub fn decode_wav<R: Read>(reader: R) -> Result<AudioClip> {
    let reader = WavReader::new(reader).map_err(format_err)?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(Error::Format(format!(
            "expected mono audio, found {} channels",
            spec.channels
        )));
    }
    if spec.sample_format != SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(Error::Format(format!(
            "expected 16-bit PCM, found {:?} with {} bits",
            spec.sample_format, spec.bits_per_sample
        )));
    }
    let samples = reader
        .into_samples::<i16>()
        .map(|s| s.map(|v| f64::from(v) / SCALE))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(format_err)?;
    if samples.is_empty() {
        return Err(Error::Format("empty data chunk".into()));
    }
    AudioClip::new(samples, spec.sample_rate)
}

pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioClip> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    decode_wav(std::io::BufReader::new(file)).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

/// Encodes a clip as 16-bit PCM mono WAV, saturating at the i16 range.
pub fn encode_wav(clip: &AudioClip) -> Vec<u8> {
    let spec = WavSpec {
        channels: 1,
        sample_rate: clip.sample_rate,
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let mut buf = Cursor::new(Vec::new());
    {
        let mut w = WavWriter::new(&mut buf, spec).expect("in-memory writer");
        for &s in &clip.samples {
            let q = (s * SCALE).round().clamp(-SCALE, SCALE - 1.0) as i16;
            w.write_sample(q).expect("in-memory write");
        }
        w.finalize().expect("in-memory finalize");
    }
    buf.into_inner()
}

pub fn write_wav(clip: &AudioClip, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path, &encode_wav(clip))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone(secs: f64, hz: f64) -> AudioClip {
        let n = (secs * 16_000.0) as usize;
        let samples = (0..n)
            .map(|i| 0.8 * (2.0 * std::f64::consts::PI * hz * i as f64 / 16_000.0).sin())
            .collect();
        AudioClip::new(samples, 16_000).unwrap()
    }

    #[test]
    fn tone_round_trip_within_quantization() {
        let clip = tone(1.0, 440.0);
        let back = decode_wav(Cursor::new(encode_wav(&clip))).unwrap();
        assert_eq!(back.sample_rate, 16_000);
        assert_eq!(back.len(), clip.len());
        let worst = clip
            .samples
            .iter()
            .zip(&back.samples)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(worst <= 1.0 / 32768.0, "max error {worst}");
    }

    #[test]
    fn full_scale_saturates() {
        let clip = AudioClip::new(vec![1.0, -1.0], 16_000).unwrap();
        let back = decode_wav(Cursor::new(encode_wav(&clip))).unwrap();
        assert!((back.samples[0] - 1.0).abs() <= 1.0 / 32768.0);
        assert_eq!(back.samples[1], -1.0);
    }

    fn raw_wav(channels: u16, bits: u16, format: SampleFormat, n: usize) -> Vec<u8> {
        let spec = WavSpec {
            channels,
            sample_rate: 16_000,
            bits_per_sample: bits,
            sample_format: format,
        };
        let mut buf = Cursor::new(Vec::new());
        {
            let mut w = WavWriter::new(&mut buf, spec).unwrap();
            for _ in 0..n * channels as usize {
                match (format, bits) {
                    (SampleFormat::Float, _) => w.write_sample(0.1f32).unwrap(),
                    (_, 8) => w.write_sample(1i8).unwrap(),
                    (_, 16) => w.write_sample(1i16).unwrap(),
                    _ => w.write_sample(1i32).unwrap(),
                }
            }
            w.finalize().unwrap();
        }
        buf.into_inner()
    }

    #[test]
    fn rejects_stereo() {
        let err = decode_wav(Cursor::new(raw_wav(2, 16, SampleFormat::Int, 10))).unwrap_err();
        assert!(matches!(err, Error::Format(_)));
    }

    #[test]
    fn rejects_other_encodings() {
        for (bits, fmt) in [
            (8, SampleFormat::Int),
            (24, SampleFormat::Int),
            (32, SampleFormat::Float),
        ] {
            let err = decode_wav(Cursor::new(raw_wav(1, bits, fmt, 10))).unwrap_err();
            assert!(matches!(err, Error::Format(_)), "{bits} bits");
        }
    }

    #[test]
    fn rejects_empty_data_chunk() {
        let err = decode_wav(Cursor::new(raw_wav(1, 16, SampleFormat::Int, 0))).unwrap_err();
        assert!(matches!(err, Error::Format(_)));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.wav");
        let clip = tone(0.1, 1000.0);
        write_wav(&clip, &path).unwrap();
        assert_eq!(read_wav(&path).unwrap().len(), clip.len());
    }
}
