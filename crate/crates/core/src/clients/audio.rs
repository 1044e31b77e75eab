//! Minimal RIFF/WAVE (PCM16) container handling.

use super::ClientError;

/// Chunk id used by the offline mocks to carry the spoken transcript.
const NOTE_CHUNK: &[u8; 4] = b"note";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AudioClip {
    pub sample_rate: u32,
    pub channels: u16,
    pub bits_per_sample: u16,
    /// Full WAV file bytes, header included.
    pub bytes: Vec<u8>,
    data_len: u32,
}

impl AudioClip {
    /// Parses and validates a WAV payload.
    pub fn from_wav(bytes: Vec<u8>) -> Result<Self, ClientError> {
        let bad = |m: &str| ClientError::InvalidAudio(m.to_string());
        if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
            return Err(bad("missing RIFF/WAVE magic"));
        }
        let mut fmt = None;
        let mut data_len = None;
        let mut pos = 12;
        while pos + 8 <= bytes.len() {
            let id = &bytes[pos..pos + 4];
            let len = u32::from_le_bytes(bytes[pos + 4..pos + 8].try_into().unwrap()) as usize;
            let body = pos + 8;
            if body + len > bytes.len() {
                return Err(bad("truncated chunk"));
            }
            match id {
                b"fmt " => {
                    if len < 16 {
                        return Err(bad("short fmt chunk"));
                    }
                    let f = &bytes[body..body + 16];
                    let format = u16::from_le_bytes([f[0], f[1]]);
                    let channels = u16::from_le_bytes([f[2], f[3]]);
                    let rate = u32::from_le_bytes([f[4], f[5], f[6], f[7]]);
                    let bits = u16::from_le_bytes([f[14], f[15]]);
                    if format != 1 || bits != 16 {
                        return Err(bad("only PCM16 is supported"));
                    }
                    if channels == 0 || rate == 0 {
                        return Err(bad("zero channels or sample rate"));
                    }
                    fmt = Some((channels, rate, bits));
                }
                b"data" => data_len = Some(len as u32),
                _ => {}
            }
            pos = body + len + (len & 1);
        }
        let (channels, sample_rate, bits_per_sample) = fmt.ok_or_else(|| bad("no fmt chunk"))?;
        let data_len = data_len.ok_or_else(|| bad("no data chunk"))?;
        let clip = Self {
            sample_rate,
            channels,
            bits_per_sample,
            bytes,
            data_len,
        };
        if clip.duration_secs() <= 0.0 {
            return Err(bad("empty audio"));
        }
        Ok(clip)
    }

    pub fn duration_secs(&self) -> f64 {
        let frame = self.channels as f64 * (self.bits_per_sample / 8) as f64;
        self.data_len as f64 / (frame * self.sample_rate as f64)
    }

    /// Mono PCM16 silence.
    pub fn silence(duration_secs: f64, sample_rate: u32) -> Self {
        Self::build(duration_secs, sample_rate, None)
    }

    /// Silence carrying a text note chunk, read back by [`AudioClip::note`].
    pub fn silence_with_note(duration_secs: f64, sample_rate: u32, note: &str) -> Self {
        Self::build(duration_secs, sample_rate, Some(note))
    }

    pub fn note(&self) -> Option<String> {
        let mut pos = 12;
        while pos + 8 <= self.bytes.len() {
            let len = u32::from_le_bytes(self.bytes[pos + 4..pos + 8].try_into().unwrap()) as usize;
            if &self.bytes[pos..pos + 4] == NOTE_CHUNK {
                return String::from_utf8(self.bytes[pos + 8..pos + 8 + len].to_vec()).ok();
            }
            pos += 8 + len + (len & 1);
        }
        None
    }

    fn build(duration_secs: f64, sample_rate: u32, note: Option<&str>) -> Self {
        let frames = (duration_secs * sample_rate as f64).round().max(1.0) as u32;
        let data_len = frames * 2;
        let mut out = Vec::with_capacity(44 + data_len as usize);
        out.extend_from_slice(b"RIFF");
        out.extend_from_slice(&0u32.to_le_bytes());
        out.extend_from_slice(b"WAVE");
        out.extend_from_slice(b"fmt ");
        out.extend_from_slice(&16u32.to_le_bytes());
        out.extend_from_slice(&1u16.to_le_bytes());
        out.extend_from_slice(&1u16.to_le_bytes());
        out.extend_from_slice(&sample_rate.to_le_bytes());
        out.extend_from_slice(&(sample_rate * 2).to_le_bytes());
        out.extend_from_slice(&2u16.to_le_bytes());
        out.extend_from_slice(&16u16.to_le_bytes());
        if let Some(note) = note {
            let body = note.as_bytes();
            out.extend_from_slice(NOTE_CHUNK);
            out.extend_from_slice(&(body.len() as u32).to_le_bytes());
            out.extend_from_slice(body);
            if body.len() % 2 == 1 {
                out.push(0);
            }
        }
        out.extend_from_slice(b"data");
        out.extend_from_slice(&data_len.to_le_bytes());
        out.resize(out.len() + data_len as usize, 0);
        let riff_len = (out.len() - 8) as u32;
        out[4..8].copy_from_slice(&riff_len.to_le_bytes());
        Self {
            sample_rate,
            channels: 1,
            bits_per_sample: 16,
            bytes: out,
            data_len,
        }
    }
}
