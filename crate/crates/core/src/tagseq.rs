//! The TAGSEQ raster container.
//!
//! Layout: magic `TGSQ`, then little-endian `u32` version, `u32` frame count
//! `T`, `u32` height, `u32` width, a `u8` channel count, and finally
//! `T × C × H × W` little-endian `f32` values (frame-major, channels in
//! order, rows top to bottom). Tag sequences use two channels (horizontal
//! then vertical tags); displacement fields use two channels for the `x` and
//! `y` components; single images use one.

use crate::error::{Error, Result};
use crate::field::{ScalarField2D, Spacing, VectorField2D};

pub const MAGIC: [u8; 4] = *b"TGSQ";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 21;

/// Decoded container contents.
#[derive(Debug, Clone, PartialEq)]
pub struct Container {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<f32>,
}

fn read_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([bytes[at], bytes[at + 1], bytes[at + 2], bytes[at + 3]])
}

impl Container {
    fn plane(&self) -> usize {
        self.height * self.width
    }

    /// Values of channel `c` of frame `t`.
    pub fn channel(&self, t: usize, c: usize) -> &[f32] {
        let n = self.plane();
        let start = (t * self.channels + c) * n;
        &self.data[start..start + n]
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let expected = self.frames * self.channels * self.plane();
        if self.data.len() != expected {
            return Err(Error::shape(format!("{expected} values"), format!("{}", self.data.len())));
        }
        let dim = |v: usize| {
            u32::try_from(v).map_err(|_| Error::Format(format!("dimension {v} does not fit in u32")))
        };
        let channels = u8::try_from(self.channels)
            .map_err(|_| Error::Format(format!("{} channels do not fit in u8", self.channels)))?;
        let mut out = Vec::with_capacity(HEADER_LEN + 4 * self.data.len());
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&dim(self.frames)?.to_le_bytes());
        out.extend_from_slice(&dim(self.height)?.to_le_bytes());
        out.extend_from_slice(&dim(self.width)?.to_le_bytes());
        out.push(channels);
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        Ok(out)
    }

    /// Parses a container, validating the header against the payload size
    /// before allocating anything.
    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::Format(format!(
                "{} bytes is shorter than the {HEADER_LEN}-byte header",
                bytes.len()
            )));
        }
        if bytes[..4] != MAGIC {
            return Err(Error::Format(format!("bad magic {:?}", &bytes[..4])));
        }
        let version = read_u32(bytes, 4);
        if version != VERSION {
            return Err(Error::UnsupportedVersion {
                found: version,
                expected: VERSION,
            });
        }
        let frames = read_u32(bytes, 8) as usize;
        let height = read_u32(bytes, 12) as usize;
        let width = read_u32(bytes, 16) as usize;
        let channels = bytes[20] as usize;
        if frames == 0 || height < 2 || width < 2 {
            return Err(Error::Format(format!(
                "invalid dimensions {frames} frames of {height}x{width}"
            )));
        }
        if !(1..=2).contains(&channels) {
            return Err(Error::Format(format!("channel count must be 1 or 2, got {channels}")));
        }
        let n_values = frames
            .checked_mul(channels)
            .and_then(|v| v.checked_mul(height))
            .and_then(|v| v.checked_mul(width))
            .ok_or_else(|| Error::Format("dimensions overflow".into()))?;
        let payload = &bytes[HEADER_LEN..];
        if n_values.checked_mul(4) != Some(payload.len()) {
            return Err(Error::Format(format!(
                "payload holds {} bytes, header implies {n_values} f32 values",
                payload.len()
            )));
        }
        let data = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Ok(Self {
            frames,
            height,
            width,
            channels,
            data,
        })
    }

    fn check_fields_grid(shapes: impl Iterator<Item = (usize, usize)>) -> Result<(usize, usize, usize)> {
        let mut count = 0;
        let mut shape = None;
        for s in shapes {
            match shape {
                None => shape = Some(s),
                Some(first) if first != s => {
                    return Err(Error::shape(format!("{first:?}"), format!("{s:?}")));
                }
                _ => {}
            }
            count += 1;
        }
        let (h, w) = shape.ok_or_else(|| Error::InvalidInput("no frames to store".into()))?;
        Ok((count, h, w))
    }

    /// Packs channel groups of scalar fields; every inner slice is one frame.
    pub fn from_scalar_frames(frames: &[Vec<&ScalarField2D>]) -> Result<Self> {
        let channels = frames.first().map_or(0, Vec::len);
        if frames.iter().any(|f| f.len() != channels) {
            return Err(Error::InvalidInput("frames differ in channel count".into()));
        }
        let (_, height, width) = Self::check_fields_grid(frames.iter().flatten().map(|f| f.shape()))?;
        let data = frames
            .iter()
            .flatten()
            .flat_map(|f| f.data().iter().map(|&v| v as f32))
            .collect();
        Ok(Self {
            frames: frames.len(),
            height,
            width,
            channels,
            data,
        })
    }

    pub fn from_vector_fields(fields: &[&VectorField2D]) -> Result<Self> {
        let (frames, height, width) = Self::check_fields_grid(fields.iter().map(|f| f.shape()))?;
        let mut data = Vec::with_capacity(frames * 2 * height * width);
        for f in fields {
            data.extend(f.dx().iter().map(|&v| v as f32));
            data.extend(f.dy().iter().map(|&v| v as f32));
        }
        Ok(Self {
            frames,
            height,
            width,
            channels: 2,
            data,
        })
    }

    pub fn scalar_field(&self, t: usize, c: usize, spacing_mm: Spacing) -> Result<ScalarField2D> {
        self.check_index(t, c)?;
        let data = self.channel(t, c).iter().map(|&v| v as f64).collect();
        ScalarField2D::new(self.height, self.width, data, spacing_mm)
    }

    pub fn vector_field(&self, t: usize, spacing_mm: Spacing) -> Result<VectorField2D> {
        if self.channels != 2 {
            return Err(Error::Format(format!(
                "vector fields need 2 channels, container has {}",
                self.channels
            )));
        }
        self.check_index(t, 1)?;
        let to64 = |c: usize| self.channel(t, c).iter().map(|&v| v as f64).collect();
        VectorField2D::new(self.height, self.width, to64(0), to64(1), spacing_mm)
    }

    fn check_index(&self, t: usize, c: usize) -> Result<()> {
        if t >= self.frames || c >= self.channels {
            return Err(Error::InvalidInput(format!(
                "frame {t} channel {c} outside {} frames x {} channels",
                self.frames, self.channels
            )));
        }
        Ok(())
    }
}
