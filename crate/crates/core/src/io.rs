//! File formats: the JOTL tensor container and binary PGM frame export.
//!
//! JOTL layout, all integers little-endian:
//!
//! | bytes        | field                                               |
//! |--------------|-----------------------------------------------------|
//! | 4            | magic `JOTL`                                        |
//! | 2            | version, `u16` = 1                                  |
//! | 1            | dtype: 0 complex64, 1 complex128, 2 real64          |
//! | 1            | ndims                                               |
//! | 4 × ndims    | dims, `u32` each                                    |
//! | …            | payload, row-major (last dim fastest), re/im interleaved |

use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::{Array3, Array4};
use num_complex::{Complex32, Complex64};
use thiserror::Error;

use crate::acquisition::{CoilSensitivities, KSpaceData, MaskPattern, SamplingMask};
use crate::error::Error as CoreError;
use crate::tensor::DynamicImage;

pub const MAGIC: [u8; 4] = *b"JOTL";
pub const VERSION: u16 = 1;

#[derive(Debug, Error)]
pub enum JotlError {
    #[error("bad magic {0:?}, expected \"JOTL\"")]
    BadMagic([u8; 4]),
    #[error("unsupported JOTL version {0}")]
    UnsupportedVersion(u16),
    #[error("unsupported JOTL dtype {0}")]
    UnsupportedDtype(u8),
    #[error("truncated JOTL data: expected {expected} bytes, found {actual}")]
    Truncated { expected: usize, actual: usize },
    #[error("JOTL payload has {actual} bytes, expected {expected}")]
    TrailingBytes { expected: usize, actual: usize },
    #[error("JOTL shape error: {0}")]
    Shape(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Invalid(#[from] CoreError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dtype {
    Complex64 = 0,
    Complex128 = 1,
    Real64 = 2,
}

impl Dtype {
    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Dtype::Complex64),
            1 => Some(Dtype::Complex128),
            2 => Some(Dtype::Real64),
            _ => None,
        }
    }

    pub fn size(self) -> usize {
        match self {
            Dtype::Complex64 | Dtype::Real64 => 8,
            Dtype::Complex128 => 16,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum JotlData {
    Complex64(Vec<Complex32>),
    Complex128(Vec<Complex64>),
    Real64(Vec<f64>),
}

impl JotlData {
    pub fn dtype(&self) -> Dtype {
        match self {
            JotlData::Complex64(_) => Dtype::Complex64,
            JotlData::Complex128(_) => Dtype::Complex128,
            JotlData::Real64(_) => Dtype::Real64,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            JotlData::Complex64(v) => v.len(),
            JotlData::Complex128(v) => v.len(),
            JotlData::Real64(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A typed n-dimensional tensor as stored in a JOTL file.
#[derive(Clone, Debug, PartialEq)]
pub struct JotlTensor {
    pub dims: Vec<usize>,
    pub data: JotlData,
}

fn element_count(dims: &[usize]) -> Option<usize> {
    dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d))
}

impl JotlTensor {
    pub fn new(dims: Vec<usize>, data: JotlData) -> Result<Self, JotlError> {
        if dims.len() > u8::MAX as usize {
            return Err(JotlError::Shape(format!("{} dimensions exceed 255", dims.len())));
        }
        if let Some(&d) = dims.iter().find(|&&d| d > u32::MAX as usize) {
            return Err(JotlError::Shape(format!("dimension {d} exceeds u32")));
        }
        let count = element_count(&dims).ok_or_else(|| JotlError::Shape("element count overflows".into()))?;
        if count != data.len() {
            return Err(JotlError::Shape(format!("dims {dims:?} hold {count} elements, data has {}", data.len())));
        }
        Ok(Self { dims, data })
    }

    pub fn encode(&self) -> Vec<u8> {
        let dtype = self.data.dtype();
        let mut out = Vec::with_capacity(8 + 4 * self.dims.len() + self.data.len() * dtype.size());
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(dtype as u8);
        out.push(self.dims.len() as u8);
        for &d in &self.dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        match &self.data {
            JotlData::Complex64(v) => v.iter().for_each(|z| {
                out.extend_from_slice(&z.re.to_le_bytes());
                out.extend_from_slice(&z.im.to_le_bytes());
            }),
            JotlData::Complex128(v) => v.iter().for_each(|z| {
                out.extend_from_slice(&z.re.to_le_bytes());
                out.extend_from_slice(&z.im.to_le_bytes());
            }),
            JotlData::Real64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, JotlError> {
        if bytes.len() < 8 {
            // A short file with the wrong leading bytes is a magic error
            // rather than truncation.
            if bytes.len() >= 4 && bytes[..4] != MAGIC {
                return Err(JotlError::BadMagic(bytes[..4].try_into().expect("4 bytes")));
            }
            return Err(JotlError::Truncated {
                expected: 8,
                actual: bytes.len(),
            });
        }
        let magic: [u8; 4] = bytes[..4].try_into().expect("4 bytes");
        if magic != MAGIC {
            return Err(JotlError::BadMagic(magic));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != VERSION {
            return Err(JotlError::UnsupportedVersion(version));
        }
        let dtype = Dtype::from_code(bytes[6]).ok_or(JotlError::UnsupportedDtype(bytes[6]))?;
        let ndims = bytes[7] as usize;
        let header = 8 + 4 * ndims;
        if bytes.len() < header {
            return Err(JotlError::Truncated {
                expected: header,
                actual: bytes.len(),
            });
        }
        let dims: Vec<usize> = bytes[8..header]
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().expect("4 bytes")) as usize)
            .collect();
        let count = element_count(&dims).ok_or_else(|| JotlError::Shape("element count overflows".into()))?;
        let expected = count
            .checked_mul(dtype.size())
            .and_then(|p| p.checked_add(header))
            .ok_or_else(|| JotlError::Shape("payload size overflows".into()))?;
        if bytes.len() < expected {
            return Err(JotlError::Truncated {
                expected,
                actual: bytes.len(),
            });
        }
        if bytes.len() > expected {
            return Err(JotlError::TrailingBytes {
                expected,
                actual: bytes.len(),
            });
        }
        let payload = &bytes[header..];
        let data = match dtype {
            Dtype::Complex64 => JotlData::Complex64(
                payload
                    .chunks_exact(8)
                    .map(|c| {
                        Complex32::new(
                            f32::from_le_bytes(c[..4].try_into().expect("4 bytes")),
                            f32::from_le_bytes(c[4..].try_into().expect("4 bytes")),
                        )
                    })
                    .collect(),
            ),
            Dtype::Complex128 => JotlData::Complex128(
                payload
                    .chunks_exact(16)
                    .map(|c| {
                        Complex64::new(
                            f64::from_le_bytes(c[..8].try_into().expect("8 bytes")),
                            f64::from_le_bytes(c[8..].try_into().expect("8 bytes")),
                        )
                    })
                    .collect(),
            ),
            Dtype::Real64 => JotlData::Real64(
                payload
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                    .collect(),
            ),
        };
        Ok(Self { dims, data })
    }

    fn expect_ndims(&self, n: usize, what: &str) -> Result<(), JotlError> {
        if self.dims.len() != n {
            return Err(JotlError::Shape(format!("{what} needs {n} dimensions, file has {:?}", self.dims)));
        }
        Ok(())
    }

    /// Complex values widened to double precision; real data gets a zero
    /// imaginary part.
    pub fn to_complex128(&self) -> Vec<Complex64> {
        match &self.data {
            JotlData::Complex64(v) => v.iter().map(|z| Complex64::new(z.re as f64, z.im as f64)).collect(),
            JotlData::Complex128(v) => v.clone(),
            JotlData::Real64(v) => v.iter().map(|&x| Complex64::new(x, 0.0)).collect(),
        }
    }

    pub fn from_image(x: &DynamicImage) -> Self {
        let (h, w, t) = x.dims();
        Self {
            dims: vec![h, w, t],
            data: JotlData::Complex128(x.as_slice().to_vec()),
        }
    }

    pub fn to_image(&self) -> Result<DynamicImage, JotlError> {
        self.expect_ndims(3, "image")?;
        let arr = Array3::from_shape_vec((self.dims[0], self.dims[1], self.dims[2]), self.to_complex128())
            .map_err(|e| JotlError::Shape(e.to_string()))?;
        Ok(DynamicImage::new(arr)?)
    }

    pub fn from_real(x: &Array3<f64>) -> Self {
        let (h, w, t) = x.dim();
        Self {
            dims: vec![h, w, t],
            data: JotlData::Real64(x.as_standard_layout().iter().copied().collect()),
        }
    }

    pub fn from_kspace(b: &KSpaceData) -> Self {
        let (c, h, w, t) = b.dims();
        Self {
            dims: vec![c, h, w, t],
            data: JotlData::Complex128(b.samples().iter().copied().collect()),
        }
    }

    pub fn to_kspace(&self, mask: &SamplingMask) -> Result<KSpaceData, JotlError> {
        self.expect_ndims(4, "k-space")?;
        let d = &self.dims;
        let arr = Array4::from_shape_vec((d[0], d[1], d[2], d[3]), self.to_complex128())
            .map_err(|e| JotlError::Shape(e.to_string()))?;
        Ok(KSpaceData::new(arr, mask)?)
    }

    pub fn from_mask(mask: &SamplingMask) -> Self {
        Self::from_real(&mask.to_real())
    }

    /// Reads a {0,1} mask. Generator metadata is not stored in the file, so
    /// the pattern is reported as given and the nominal rate is the measured one.
    pub fn to_mask(&self, pattern: MaskPattern) -> Result<SamplingMask, JotlError> {
        self.expect_ndims(3, "mask")?;
        let JotlData::Real64(v) = &self.data else {
            return Err(JotlError::Shape("mask must be real64".into()));
        };
        if let Some(bad) = v.iter().find(|&&x| x != 0.0 && x != 1.0) {
            return Err(JotlError::Shape(format!("mask value {bad} is not 0 or 1")));
        }
        let bits = Array3::from_shape_vec((self.dims[0], self.dims[1], self.dims[2]), v.iter().map(|&x| x == 1.0).collect())
            .map_err(|e| JotlError::Shape(e.to_string()))?;
        let mut mask = SamplingMask::from_bits(bits, pattern, 0, 1.0)?;
        mask.nominal_accel = mask.measured_accel();
        Ok(mask)
    }

    pub fn from_csm(csm: &CoilSensitivities) -> Self {
        let (c, h, w) = csm.maps().dim();
        Self {
            dims: vec![c, h, w],
            data: JotlData::Complex128(csm.maps().iter().copied().collect()),
        }
    }

    pub fn to_csm(&self) -> Result<CoilSensitivities, JotlError> {
        self.expect_ndims(3, "coil maps")?;
        let arr = Array3::from_shape_vec((self.dims[0], self.dims[1], self.dims[2]), self.to_complex128())
            .map_err(|e| JotlError::Shape(e.to_string()))?;
        Ok(CoilSensitivities::new(arr)?)
    }
}

pub fn save_jotl(path: impl AsRef<Path>, tensor: &JotlTensor) -> Result<(), JotlError> {
    let mut file = fs::File::create(path)?;
    file.write_all(&tensor.encode())?;
    Ok(())
}

pub fn load_jotl(path: impl AsRef<Path>) -> Result<JotlTensor, JotlError> {
    JotlTensor::decode(&fs::read(path)?)
}

#[derive(Debug, Error)]
pub enum PgmError {
    #[error("frame {index} out of range for {frames} frames")]
    FrameOutOfRange { index: usize, frames: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// 8-bit binary PGM of frame `t`'s magnitude, scaled so the whole tensor's
/// maximum magnitude maps to 255.
pub fn encode_frame_pgm(x: &DynamicImage, t: usize) -> Result<Vec<u8>, PgmError> {
    let (h, w, frames) = x.dims();
    if t >= frames {
        return Err(PgmError::FrameOutOfRange { index: t, frames });
    }
    let peak = x.data().iter().map(|z| z.norm()).fold(0.0, f64::max);
    let scale = if peak > 0.0 { 255.0 / peak } else { 0.0 };
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    out.reserve(h * w);
    for r in 0..h {
        for c in 0..w {
            let v = (x.data()[[r, c, t]].norm() * scale).round().clamp(0.0, 255.0);
            out.push(v as u8);
        }
    }
    Ok(out)
}

pub fn export_frame_pgm(x: &DynamicImage, t: usize, path: impl AsRef<Path>) -> Result<(), PgmError> {
    let bytes = encode_frame_pgm(x, t)?;
    fs::write(path, bytes)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout() {
        let t = JotlTensor::new(vec![2, 3], JotlData::Real64(vec![0.0; 6])).unwrap();
        let bytes = t.encode();
        assert_eq!(&bytes[..4], b"JOTL");
        assert_eq!(&bytes[4..6], &[1, 0]);
        assert_eq!(bytes[6], 2);
        assert_eq!(bytes[7], 2);
        assert_eq!(&bytes[8..16], &[2, 0, 0, 0, 3, 0, 0, 0]);
        assert_eq!(bytes.len(), 16 + 48);
    }

    #[test]
    fn complex64_payload_is_interleaved_f32() {
        let t = JotlTensor::new(vec![1], JotlData::Complex64(vec![Complex32::new(1.5, -2.0)])).unwrap();
        let bytes = t.encode();
        assert_eq!(&bytes[12..16], &1.5f32.to_le_bytes());
        assert_eq!(&bytes[16..20], &(-2.0f32).to_le_bytes());
    }

    #[test]
    fn distinct_corruption_errors() {
        let t = JotlTensor::new(vec![4, 4, 4], JotlData::Complex128(vec![Complex64::new(1.0, 2.0); 64])).unwrap();
        let good = t.encode();
        assert_eq!(JotlTensor::decode(&good).unwrap(), t);

        let mut bad_magic = good.clone();
        bad_magic[0] = b'X';
        assert!(matches!(JotlTensor::decode(&bad_magic), Err(JotlError::BadMagic(_))));

        let short = &good[..good.len() - 5];
        match JotlTensor::decode(short) {
            Err(JotlError::Truncated { expected, actual }) => {
                assert_eq!(expected, good.len());
                assert_eq!(actual, good.len() - 5);
            }
            other => panic!("{other:?}"),
        }

        let mut bad_version = good.clone();
        bad_version[4] = 2;
        assert!(matches!(JotlTensor::decode(&bad_version), Err(JotlError::UnsupportedVersion(2))));

        let mut bad_dtype = good.clone();
        bad_dtype[6] = 9;
        assert!(matches!(JotlTensor::decode(&bad_dtype), Err(JotlError::UnsupportedDtype(9))));

        let mut long = good;
        long.push(0);
        assert!(matches!(JotlTensor::decode(&long), Err(JotlError::TrailingBytes { .. })));
    }

    #[test]
    fn shape_must_match_data() {
        assert!(JotlTensor::new(vec![2, 2], JotlData::Real64(vec![0.0; 3])).is_err());
    }

    #[test]
    fn pgm_format() {
        let mut x = DynamicImage::zeros(2, 3, 2).into_data();
        x[[1, 2, 1]] = Complex64::new(0.0, 4.0);
        x[[0, 1, 1]] = Complex64::new(2.0, 0.0);
        let img = DynamicImage::new(x).unwrap();
        let bytes = encode_frame_pgm(&img, 1).unwrap();
        let header = b"P5\n3 2\n255\n";
        assert_eq!(&bytes[..header.len()], header);
        assert_eq!(&bytes[header.len()..], &[0, 128, 0, 0, 0, 255]);
        let zero = encode_frame_pgm(&DynamicImage::zeros(2, 2, 1), 0).unwrap();
        assert!(zero[zero.len() - 4..].iter().all(|&b| b == 0));
        assert!(matches!(encode_frame_pgm(&img, 2), Err(PgmError::FrameOutOfRange { .. })));
    }

    #[test]
    fn mask_round_trip() {
        let mask = crate::acquisition::make_vds_mask(8, 8, 2, 2.0, 1).unwrap();
        let back = JotlTensor::decode(&JotlTensor::from_mask(&mask).encode())
            .unwrap()
            .to_mask(MaskPattern::Vds)
            .unwrap();
        assert_eq!(back.bits(), mask.bits());
    }
}
