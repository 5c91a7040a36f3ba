//! The `.qgsm` wire format, version 1.
//!
//! ```text
//! offset  size  field
//!      0     4  magic "QGSM"
//!      4     1  version (1)
//!      5     4  n           u32 BE
//!      9     4  rate_num    u32 BE
//!     13     4  rate_den    u32 BE
//!     17     8  sigma2      f64 BE
//!     25     8  c2          f64 BE
//!     33     8  seed        u64 BE
//!     41   ...  payload
//! ```
//!
//! The payload holds the magnitude index in `ceil(log2 G)` bits followed by
//! the direction index in `ceil(log2 N)` bits, MSB first, zero-padded to a
//! byte boundary. `G` is the magnitude grid size and `N` the codeword count.

use crate::codebook::{codeword_count, MagnitudeGrid};
use crate::error::{Error, ParseError, Result};
use crate::estimator::QuantizedIndex;
use crate::theory::{ModelParams, Rate};

pub const MAGIC: [u8; 4] = *b"QGSM";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 41;
pub const FILE_EXTENSION: &str = "qgsm";

/// Public parameters shared by encoder and decoder.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StreamHeader {
    pub n: u32,
    pub rate: Rate,
    pub sigma2: f64,
    pub c2: f64,
    pub seed: u64,
}

impl StreamHeader {
    pub fn new(params: &ModelParams, seed: u64) -> Result<Self> {
        params.validate()?;
        let n = u32::try_from(params.n)
            .map_err(|_| Error::Usage(format!("n = {} does not fit the 32-bit header field", params.n)))?;
        Ok(StreamHeader {
            n,
            rate: params.rate,
            sigma2: params.sigma2,
            c2: params.c2,
            seed,
        })
    }

    pub fn params(&self) -> Result<ModelParams> {
        ModelParams::new(self.n as usize, self.rate, self.sigma2, self.c2)
    }

    /// Bit widths `(magnitude, direction)` of the payload.
    pub fn payload_widths(&self) -> Result<(u32, u32)> {
        let p = self.params()?;
        let grid = MagnitudeGrid::new(p.n, p.c2)?;
        let dir_bits = crate::codebook::ceil_log2(codeword_count(p.n, p.rate)?);
        Ok((grid.bits(), dir_bits))
    }

    pub fn payload_bits(&self) -> Result<u32> {
        self.payload_widths().map(|(m, d)| m + d)
    }
}

/// Nominal index cost `log2 c2 + (1/2) log2 n + nB`.
pub fn nominal_index_bits(params: &ModelParams) -> f64 {
    params.c2.log2() + 0.5 * (params.n as f64).log2() + params.n as f64 * params.rate.as_f64()
}

struct BitWriter {
    bytes: Vec<u8>,
    used: u32,
}

impl BitWriter {
    fn push(&mut self, value: u64, width: u32) {
        for k in (0..width).rev() {
            if self.used.is_multiple_of(8) {
                self.bytes.push(0);
            }
            let bit = ((value >> k) & 1) as u8;
            *self.bytes.last_mut().unwrap() |= bit << (7 - self.used % 8);
            self.used += 1;
        }
    }
}

struct BitReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl BitReader<'_> {
    fn take(&mut self, width: u32) -> u64 {
        let mut v = 0u64;
        for _ in 0..width {
            let bit = (self.bytes[self.pos / 8] >> (7 - self.pos % 8)) & 1;
            v = (v << 1) | bit as u64;
            self.pos += 1;
        }
        v
    }
}

/// Serializes a header and index pair.
pub fn pack(header: &StreamHeader, idx: &QuantizedIndex) -> Result<Vec<u8>> {
    let params = header.params()?;
    if idx.seed != header.seed {
        return Err(Error::Usage(format!(
            "index refers to codebook seed {} but the header carries {}",
            idx.seed, header.seed
        )));
    }
    idx.validate(&params)?;
    let (mag_bits, dir_bits) = header.payload_widths()?;
    let mut out = Vec::with_capacity(HEADER_LEN + 16);
    out.extend_from_slice(&MAGIC);
    out.push(VERSION);
    out.extend_from_slice(&header.n.to_be_bytes());
    out.extend_from_slice(&header.rate.num().to_be_bytes());
    out.extend_from_slice(&header.rate.den().to_be_bytes());
    out.extend_from_slice(&header.sigma2.to_be_bytes());
    out.extend_from_slice(&header.c2.to_be_bytes());
    out.extend_from_slice(&header.seed.to_be_bytes());
    let mut w = BitWriter { bytes: out, used: 0 };
    w.push(idx.mag_index, mag_bits);
    w.push(idx.dir_index, dir_bits);
    Ok(w.bytes)
}

fn be_u32(b: &[u8], at: usize) -> u32 {
    u32::from_be_bytes(b[at..at + 4].try_into().unwrap())
}

fn be_u64(b: &[u8], at: usize) -> u64 {
    u64::from_be_bytes(b[at..at + 8].try_into().unwrap())
}

fn invalid(field: &'static str, reason: impl Into<String>) -> ParseError {
    ParseError::InvalidHeader {
        field,
        reason: reason.into(),
    }
}

/// Parses a `.qgsm` stream back into its header and index.
pub fn unpack(bytes: &[u8]) -> std::result::Result<(StreamHeader, QuantizedIndex), ParseError> {
    let truncated = |needed| ParseError::Truncated {
        needed,
        got: bytes.len(),
    };
    if bytes.len() < MAGIC.len() {
        return Err(truncated(HEADER_LEN));
    }
    let magic: [u8; 4] = bytes[..4].try_into().unwrap();
    if magic != MAGIC {
        return Err(ParseError::BadMagic(magic));
    }
    if bytes.len() < 5 {
        return Err(truncated(HEADER_LEN));
    }
    if bytes[4] != VERSION {
        return Err(ParseError::UnsupportedVersion(bytes[4]));
    }
    if bytes.len() < HEADER_LEN {
        return Err(truncated(HEADER_LEN));
    }
    let n = be_u32(bytes, 5);
    let num = be_u32(bytes, 9);
    let den = be_u32(bytes, 13);
    let sigma2 = f64::from_bits(be_u64(bytes, 17));
    let c2 = f64::from_bits(be_u64(bytes, 25));
    let seed = be_u64(bytes, 33);
    if n == 0 {
        return Err(invalid("n", "must be at least 1"));
    }
    let rate = Rate::new(num, den).map_err(|e| invalid("rate", e.to_string()))?;
    if (rate.num(), rate.den()) != (num, den) {
        return Err(invalid("rate", format!("{num}/{den} is not in lowest terms")));
    }
    if !(sigma2.is_finite() && sigma2 > 0.0) {
        return Err(invalid("sigma2", format!("must be positive, got {sigma2}")));
    }
    if !(c2.is_finite() && c2 > 0.0) {
        return Err(invalid("c2", format!("must be positive, got {c2}")));
    }
    let header = StreamHeader {
        n,
        rate,
        sigma2,
        c2,
        seed,
    };
    let grid = MagnitudeGrid::new(n as usize, c2).map_err(|e| invalid("c2", e.to_string()))?;
    let count = codeword_count(n as usize, rate).map_err(|e| invalid("rate", e.to_string()))?;
    let (mag_bits, dir_bits) = (grid.bits(), crate::codebook::ceil_log2(count));
    let payload_bits = (mag_bits + dir_bits) as usize;
    let total = HEADER_LEN + payload_bits.div_ceil(8);
    if bytes.len() < total {
        return Err(truncated(total));
    }
    if bytes.len() > total {
        return Err(ParseError::TrailingBytes(bytes.len() - total));
    }
    let payload = &bytes[HEADER_LEN..];
    let mut r = BitReader {
        bytes: payload,
        pos: 0,
    };
    let mag_index = r.take(mag_bits);
    let dir_index = r.take(dir_bits);
    if r.take((payload.len() * 8 - payload_bits) as u32) != 0 {
        return Err(ParseError::NonzeroPadding);
    }
    if mag_index >= grid.size() {
        return Err(ParseError::IndexOutOfRange {
            field: "magnitude",
            index: mag_index,
            size: grid.size(),
        });
    }
    if dir_index >= count {
        return Err(ParseError::IndexOutOfRange {
            field: "direction",
            index: dir_index,
            size: count,
        });
    }
    Ok((
        header,
        QuantizedIndex {
            mag_index,
            dir_index,
            seed,
        },
    ))
}
