//! Seed-derived codebooks and the exhaustive direction search.
//!
//! The magnitude codebook is the grid `{k / sqrt(n) : k = 1..ceil(c^2 sqrt(n))}`
//! of squared per-coordinate magnitudes. The direction codebook holds
//! `max(1, floor(2^{nB}))` unit vectors; codeword `i` is regenerated from
//! `(seed, i, n)` whenever it is needed, so nothing is stored.

pub mod fastmath;
pub mod rng;

use std::ops::Range;

use num_bigint::BigUint;
use rayon::prelude::*;

use crate::error::{domain, Error, Result};
use crate::theory::{Rate, Vector};

/// Upper limit on `n * B` for indexable codebooks.
pub const MAX_TOTAL_BITS: u32 = 62;

/// Codewords scanned by one parallel task.
const TASK_CODEWORDS: u64 = 2048;
/// Codewords generated per stream fill inside a task.
const FILL_CODEWORDS: u64 = 128;

/// `ceil(log2(m))`, with 0 for `m <= 1`.
pub fn ceil_log2(m: u64) -> u32 {
    if m <= 1 {
        0
    } else {
        64 - (m - 1).leading_zeros()
    }
}

fn capacity_error(n: usize, rate: Rate) -> Error {
    Error::Capacity {
        n,
        rate: rate.to_string(),
        n_rate: n as f64 * rate.as_f64(),
        limit: MAX_TOTAL_BITS,
    }
}

/// `max(1, floor(2^{nB}))`, computed exactly from the rational `nB`.
pub fn codeword_count(n: usize, rate: Rate) -> Result<u64> {
    let (p, q) = rate.total_bits(n);
    if p > MAX_TOTAL_BITS as u128 * q {
        return Err(capacity_error(n, rate));
    }
    if q == 1 {
        return Ok(1u64 << p);
    }
    // floor(2^{p/q}) is the integer q-th root of 2^p.
    let root = (BigUint::from(1u32) << (p as usize)).nth_root(q as u32);
    let count: u64 = root.try_into().expect("root below 2^62");
    Ok(count.max(1))
}

/// Grid of candidate squared magnitudes with spacing `1/sqrt(n)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MagnitudeGrid {
    n: usize,
    c2: f64,
    size: u64,
    sqrt_n: f64,
}

/// Builds the magnitude grid for dimension `n` and squared radius `c2`.
pub fn magnitude_grid(n: usize, c2: f64) -> Result<MagnitudeGrid> {
    MagnitudeGrid::new(n, c2)
}

impl MagnitudeGrid {
    pub fn new(n: usize, c2: f64) -> Result<Self> {
        if n == 0 {
            return Err(domain("n", "must be at least 1"));
        }
        if !(c2.is_finite() && c2 > 0.0) {
            return Err(domain("c2", format!("must be positive and finite, got {c2}")));
        }
        let sqrt_n = (n as f64).sqrt();
        let raw = (c2 * sqrt_n).ceil();
        if raw >= (1u64 << 63) as f64 {
            return Err(domain("c2", "grid has more than 2^63 points"));
        }
        Ok(MagnitudeGrid {
            n,
            c2,
            size: (raw as u64).max(1),
            sqrt_n,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn c2(&self) -> f64 {
        self.c2
    }

    pub fn size(&self) -> u64 {
        self.size
    }

    /// Bits needed to transmit an index into this grid.
    pub fn bits(&self) -> u32 {
        ceil_log2(self.size)
    }

    #[inline]
    fn value(&self, index: u64) -> f64 {
        (index + 1) as f64 / self.sqrt_n
    }

    /// Iterates over the grid values in increasing order.
    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.size).map(|i| self.value(i))
    }

    /// Index of the grid value nearest `bhat2`; ties go to the lower index
    /// and values outside the grid clamp to its ends.
    pub fn encode(&self, bhat2: f64) -> Result<u64> {
        if !bhat2.is_finite() {
            return Err(domain("bhat2", format!("must be finite, got {bhat2}")));
        }
        let last = self.size - 1;
        if bhat2 <= self.value(0) {
            return Ok(0);
        }
        if bhat2 >= self.value(last) {
            return Ok(last);
        }
        let guess = (bhat2 * self.sqrt_n - 1.0).floor().max(0.0) as u64;
        let lo = guess.saturating_sub(1);
        let hi = (guess + 2).min(last);
        let mut best = lo;
        let mut best_gap = (self.value(lo) - bhat2).abs();
        for k in lo + 1..=hi {
            let gap = (self.value(k) - bhat2).abs();
            if gap < best_gap {
                best = k;
                best_gap = gap;
            }
        }
        Ok(best)
    }

    /// Returns the `index`-th grid value, `(index + 1) / sqrt(n)`.
    pub fn decode(&self, index: u64) -> Result<f64> {
        if index >= self.size {
            return Err(Error::Usage(format!(
                "magnitude index {index} out of range for grid of size {}",
                self.size
            )));
        }
        Ok(self.value(index))
    }
}

pub fn encode_magnitude(bhat2: f64, grid: &MagnitudeGrid) -> Result<u64> {
    grid.encode(bhat2)
}

pub fn decode_magnitude(index: u64, grid: &MagnitudeGrid) -> Result<f64> {
    grid.decode(index)
}

#[inline(always)]
fn lane_sum(a: &[f64], b: &[f64], term: impl Fn(f64, f64) -> f64) -> f64 {
    let mut acc = [0.0f64; 8];
    let mut ac = a.chunks_exact(8);
    let mut bc = b.chunks_exact(8);
    for (xs, gs) in (&mut ac).zip(&mut bc) {
        for l in 0..8 {
            acc[l] += term(xs[l], gs[l]);
        }
    }
    for (l, (x, g)) in ac.remainder().iter().zip(bc.remainder()).enumerate() {
        acc[l] += term(*x, *g);
    }
    ((acc[0] + acc[4]) + (acc[2] + acc[6])) + ((acc[1] + acc[5]) + (acc[3] + acc[7]))
}

fn norm2_lanes(g: &[f64]) -> f64 {
    lane_sum(g, g, |a, _| a * a)
}

/// `<x, g / norm>` with the coordinates of `g / norm` rounded exactly as
/// [`codeword`] stores them.
fn inner_with_scaled(x: &[f64], g: &[f64], norm: f64) -> f64 {
    lane_sum(x, g, |a, b| a * (b / norm))
}

/// `<x, c>` in the summation order the search uses; for `c = codeword(..)`
/// this reproduces the search's value bit for bit.
pub fn codeword_inner(x: &[f64], c: &[f64]) -> f64 {
    lane_sum(x, c, |a, b| a * b)
}

/// Raw Gaussian block for codeword `i`, redrawn under a remixed seed in the
/// (never observed) event that every coordinate is zero.
fn raw_codeword(seed: u64, i: u64, out: &mut [f64]) -> f64 {
    let mut stream_seed = seed;
    let mut attempt = 0u64;
    loop {
        rng::fill_gaussian_block(stream_seed, i, out);
        let norm2 = norm2_lanes(out);
        if norm2 > 0.0 {
            return norm2;
        }
        attempt += 1;
        stream_seed = rng::derive_seed(seed, &[rng::tag::CODEBOOK, attempt]);
    }
}

/// Codeword `i` of the direction codebook: a normalized standard Gaussian
/// vector in `R^n`.
pub fn codeword(seed: u64, i: u64, n: usize) -> Vector {
    let mut g = vec![0.0; n];
    let norm = raw_codeword(seed, i, &mut g).sqrt();
    for v in &mut g {
        *v /= norm;
    }
    Vector::from_finite(g)
}

/// Best codeword found by a search: its index and `<x, codeword>`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchHit {
    pub index: u64,
    pub inner: f64,
}

impl SearchHit {
    /// Identity for [`SearchHit::merge`].
    pub const NONE: SearchHit = SearchHit {
        index: u64::MAX,
        inner: f64::NEG_INFINITY,
    };

    /// Larger inner product wins; equal values go to the lower index.
    pub fn merge(self, other: SearchHit) -> SearchHit {
        if other.inner > self.inner || (other.inner == self.inner && other.index < self.index) {
            other
        } else {
            self
        }
    }
}

/// Serial scan over codeword indices in `range`.
pub fn scan_range(x: &[f64], seed: u64, range: Range<u64>) -> SearchHit {
    let n = x.len();
    let stride = 2 * rng::pairs_per_block(n) as usize;
    let mut buf = vec![0.0; stride * FILL_CODEWORDS as usize];
    let mut best = SearchHit::NONE;
    let mut start = range.start;
    while start < range.end {
        let len = (range.end - start).min(FILL_CODEWORDS);
        let stream = &mut buf[..stride * len as usize];
        rng::fill_counter_stream(seed, start.wrapping_mul(stride as u64 / 2), stream);
        for (offset, block) in stream.chunks_exact(stride).enumerate() {
            let index = start + offset as u64;
            let g = &block[..n];
            let s = norm2_lanes(g);
            let inner = if s > 0.0 {
                inner_with_scaled(x, g, s.sqrt())
            } else {
                let mut fresh = vec![0.0; n];
                let s = raw_codeword(seed, index, &mut fresh);
                inner_with_scaled(x, &fresh, s.sqrt())
            };
            if inner > best.inner {
                best = SearchHit { index, inner };
            }
        }
        start += len;
    }
    best
}

/// Exhaustive `argmax_i <x, codeword(seed, i, n)>` over `0..count`, fanned
/// out across the rayon pool. The result does not depend on the number of
/// workers.
pub fn search_direction(x: &[f64], seed: u64, count: u64) -> Result<SearchHit> {
    if x.is_empty() || x.iter().all(|&v| v == 0.0) {
        return Err(domain("x", "direction search needs a nonzero vector"));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(domain("x", "coordinates must be finite"));
    }
    if count == 0 {
        return Err(Error::Usage("codebook must hold at least one codeword".into()));
    }
    if count > 1u64 << MAX_TOTAL_BITS {
        return Err(Error::Capacity {
            n: x.len(),
            rate: format!("log2({count})/{}", x.len()),
            n_rate: (count as f64).log2(),
            limit: MAX_TOTAL_BITS,
        });
    }
    if count <= TASK_CODEWORDS {
        return Ok(scan_range(x, seed, 0..count));
    }
    let tasks = count.div_ceil(TASK_CODEWORDS);
    Ok((0..tasks)
        .into_par_iter()
        .map(|t| {
            let lo = t * TASK_CODEWORDS;
            scan_range(x, seed, lo..(lo + TASK_CODEWORDS).min(count))
        })
        .reduce(|| SearchHit::NONE, SearchHit::merge))
}

/// The random spherical codebook shared by encoder and decoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DirectionCodebook {
    seed: u64,
    n: usize,
    count: u64,
}

impl DirectionCodebook {
    pub fn new(seed: u64, n: usize, rate: Rate) -> Result<Self> {
        if n == 0 {
            return Err(domain("n", "must be at least 1"));
        }
        Ok(DirectionCodebook {
            seed,
            n,
            count: codeword_count(n, rate)?,
        })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn bits(&self) -> u32 {
        ceil_log2(self.count)
    }

    pub fn codeword(&self, i: u64) -> Result<Vector> {
        if i >= self.count {
            return Err(Error::Usage(format!(
                "direction index {i} out of range for codebook of size {}",
                self.count
            )));
        }
        Ok(codeword(self.seed, i, self.n))
    }

    pub fn search(&self, x: &[f64]) -> Result<SearchHit> {
        if x.len() != self.n {
            return Err(Error::Usage(format!(
                "vector of length {} searched against codebook of dimension {}",
                x.len(),
                self.n
            )));
        }
        search_direction(x, self.seed, self.count)
    }
}
