//! Counter-based Gaussian generator shared by codebooks and data samplers.
//!
//! Every Gaussian coordinate is a pure function of `(seed, block, coordinate)`.
//! For block `i` of length `n`, coordinate pair `(2j, 2j+1)` reads counter
//! `k = i * ceil(n/2) + j` and draws two words
//! `w_m = mix(seed + (2k + m) * GOLDEN)`, `m in {0, 1}`.
//! The words become uniforms on the open interval `(0, 1)` and a Box-Muller
//! transform turns the pair into two standard normals. For odd `n` the sine
//! half of the final pair is discarded.

use super::fastmath;

/// Weyl increment (2^64 / golden ratio).
pub const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
#[inline(always)]
pub fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Maps a 64-bit word to `((w >> 11) + 0.5) * 2^-53`.
///
/// The result is positive; the single top word rounds to exactly 1.0, which
/// yields a zero-radius Box-Muller pair.
#[inline(always)]
pub fn unit_open(w: u64) -> f64 {
    ((w >> 11) as f64 + 0.5) * (1.0 / 9_007_199_254_740_992.0)
}

/// The two uniforms for counter `k`.
#[inline(always)]
pub fn uniform_pair(seed: u64, k: u64) -> (f64, f64) {
    let base = k.wrapping_mul(2).wrapping_mul(GOLDEN);
    let w0 = mix(seed.wrapping_add(base));
    let w1 = mix(seed.wrapping_add(base.wrapping_add(GOLDEN)));
    (unit_open(w0), unit_open(w1))
}

/// Box-Muller pair for counter `k`.
#[inline(always)]
pub fn gaussian_pair(seed: u64, k: u64) -> (f64, f64) {
    let (u0, u1) = uniform_pair(seed, k);
    let r = (-2.0 * fastmath::ln_normal(u0)).sqrt();
    let (s, c) = fastmath::sin_cos_turns(u1);
    (r * c, r * s)
}

const LANES: usize = 8;

#[inline(always)]
fn gaussian_lanes(seed: u64, k0: u64, out: &mut [f64; 2 * LANES]) {
    let mut pairs = [(0.0, 0.0); LANES];
    for (l, p) in pairs.iter_mut().enumerate() {
        *p = gaussian_pair(seed, k0.wrapping_add(l as u64));
    }
    for (l, (z0, z1)) in pairs.into_iter().enumerate() {
        out[2 * l] = z0;
        out[2 * l + 1] = z1;
    }
}

#[inline(always)]
fn fill_stream_generic(seed: u64, k0: u64, out: &mut [f64]) {
    let mut k = k0;
    let mut chunks = out.chunks_exact_mut(2 * LANES);
    for chunk in &mut chunks {
        let chunk: &mut [f64; 2 * LANES] = chunk.try_into().unwrap();
        gaussian_lanes(seed, k, chunk);
        k = k.wrapping_add(LANES as u64);
    }
    let rest = chunks.into_remainder();
    if !rest.is_empty() {
        let mut tmp = [0.0; 2 * LANES];
        gaussian_lanes(seed, k, &mut tmp);
        rest.copy_from_slice(&tmp[..rest.len()]);
    }
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx512f,avx512dq,avx512vl")]
unsafe fn fill_stream_avx512(seed: u64, k0: u64, out: &mut [f64]) {
    fill_stream_generic(seed, k0, out)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn fill_stream_avx2(seed: u64, k0: u64, out: &mut [f64]) {
    fill_stream_generic(seed, k0, out)
}

/// Writes the Gaussians of counters `k0, k0 + 1, ...` into `out`, two per
/// counter (a trailing odd slot takes the cosine half).
///
/// The vector paths run the same scalar arithmetic, so output bits do not
/// depend on the CPU features detected at runtime.
pub fn fill_counter_stream(seed: u64, k0: u64, out: &mut [f64]) {
    #[cfg(target_arch = "x86_64")]
    {
        if std::arch::is_x86_feature_detected!("avx512dq") && std::arch::is_x86_feature_detected!("avx512vl")
        {
            // SAFETY: the required features were detected at runtime.
            return unsafe { fill_stream_avx512(seed, k0, out) };
        }
        if std::arch::is_x86_feature_detected!("avx2") {
            // SAFETY: the required feature was detected at runtime.
            return unsafe { fill_stream_avx2(seed, k0, out) };
        }
    }
    fill_stream_generic(seed, k0, out)
}

/// Number of counters consumed by one block of `n` coordinates.
#[inline]
pub fn pairs_per_block(n: usize) -> u64 {
    n.div_ceil(2) as u64
}

/// Fills `out` with the standard normals of block `block`.
pub fn fill_gaussian_block(seed: u64, block: u64, out: &mut [f64]) {
    fill_counter_stream(seed, block.wrapping_mul(pairs_per_block(out.len())), out);
}

/// Derives a child seed from a parent seed and a sequence of labels.
///
/// Each label is absorbed through one round of `mix`, so distinct label
/// paths give unrelated streams.
pub fn derive_seed(parent: u64, labels: &[u64]) -> u64 {
    labels
        .iter()
        .fold(mix(parent ^ 0x5147_534D_0000_0001), |acc, &l| {
            mix(acc.wrapping_add(GOLDEN).wrapping_add(mix(l)))
        })
}

/// Domain-separation tags for non-codebook streams.
pub mod tag {
    pub const THETA: u64 = 0x7468_6574_6100_0001;
    pub const NOISE: u64 = 0x6e6f_6973_6500_0002;
    pub const CODEBOOK: u64 = 0x636f_6465_6200_0003;
    pub const TESTDIST: u64 = 0x7465_7374_6400_0004;
    pub const LEMMA: u64 = 0x6c65_6d6d_6100_0005;
}
