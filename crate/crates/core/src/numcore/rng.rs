//! Counter-based random streams.
//!
//! A stream is identified by `(master_seed, stream_id)`. The `i`-th 64-bit word of a
//! stream is a pure function of those two ids and `i`, so any portion of a stream can
//! be regenerated without replaying what came before it. Child streams are derived by
//! hashing a label into the stream id.

use super::matrix::DenseMatrix;
use super::LinalgError;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Identity of a reproducible random sequence.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct RngStream {
    master_seed: u64,
    stream_id: u64,
}

impl RngStream {
    pub fn new(master_seed: u64, stream_id: u64) -> Self {
        Self {
            master_seed,
            stream_id,
        }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Child stream keyed by `label`; same parent and label always give the same child.
    pub fn derive(&self, label: u64) -> Self {
        Self {
            master_seed: self.master_seed,
            stream_id: mix64(self.stream_id ^ mix64(label.wrapping_add(0xD134_2543_DE82_EF95))),
        }
    }

    /// Child stream keyed by a string label.
    pub fn derive_named(&self, label: &str) -> Self {
        self.derive(fnv1a64(label.as_bytes()))
    }

    fn key(&self) -> u64 {
        mix64(self.master_seed.wrapping_mul(GOLDEN) ^ mix64(self.stream_id ^ 0x6A09_E667_F3BC_C909))
    }

    /// The `counter`-th word of the stream.
    #[inline]
    pub fn word(&self, counter: u64) -> u64 {
        mix64(self.key().wrapping_add(counter.wrapping_add(1).wrapping_mul(GOLDEN)))
    }

    /// Sequential reader starting at word 0.
    pub fn cursor(&self) -> Cursor {
        Cursor {
            key: self.key(),
            counter: 0,
            spare: None,
        }
    }
}

/// Sequential reader over a [`RngStream`].
#[derive(Clone, Debug)]
pub struct Cursor {
    key: u64,
    counter: u64,
    spare: Option<f64>,
}

impl Cursor {
    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        mix64(self.key.wrapping_add(self.counter.wrapping_mul(GOLDEN)))
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `(-1, 1)`.
    #[inline]
    fn next_signed(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) * (2.0 / (1u64 << 53) as f64) - 1.0
    }

    /// Standard normal via the Marsaglia polar method.
    #[inline]
    pub fn next_gaussian(&mut self) -> f64 {
        if let Some(s) = self.spare.take() {
            return s;
        }
        loop {
            let u = self.next_signed();
            let v = self.next_signed();
            let s = u * u + v * v;
            if s < 1.0 && s > 0.0 {
                let f = (-2.0 * s.ln() / s).sqrt();
                self.spare = Some(v * f);
                return u * f;
            }
        }
    }

    pub fn fill_gaussian(&mut self, out: &mut [f64], std: f64) {
        for v in out.iter_mut() {
            *v = std * self.next_gaussian();
        }
    }

    /// Uniform integer in `0..n`.
    pub fn next_below(&mut self, n: u64) -> u64 {
        debug_assert!(n > 0);
        ((self.next_u64() as u128 * n as u128) >> 64) as u64
    }
}

/// `rows × cols` matrix of i.i.d. `N(0, std²)` samples drawn from the start of `stream`.
pub fn gauss_matrix(stream: RngStream, rows: usize, cols: usize, std: f64) -> Result<DenseMatrix, LinalgError> {
    if !(std > 0.0) || !std.is_finite() {
        return Err(LinalgError::InvalidArgument("std must be positive"));
    }
    let mut data = vec![0.0; rows * cols];
    stream.cursor().fill_gaussian(&mut data, std);
    DenseMatrix::from_row_major(rows, cols, data)
}

/// Gaussian vector normalized to unit length.
pub fn unit_gaussian_vector(stream: RngStream, len: usize) -> Vec<f64> {
    let mut v = vec![0.0; len];
    stream.cursor().fill_gaussian(&mut v, 1.0);
    let n = super::norm2(&v);
    v.iter_mut().for_each(|x| *x /= n);
    v
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0100_0000_01b3);
    }
    hash
}
