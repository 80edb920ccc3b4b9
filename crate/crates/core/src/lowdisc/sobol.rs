//! Sobol' sequence in base 2 from Joe–Kuo style direction numbers.

use super::scramble::ScrambleKey;
use super::PointBatch;
use crate::{Error, Result};
use ndarray::Array2;
use std::path::Path;
use std::sync::OnceLock;

const BITS: usize = 32;

static SHIPPED_TABLE: &str = include_str!("../../data/joe_kuo_1024.txt");

/// One row of a direction-number file: `d s a m_1 .. m_s`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolynomialEntry {
    pub dimension: usize,
    pub degree: u32,
    pub coefficients: u32,
    pub initial: Vec<u32>,
}

/// Primitive polynomials and initial direction integers for dimensions
/// 2, 3, ...; dimension 1 is the van der Corput sequence and needs no row.
#[derive(Debug, Clone)]
pub struct DirectionTable {
    entries: Vec<PolynomialEntry>,
}

impl DirectionTable {
    /// Table compiled into the binary (1024 dimensions).
    pub fn shipped() -> &'static DirectionTable {
        static TABLE: OnceLock<DirectionTable> = OnceLock::new();
        TABLE.get_or_init(|| {
            DirectionTable::parse(SHIPPED_TABLE, Path::new("joe_kuo_1024.txt"))
                .expect("shipped direction table is well formed")
        })
    }

    pub fn from_file(path: &Path) -> Result<DirectionTable> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    /// Parse the Joe–Kuo text layout. A non-numeric first line is treated
    /// as a header.
    pub fn parse(text: &str, origin: &Path) -> Result<DirectionTable> {
        let mut entries = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if lineno == 0 && fields[0].parse::<u64>().is_err() {
                continue;
            }
            let bad = |why: &str| Error::format(origin, format!("line {}: {why}", lineno + 1));
            let nums = fields
                .iter()
                .map(|f| f.parse::<u64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|_| bad("non-integer field"))?;
            if nums.len() < 3 {
                return Err(bad("expected `d s a m_1 .. m_s`"));
            }
            let (dimension, degree, coefficients) = (nums[0] as usize, nums[1] as u32, nums[2]);
            if degree == 0 || degree as usize >= BITS {
                return Err(bad("polynomial degree out of range"));
            }
            if nums.len() != 3 + degree as usize {
                return Err(bad("number of initial direction integers differs from degree"));
            }
            let expected = entries.len() + 2;
            if dimension != expected {
                return Err(bad(&format!("expected dimension {expected}, found {dimension}")));
            }
            let initial: Vec<u32> = nums[3..].iter().map(|&m| m as u32).collect();
            for (k, &m) in initial.iter().enumerate() {
                if m % 2 == 0 || u64::from(m) >= 1u64 << (k + 1) {
                    return Err(bad("initial direction integers must be odd and m_k < 2^k"));
                }
            }
            entries.push(PolynomialEntry {
                dimension,
                degree,
                coefficients: coefficients as u32,
                initial,
            });
        }
        Ok(DirectionTable { entries })
    }

    /// Largest dimension this table supports.
    pub fn max_dimension(&self) -> usize {
        self.entries.len() + 1
    }

    fn directions(&self, dim: usize) -> [u32; BITS] {
        let mut v = [0u32; BITS];
        if dim == 0 {
            for (k, vk) in v.iter_mut().enumerate() {
                *vk = 1 << (BITS - 1 - k);
            }
            return v;
        }
        let entry = &self.entries[dim - 1];
        let s = entry.degree as usize;
        for k in 0..s {
            v[k] = entry.initial[k] << (BITS - 1 - k);
        }
        for k in s..BITS {
            let mut x = v[k - s] ^ (v[k - s] >> s);
            for j in 1..s {
                if (entry.coefficients >> (s - 1 - j)) & 1 == 1 {
                    x ^= v[k - j];
                }
            }
            v[k] = x;
        }
        v
    }
}

/// Sobol' point generator in natural (non-Gray-code) index order.
#[derive(Debug, Clone)]
pub struct SobolGenerator {
    dimension: usize,
    directions: Vec<[u32; BITS]>,
    next_index: u64,
}

impl SobolGenerator {
    pub fn new(dimension: usize) -> Result<Self> {
        Self::with_table(dimension, DirectionTable::shipped())
    }

    pub fn with_table(dimension: usize, table: &DirectionTable) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::Config("Sobol' dimension must be positive".into()));
        }
        if dimension > table.max_dimension() {
            return Err(Error::Config(format!(
                "Sobol' dimension {dimension} exceeds the direction-number table ({} dimensions)",
                table.max_dimension()
            )));
        }
        Ok(SobolGenerator {
            dimension,
            directions: (0..dimension).map(|j| table.directions(j)).collect(),
            next_index: 0,
        })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn next_index(&self) -> u64 {
        self.next_index
    }

    pub fn seek(&mut self, index: u64) {
        self.next_index = index;
    }

    /// Unscrambled 32-bit digits of point `index`, coordinate `coord`.
    #[inline]
    pub fn digits(&self, index: u64, coord: usize) -> u32 {
        let v = &self.directions[coord];
        let mut i = index;
        let mut x = 0u32;
        let mut k = 0;
        while i != 0 {
            if i & 1 == 1 {
                x ^= v[k];
            }
            i >>= 1;
            k += 1;
        }
        x
    }

    /// Digits of the next `m` points, row-major `m x dimension`; advances
    /// the index.
    pub fn next_digits(&mut self, m: usize) -> Result<Vec<u32>> {
        let end = self.next_index + m as u64;
        if end > 1u64 << BITS {
            return Err(Error::Contract("Sobol' index exceeds 2^32".into()));
        }
        let s = self.dimension;
        let mut out = vec![0u32; m * s];
        // idx and idx + 1 differ in a trailing block of bits; xor in the
        // direction numbers of exactly those bits.
        let mut cur: Vec<u32> = (0..s).map(|j| self.digits(self.next_index, j)).collect();
        for (row, idx) in (self.next_index..end).enumerate() {
            out[row * s..(row + 1) * s].copy_from_slice(&cur);
            let next = idx + 1;
            let flipped = idx ^ next;
            for (j, c) in cur.iter_mut().enumerate() {
                let v = &self.directions[j];
                let mut f = flipped;
                let mut k = 0;
                while f != 0 {
                    if f & 1 == 1 {
                        *c ^= v[k];
                    }
                    f >>= 1;
                    k += 1;
                }
            }
        }
        self.next_index = end;
        Ok(out)
    }

    /// The next `m` points, scrambled with `key`.
    pub fn points(&mut self, key: &ScrambleKey, m: usize) -> Result<PointBatch> {
        if m == 0 {
            return Err(Error::Contract("batch size must be at least 1".into()));
        }
        let digits = self.next_digits(m)?;
        Ok(scramble_digits(&digits, self.dimension, key))
    }
}

/// Apply `key` to a row-major digit matrix with `s` columns.
pub fn scramble_digits(digits: &[u32], s: usize, key: &ScrambleKey) -> PointBatch {
    let m = digits.len() / s;
    let coord_keys: Vec<u64> = (0..s).map(|j| key.coordinate_seed(j)).collect();
    let values: Vec<f64> = digits
        .iter()
        .enumerate()
        .map(|(n, &x)| key.apply(coord_keys[n % s], x))
        .collect();
    PointBatch::from_clamped(Array2::from_shape_vec((m, s), values).expect("shape matches"))
}

/// `sobol_points`: the next `m` points of `gen` under `key`.
pub fn sobol_points(gen: &mut SobolGenerator, key: &ScrambleKey, m: usize) -> Result<PointBatch> {
    gen.points(key, m)
}
