use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One sign vector per variable, packed as bitmasks (set bit = `-1`).
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SignMatrix {
    lens: Vec<usize>,
    words: Vec<Vec<u64>>,
}

impl SignMatrix {
    /// All signs `+1`.
    pub fn new(lens: &[usize]) -> Self {
        Self {
            lens: lens.to_vec(),
            words: lens.iter().map(|&n| vec![0; n.div_ceil(64)]).collect(),
        }
    }

    pub fn from_rows(rows: &[Vec<i8>]) -> Result<Self> {
        let lens: Vec<usize> = rows.iter().map(Vec::len).collect();
        let mut s = Self::new(&lens);
        for (j, row) in rows.iter().enumerate() {
            for (i, &v) in row.iter().enumerate() {
                match v {
                    1 => {}
                    -1 => s.set_negative(j, i, true),
                    _ => return Err(Error::Parameter(format!("sign {v} is not +1 or -1"))),
                }
            }
        }
        Ok(s)
    }

    /// Independent uniform signs on every coordinate.
    pub fn random(lens: &[usize], rng: &mut impl RngCore) -> Self {
        let mut s = Self::new(lens);
        for (row, &n) in s.words.iter_mut().zip(lens) {
            for w in row.iter_mut() {
                *w = rng.next_u64();
            }
            if n % 64 != 0 {
                *row.last_mut().unwrap() &= (1u64 << (n % 64)) - 1;
            }
        }
        s
    }

    pub fn rows(&self) -> usize {
        self.lens.len()
    }

    pub fn row_len(&self, j: usize) -> usize {
        self.lens[j]
    }

    #[inline]
    pub fn is_negative(&self, j: usize, i: usize) -> bool {
        (self.words[j][i / 64] >> (i % 64)) & 1 == 1
    }

    #[inline]
    pub fn sign(&self, j: usize, i: usize) -> i8 {
        if self.is_negative(j, i) {
            -1
        } else {
            1
        }
    }

    #[inline]
    pub fn set_negative(&mut self, j: usize, i: usize, negative: bool) {
        let mask = 1u64 << (i % 64);
        if negative {
            self.words[j][i / 64] |= mask;
        } else {
            self.words[j][i / 64] &= !mask;
        }
    }

    #[inline]
    pub fn flip(&mut self, j: usize, i: usize) {
        self.words[j][i / 64] ^= 1u64 << (i % 64);
    }

    pub fn row(&self, j: usize) -> Vec<i8> {
        (0..self.lens[j]).map(|i| self.sign(j, i)).collect()
    }

    pub fn to_rows(&self) -> Vec<Vec<i8>> {
        (0..self.rows()).map(|j| self.row(j)).collect()
    }

    pub fn row_as_f64(&self, j: usize) -> Vec<f64> {
        self.row(j).into_iter().map(f64::from).collect()
    }
}

impl Serialize for SignMatrix {
    fn serialize<S: serde::Serializer>(
        &self,
        serializer: S,
    ) -> std::result::Result<S::Ok, S::Error> {
        self.to_rows().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for SignMatrix {
    fn deserialize<D: serde::Deserializer<'de>>(
        deserializer: D,
    ) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<i8>>::deserialize(deserializer)?;
        Self::from_rows(&rows).map_err(serde::de::Error::custom)
    }
}
