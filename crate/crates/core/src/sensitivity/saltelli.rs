//! Saltelli design: base matrices A and B from a scrambled Sobol sequence of
//! dimension 2d, plus the cross matrices needed for first-, second- and
//! total-order estimation.

use crate::error::{Error, Result};

/// Points per scrambled Sobol block supported by the generator.
pub const SOBOL_BLOCK: usize = 1 << 16;

/// Maps a generator output in `[0, 1)` on a 2^-24 grid to the centre of its
/// cell, which keeps inverse CDFs away from 0 and 1.
fn centre(u: f32) -> f64 {
    u as f64 + 0.5 / (1u64 << 24) as f64
}

/// Unit-cube point `index` of dimension `dims`. Indices past one block use a
/// fresh scramble per block, which keeps every block a full Sobol net.
pub fn sobol_point(index: usize, dims: usize, seed: u64) -> Vec<f64> {
    let block = (index / SOBOL_BLOCK) as u64;
    let within = (index % SOBOL_BLOCK) as u32;
    let s = seed.wrapping_add(block.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    let s32 = (s ^ (s >> 32)) as u32;
    (0..dims as u32)
        .map(|k| centre(sobol_burley::sample(within, k, s32)))
        .collect()
}

/// Unit-cube Saltelli design with rows in blocks of `2d + 2`:
/// `A_j, AB_j^1..AB_j^d, BA_j^1..BA_j^d, B_j`, where `AB^i` is A with column
/// `i` taken from B and `BA^i` is B with column `i` taken from A.
#[derive(Debug, Clone, PartialEq)]
pub struct SaltelliDesign {
    pub d: usize,
    pub n: usize,
    a: Vec<f64>,
    b: Vec<f64>,
}

impl SaltelliDesign {
    pub fn new(d: usize, n: usize, seed: u64) -> Result<Self> {
        if d < 2 {
            return Err(Error::config(
                "a Saltelli design needs at least two parameters",
            ));
        }
        if n == 0 || !n.is_power_of_two() {
            return Err(Error::config(format!(
                "base sample size {n} is not a power of two"
            )));
        }
        if 2 * d > sobol_burley::NUM_DIMENSIONS as usize {
            return Err(Error::config(format!(
                "{d} parameters exceed the {} supported Sobol dimensions",
                sobol_burley::NUM_DIMENSIONS / 2
            )));
        }
        let mut a = Vec::with_capacity(n * d);
        let mut b = Vec::with_capacity(n * d);
        for j in 0..n {
            let p = sobol_point(j, 2 * d, seed);
            a.extend_from_slice(&p[..d]);
            b.extend_from_slice(&p[d..]);
        }
        Ok(SaltelliDesign { d, n, a, b })
    }

    pub fn rows_per_block(&self) -> usize {
        2 * self.d + 2
    }

    /// `M = 2n(d + 1)`.
    pub fn n_rows(&self) -> usize {
        self.n * self.rows_per_block()
    }

    pub fn a_row(&self, j: usize) -> &[f64] {
        &self.a[j * self.d..(j + 1) * self.d]
    }

    pub fn b_row(&self, j: usize) -> &[f64] {
        &self.b[j * self.d..(j + 1) * self.d]
    }

    /// Unit-cube coordinates of design row `r`.
    pub fn row(&self, r: usize) -> Vec<f64> {
        let d = self.d;
        let j = r / self.rows_per_block();
        let k = r % self.rows_per_block();
        let (a, b) = (self.a_row(j), self.b_row(j));
        match k {
            0 => a.to_vec(),
            k if k <= d => {
                let mut x = a.to_vec();
                x[k - 1] = b[k - 1];
                x
            }
            k if k <= 2 * d => {
                let mut x = b.to_vec();
                x[k - d - 1] = a[k - d - 1];
                x
            }
            _ => b.to_vec(),
        }
    }
}
