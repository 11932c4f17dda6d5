//! Row-major multi-index helpers and the dense Volterra map container.
//!
//! A degree-`m` multi-index `(t_1, ..., t_m)` over lags `0..lags` is flattened with
//! `t_1` varying slowest, so the flat index is `sum_i t_i * lags^(m - i)`.

use serde::{Deserialize, Serialize};

/// `lags^m`, or `None` on overflow.
pub fn block_len(lags: usize, m: usize) -> Option<usize> {
    let mut len: usize = 1;
    for _ in 0..m {
        len = len.checked_mul(lags)?;
    }
    Some(len)
}

/// Writes the digits of `flat` in base `lags` into `out` (most significant first).
pub fn unflatten(mut flat: usize, lags: usize, out: &mut [usize]) {
    for slot in out.iter_mut().rev() {
        *slot = flat % lags;
        flat /= lags;
    }
}

pub fn flatten(idx: &[usize], lags: usize) -> usize {
    idx.iter().fold(0, |acc, &t| acc * lags + t)
}

/// Column offsets of each degree block inside a stacked `[block_1 | ... | block_M]` layout.
pub fn block_offsets(lags: usize, order: usize) -> Vec<usize> {
    let mut offsets = Vec::with_capacity(order + 1);
    let mut acc = 0;
    offsets.push(0);
    for m in 1..=order {
        acc += block_len(lags, m).expect("block size overflow");
        offsets.push(acc);
    }
    offsets
}

/// Dense degree-`m` Volterra map `h_m(t_1, ..., t_m)` on lags `0..lags`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolterraMap {
    pub degree: usize,
    pub lags: usize,
    pub values: Vec<f64>,
}

impl VolterraMap {
    pub fn zeros(degree: usize, lags: usize) -> Self {
        let len = block_len(lags, degree).expect("map size overflow");
        Self {
            degree,
            lags,
            values: vec![0.0; len],
        }
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        debug_assert_eq!(idx.len(), self.degree);
        self.values[flatten(idx, self.lags)]
    }

    pub fn set(&mut self, idx: &[usize], v: f64) {
        let k = flatten(idx, self.lags);
        self.values[k] = v;
    }

    /// Replaces every entry by the average over all permutations of its indices.
    pub fn symmetrize(&mut self) {
        if self.degree < 2 {
            return;
        }
        let src = self.values.clone();
        let mut idx = vec![0; self.degree];
        let mut perm_idx = vec![0; self.degree];
        let perms = permutations(self.degree);
        for flat in 0..src.len() {
            unflatten(flat, self.lags, &mut idx);
            let mut acc = 0.0;
            for p in &perms {
                for (dst, &k) in perm_idx.iter_mut().zip(p) {
                    *dst = idx[k];
                }
                acc += src[flatten(&perm_idx, self.lags)];
            }
            self.values[flat] = acc / perms.len() as f64;
        }
    }

    pub fn max_abs_diff(&self, other: &VolterraMap) -> f64 {
        assert_eq!(self.values.len(), other.values.len());
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

fn permutations(k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for sub in permutations(k - 1) {
        for pos in 0..=sub.len() {
            let mut p = sub.clone();
            p.insert(pos, k - 1);
            out.push(p);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flatten_is_row_major() {
        assert_eq!(flatten(&[1, 0], 2), 2);
        assert_eq!(flatten(&[0, 1], 2), 1);
        let mut out = [0; 3];
        unflatten(flatten(&[2, 0, 1], 3), 3, &mut out);
        assert_eq!(out, [2, 0, 1]);
    }

    #[test]
    fn offsets_stack_blocks() {
        assert_eq!(block_offsets(2, 3), vec![0, 2, 6, 14]);
        assert_eq!(block_len(10, 0), Some(1));
    }

    #[test]
    fn symmetrize_averages_transposes() {
        let mut h = VolterraMap::zeros(2, 2);
        h.set(&[0, 1], 2.0);
        h.symmetrize();
        assert_eq!(h.get(&[0, 1]), 1.0);
        assert_eq!(h.get(&[1, 0]), 1.0);
        assert_eq!(permutations(3).len(), 6);
    }
}
