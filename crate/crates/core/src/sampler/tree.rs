use std::cell::Cell;

use rand::Rng;

use crate::error::{Error, Result};

/// Weighted sampler over a binary indexed tree: O(log n) draws and point
/// updates. Weights need not be normalized.
#[derive(Debug, Clone)]
pub struct TreeSampler {
    weights: Vec<f64>,
    // 1-based Fenwick array, tree[0] unused
    tree: Vec<f64>,
    total: f64,
    last_update_touches: usize,
    last_draw_touches: Cell<usize>,
}

impl TreeSampler {
    pub fn new(weights: &[f64]) -> Result<Self> {
        if let Some(i) = weights.iter().position(|&w| !(w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidInput(format!("invalid weight {} at index {i}", weights[i])));
        }
        let n = weights.len();
        let mut tree = vec![0.0; n + 1];
        tree[1..].copy_from_slice(weights);
        for k in 1..=n {
            let parent = k + lowbit(k);
            if parent <= n {
                tree[parent] += tree[k];
            }
        }
        let mut ts = TreeSampler {
            weights: weights.to_vec(),
            tree,
            total: 0.0,
            last_update_touches: 0,
            last_draw_touches: Cell::new(0),
        };
        ts.total = ts.prefix(n);
        Ok(ts)
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn total(&self) -> f64 {
        self.total
    }

    /// Sum of the first `k` weights.
    pub fn prefix(&self, mut k: usize) -> f64 {
        let mut s = 0.0;
        while k > 0 {
            s += self.tree[k];
            k -= lowbit(k);
        }
        s
    }

    pub fn update(&mut self, i: usize, weight: f64) -> Result<()> {
        if !(weight >= 0.0) || !weight.is_finite() {
            return Err(Error::InvalidInput(format!("invalid weight {weight}")));
        }
        let delta = weight - self.weights[i];
        self.weights[i] = weight;
        let n = self.len();
        let mut k = i + 1;
        let mut touched = 0;
        while k <= n {
            self.tree[k] += delta;
            touched += 1;
            k += lowbit(k);
        }
        self.last_update_touches = touched;
        self.total = self.prefix(n);
        Ok(())
    }

    /// Draws `i` with probability `w_i / Σw` and returns that probability.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<(usize, f64)> {
        if !(self.total > 0.0) {
            return Err(Error::InvalidInput("all tree weights are zero".into()));
        }
        let n = self.len();
        let mut rem = rng.random::<f64>() * self.total;
        let mut pos = 0;
        let mut step = if n == 0 { 0 } else { 1 << (usize::BITS - 1 - n.leading_zeros()) };
        let mut touched = 0;
        while step > 0 {
            let next = pos + step;
            if next <= n {
                touched += 1;
                if self.tree[next] <= rem {
                    pos = next;
                    rem -= self.tree[next];
                }
            }
            step >>= 1;
        }
        self.last_draw_touches.set(touched);
        // Rounding can land on a zero-weight slot or run off the end.
        let idx = if pos < n && self.weights[pos] > 0.0 {
            pos
        } else {
            (pos.min(n - 1)..n)
                .chain((0..pos.min(n)).rev())
                .find(|&k| self.weights[k] > 0.0)
                .expect("positive total implies a positive weight")
        };
        Ok((idx, self.weights[idx] / self.total))
    }

    /// Tree nodes written by the most recent update.
    pub fn last_update_touches(&self) -> usize {
        self.last_update_touches
    }

    /// Tree nodes read by the most recent draw.
    pub fn last_draw_touches(&self) -> usize {
        self.last_draw_touches.get()
    }
}

fn lowbit(k: usize) -> usize {
    k & k.wrapping_neg()
}
