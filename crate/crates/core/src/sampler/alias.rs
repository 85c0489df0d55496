use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;

use crate::error::{Error, Result};

/// Walker/Vose alias table: O(n) construction, O(1) draws.
#[derive(Debug)]
pub struct AliasTable {
    threshold: Vec<f64>,
    alias: Vec<usize>,
    source: Vec<f64>,
    probes: AtomicU64,
    draws: AtomicU64,
}

impl Clone for AliasTable {
    fn clone(&self) -> Self {
        AliasTable {
            threshold: self.threshold.clone(),
            alias: self.alias.clone(),
            source: self.source.clone(),
            probes: AtomicU64::new(0),
            draws: AtomicU64::new(0),
        }
    }
}

impl AliasTable {
    /// Builds a table for `p` (nonnegative, summing to 1 within 1e-9).
    pub fn new(p: &[f64]) -> Result<Self> {
        let sum = validate_distribution(p)?;
        let n = p.len();
        let mut scaled: Vec<f64> = p.iter().map(|&x| x * n as f64 / sum).collect();
        let mut threshold = vec![1.0; n];
        let mut alias: Vec<usize> = (0..n).collect();
        let (mut small, mut large): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| scaled[i] < 1.0);

        while let (Some(&s), Some(&l)) = (small.last(), large.last()) {
            small.pop();
            large.pop();
            threshold[s] = scaled[s];
            alias[s] = l;
            scaled[l] = (scaled[l] + scaled[s]) - 1.0;
            if scaled[l] < 1.0 {
                small.push(l);
            } else {
                large.push(l);
            }
        }
        // Leftovers are rounding residue and should sit at ~1; anything far
        // below that would be a zero-mass entry and must stay unreachable.
        let fallback = p.iter().position(|&x| x > 0.0).unwrap_or(0);
        for i in small.into_iter().chain(large) {
            if scaled[i] < 0.5 {
                threshold[i] = 0.0;
                alias[i] = fallback;
            } else {
                threshold[i] = 1.0;
            }
        }
        Ok(AliasTable {
            threshold,
            alias,
            source: p.to_vec(),
            probes: AtomicU64::new(0),
            draws: AtomicU64::new(0),
        })
    }

    pub fn len(&self) -> usize {
        self.threshold.len()
    }

    pub fn is_empty(&self) -> bool {
        self.threshold.is_empty()
    }

    /// The distribution the table was built from.
    pub fn source(&self) -> &[f64] {
        &self.source
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.probes.fetch_add(1, Ordering::Relaxed);
        self.draws.fetch_add(1, Ordering::Relaxed);
        self.pick(rng)
    }

    /// Same as [`draw`](Self::draw) without touching the counters.
    pub(crate) fn pick<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let bucket = super::uniform_index(rng, 0, self.threshold.len());
        let u: f64 = rng.random();
        if u < self.threshold[bucket] {
            bucket
        } else {
            self.alias[bucket]
        }
    }

    /// Probability of each index implied by the bucket structure.
    pub fn reconstructed(&self) -> Vec<f64> {
        let n = self.len() as f64;
        let mut out: Vec<f64> = self.threshold.iter().map(|t| t / n).collect();
        for (i, (&t, &a)) in self.threshold.iter().zip(&self.alias).enumerate() {
            if a != i || t < 1.0 {
                out[a] += (1.0 - t) / n;
            }
        }
        out
    }

    /// Buckets examined across all draws so far.
    pub fn probes(&self) -> u64 {
        self.probes.load(Ordering::Relaxed)
    }

    pub fn draws(&self) -> u64 {
        self.draws.load(Ordering::Relaxed)
    }
}

pub(crate) fn validate_distribution(p: &[f64]) -> Result<f64> {
    if p.is_empty() {
        return Err(Error::InvalidInput("empty probability vector".into()));
    }
    if let Some(i) = p.iter().position(|&x| !(x >= 0.0) || !x.is_finite()) {
        return Err(Error::InvalidInput(format!("invalid probability {} at index {i}", p[i])));
    }
    let sum: f64 = p.iter().sum();
    if sum <= 0.0 {
        return Err(Error::InvalidInput("probabilities sum to zero".into()));
    }
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidInput(format!("probabilities sum to {sum}, expected 1")));
    }
    Ok(sum)
}
