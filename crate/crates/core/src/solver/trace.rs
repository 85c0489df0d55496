use std::io::{self, Write};

/// One row of the convergence trace.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    /// Coordinate updates divided by `n`.
    pub epoch: f64,
    pub iter: usize,
    pub seconds: f64,
    pub primal: f64,
    /// `P(w) − P*`, when a reference is known.
    pub subopt: Option<f64>,
    pub gap: Option<f64>,
    pub residue_norm: f64,
    /// 90th percentile of `|κ|`.
    pub residue_p90: f64,
    pub theta: f64,
}

pub const TRACE_HEADER: &str = "epoch,iter,seconds,primal,subopt,gap_G,residue_norm,residue_p90,theta";

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

pub fn write_trace<W: Write>(rows: &[TraceRecord], mut out: W) -> io::Result<()> {
    writeln!(out, "{TRACE_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.epoch,
            r.iter,
            r.seconds,
            r.primal,
            opt(r.subopt),
            opt(r.gap),
            r.residue_norm,
            r.residue_p90,
            r.theta
        )?;
    }
    Ok(())
}

/// First epoch at which the suboptimality reaches `target`.
pub fn epochs_to_target(rows: &[TraceRecord], target: f64) -> Option<f64> {
    rows.iter()
        .find(|r| r.subopt.is_some_and(|s| s <= target))
        .map(|r| r.epoch)
}

/// First iteration count at which the suboptimality reaches `target`.
pub fn iterations_to_target(rows: &[TraceRecord], target: f64) -> Option<usize> {
    rows.iter()
        .find(|r| r.subopt.is_some_and(|s| s <= target))
        .map(|r| r.iter)
}

/// Equal-width histogram over `[lo, hi]`; the last bin is closed.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn new(values: &[f64], bins: usize, lo: f64, hi: f64) -> Self {
        let bins = bins.max(1);
        let mut counts = vec![0; bins];
        let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
        for &x in values {
            if !(x >= lo && x <= hi) {
                continue;
            }
            let k = (((x - lo) / width) as usize).min(bins - 1);
            counts[k] += 1;
        }
        Histogram { lo, hi, counts }
    }

    pub fn edges(&self, k: usize) -> (f64, f64) {
        let width = if self.hi > self.lo {
            (self.hi - self.lo) / self.counts.len() as f64
        } else {
            1.0
        };
        (self.lo + k as f64 * width, self.lo + (k + 1) as f64 * width)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "bin_lo,bin_hi,count")?;
        for (k, c) in self.counts.iter().enumerate() {
            let (a, b) = self.edges(k);
            writeln!(out, "{a},{b},{c}")?;
        }
        Ok(())
    }
}
