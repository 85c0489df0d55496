//! Fixed-size random subsets with prescribed inclusion probabilities.
//!
//! Given marginals `q` with `q_i ∈ (0,1)` and `Σq_i = b`, the plan is a
//! mixture of at most `n` simple samplings. Working over `q` sorted in
//! descending order, level `k` always includes the first `fixed` positions
//! and draws the remaining `b − fixed` uniformly without replacement from
//! the tie block `[fixed, free_end)` around position `b`. Each level peels
//! off as much mass as possible while keeping the residual marginals sorted,
//! so every step merges at least one neighbour into the tie block.

use rand::Rng;

use super::alias::AliasTable;
use crate::error::{Error, Result};

/// Tolerance under which two residual marginals are considered tied.
pub const TIE_TOL: f64 = 1e-12;

/// One mixture component, in sorted-position coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Level {
    /// Probability of choosing this component.
    pub mass: f64,
    /// Positions `0..fixed` are always included.
    pub fixed: usize,
    /// `b − fixed` positions are drawn uniformly from `fixed..free_end`.
    pub free_end: usize,
}

impl Level {
    /// 1-based first free position (the `i^k` of the level table).
    pub fn first_free_1based(&self) -> usize {
        self.fixed + 1
    }

    /// 1-based last free position (the `j^k` of the level table).
    pub fn last_free_1based(&self) -> usize {
        self.free_end
    }
}

/// Reusable working memory for [`SamplingPlan::draw_into`].
#[derive(Debug, Clone, Default)]
pub struct DrawScratch {
    slots: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct SamplingPlan {
    levels: Vec<Level>,
    order: Vec<usize>,
    batch: usize,
    selector: AliasTable,
}

impl SamplingPlan {
    pub fn build(q: &[f64], batch: usize) -> Result<Self> {
        let n = q.len();
        if batch < 1 || batch >= n {
            return Err(Error::InvalidInput(format!("batch size {batch} must lie in [1, {n})")));
        }
        for (i, &x) in q.iter().enumerate() {
            if !(x > 0.0 && x < 1.0) {
                return Err(Error::Infeasible {
                    coord: i,
                    msg: format!("marginal {x} outside (0, 1)"),
                });
            }
        }
        let sum: f64 = q.iter().sum();
        if (sum - batch as f64).abs() > 1e-9 {
            return Err(Error::Infeasible {
                coord: n,
                msg: format!("marginals sum to {sum}, expected {batch}"),
            });
        }

        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| q[b].total_cmp(&q[a]));
        let sorted: Vec<f64> = order.iter().map(|&i| q[i]).collect();

        // Residual marginals are kept implicitly: positions above the tie
        // block have lost the cumulative mass `taken`, positions inside it
        // share the value `block`, positions below are untouched.
        let b = batch;
        let mut taken = 0.0;
        let mut block = sorted[b - 1];
        let (mut lo, mut hi) = (b - 1, b - 1);
        let extend = |lo: &mut usize, hi: &mut usize, taken: f64, block: f64| {
            while *lo > 0 && (sorted[*lo - 1] - taken) - block <= TIE_TOL {
                *lo -= 1;
            }
            while *hi + 1 < n && block - sorted[*hi + 1] <= TIE_TOL {
                *hi += 1;
            }
        };
        extend(&mut lo, &mut hi, taken, block);

        let mut levels = Vec::new();
        while levels.len() < n && block > TIE_TOL {
            let free = (hi - lo + 1) as f64;
            let picks = (b - lo) as f64;
            let below = if hi + 1 < n { sorted[hi + 1] } else { 0.0 };
            let merge_below = free / picks * (block - below);
            // The block falls slower than the fixed positions only when it
            // extends past position b.
            let merge_above = if lo > 0 && hi + 1 > b {
                free / (hi + 1 - b) as f64 * ((sorted[lo - 1] - taken) - block)
            } else {
                f64::INFINITY
            };
            let t = merge_below.min(merge_above);
            levels.push(Level {
                mass: t,
                fixed: lo,
                free_end: hi + 1,
            });
            taken += t;
            block = if merge_below <= merge_above {
                below
            } else {
                block - picks / free * t
            };
            extend(&mut lo, &mut hi, taken, block);
        }
        if levels.is_empty() {
            return Err(Error::Infeasible {
                coord: order[b - 1],
                msg: "no mass to distribute".into(),
            });
        }

        // Masses must sum to one; the last level absorbs rounding residue.
        let (last, rest) = levels.split_last_mut().expect("at least one level");
        let mut acc = 0.0;
        let mut comp = 0.0;
        for l in rest.iter() {
            let y = l.mass - comp;
            let s = acc + y;
            comp = (s - acc) - y;
            acc = s;
        }
        last.mass = 1.0 - acc;
        if !(last.mass > -1e-10) {
            return Err(Error::Infeasible {
                coord: n,
                msg: "level masses exceed one".into(),
            });
        }
        last.mass = last.mass.max(0.0);

        let masses: Vec<f64> = levels.iter().map(|l| l.mass).collect();
        let selector = AliasTable::new(&masses)?;
        Ok(SamplingPlan {
            levels,
            order,
            batch,
            selector,
        })
    }

    pub fn levels(&self) -> &[Level] {
        &self.levels
    }

    /// `order[k]` is the original coordinate at sorted position `k`.
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// Draws `b` distinct coordinates, returned in ascending order.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.batch);
        self.draw_into(rng, &mut DrawScratch::default(), &mut out);
        out.sort_unstable();
        out
    }

    /// Draws `b` distinct coordinates into `out`, in no particular order.
    /// Reusing `scratch` across calls avoids allocation for wide levels.
    pub fn draw_into<R: Rng + ?Sized>(&self, rng: &mut R, scratch: &mut DrawScratch, out: &mut Vec<usize>) {
        let level = self.levels[self.selector.pick(rng)];
        out.clear();
        out.extend_from_slice(&self.order[..level.fixed]);
        let span = level.free_end - level.fixed;
        let picks = self.batch - level.fixed;
        let free = &self.order[level.fixed..level.free_end];
        if picks == span {
            out.extend_from_slice(free);
            return;
        }
        let moves = picks.min(span - picks);
        if span <= 64 {
            // Floyd's algorithm on a bit mask, taking the complement when
            // more than half the span is picked.
            let mut mask = 0u64;
            for j in span - moves..span {
                let t = super::uniform_index(rng, 0, j + 1);
                mask |= if mask >> t & 1 == 1 { 1 << j } else { 1 << t };
            }
            if moves < picks {
                mask = !mask & (u64::MAX >> (64 - span));
            }
            while mask != 0 {
                out.push(free[mask.trailing_zeros() as usize]);
                mask &= mask - 1;
            }
            return;
        }
        let slots = &mut scratch.slots;
        slots.clear();
        slots.extend(0..span);
        for k in 0..moves {
            let j = super::uniform_index(rng, k, span);
            slots.swap(k, j);
        }
        let chosen = if picks == moves { &slots[..moves] } else { &slots[moves..] };
        out.extend(chosen.iter().map(|&s| free[s]));
    }

    /// Probability that one draw returns exactly `set` (coordinates, any order).
    pub fn subset_probability(&self, set: &[usize]) -> f64 {
        if set.len() != self.batch {
            return 0.0;
        }
        let mut rank = vec![0; self.len()];
        for (pos, &i) in self.order.iter().enumerate() {
            rank[i] = pos;
        }
        let mut pos: Vec<usize> = set.iter().map(|&i| rank[i]).collect();
        pos.sort_unstable();
        pos.dedup();
        if pos.len() != self.batch {
            return 0.0;
        }
        let mut total = 0.0;
        for l in &self.levels {
            let prefix = pos.iter().take_while(|&&p| p < l.fixed).count();
            if prefix == l.fixed && pos[self.batch - 1] < l.free_end {
                total += l.mass / binomial(l.free_end - l.fixed, self.batch - l.fixed);
            }
        }
        total
    }

    /// Number of subsets the widest level can return.
    pub fn widest_level_subsets(&self) -> f64 {
        self.levels
            .iter()
            .map(|l| binomial(l.free_end - l.fixed, self.batch - l.fixed))
            .fold(0.0, f64::max)
    }

    /// Exact inclusion probability of each coordinate under the plan.
    pub fn marginals(&self) -> Vec<f64> {
        let mut sorted = vec![0.0; self.len()];
        for l in &self.levels {
            for x in &mut sorted[..l.fixed] {
                *x += l.mass;
            }
            let share = (self.batch - l.fixed) as f64 / (l.free_end - l.fixed) as f64;
            for x in &mut sorted[l.fixed..l.free_end] {
                *x += l.mass * share;
            }
        }
        let mut out = vec![0.0; self.len()];
        for (pos, &i) in self.order.iter().enumerate() {
            out[i] = sorted[pos];
        }
        out
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, j| acc * (n - j) as f64 / (j + 1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampler::rng_from_seed;

    #[test]
    fn toy_instance_levels() {
        let plan = SamplingPlan::build(&[0.8, 0.6, 0.4, 0.2], 2).unwrap();
        let masses: Vec<f64> = plan.levels().iter().map(|l| l.mass).collect();
        assert_eq!(masses.len(), 3);
        for (a, b) in masses.iter().zip([0.2, 0.4, 0.4]) {
            assert!((a - b).abs() < 1e-10, "{masses:?}");
        }
        let spans: Vec<(usize, usize)> = plan.levels().iter().map(|l| (l.first_free_1based(), l.last_free_1based())).collect();
        assert_eq!(spans, vec![(2, 2), (2, 3), (1, 4)]);
        for (a, b) in plan.marginals().iter().zip([0.8, 0.6, 0.4, 0.2]) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn subset_probabilities_sum_to_one() {
        let plan = SamplingPlan::build(&[0.8, 0.6, 0.4, 0.2], 2).unwrap();
        let mut total = 0.0;
        for a in 0..4 {
            for b in a + 1..4 {
                total += plan.subset_probability(&[a, b]);
            }
        }
        assert!((total - 1.0).abs() < 1e-12);
        assert!((plan.subset_probability(&[0, 1]) - (0.2 + 0.4 / 2.0 + 0.4 / 6.0)).abs() < 1e-12);
        assert_eq!(plan.subset_probability(&[0]), 0.0);
        assert_eq!(plan.widest_level_subsets(), 6.0);
    }

    #[test]
    fn uniform_marginals_take_one_step() {
        let plan = SamplingPlan::build(&[0.5; 6], 3).unwrap();
        assert_eq!(plan.levels().len(), 1);
        assert_eq!(plan.levels()[0], Level { mass: 1.0, fixed: 0, free_end: 6 });
    }

    #[test]
    fn unsorted_input_is_mapped_back() {
        let q = [0.2, 0.8, 0.4, 0.6];
        let plan = SamplingPlan::build(&q, 2).unwrap();
        for (a, b) in plan.marginals().iter().zip(q) {
            assert!((a - b).abs() <= 1e-12);
        }
        let mut rng = rng_from_seed(11);
        for _ in 0..1000 {
            let s = plan.draw(&mut rng);
            assert_eq!(s.len(), 2);
            assert!(s[0] < s[1]);
        }
    }

    #[test]
    fn infeasible_marginals() {
        assert!(matches!(
            SamplingPlan::build(&[1.0, 0.5, 0.5], 2),
            Err(Error::Infeasible { coord: 0, .. })
        ));
        assert!(matches!(
            SamplingPlan::build(&[0.5, 0.0, 0.5, 1.0], 2),
            Err(Error::Infeasible { coord: 1, .. })
        ));
        assert!(SamplingPlan::build(&[0.5, 0.5, 0.5], 2).is_err());
        assert!(SamplingPlan::build(&[0.5, 0.5], 2).is_err());
    }
}
