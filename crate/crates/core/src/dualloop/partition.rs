use alloc::vec::Vec;
use core::fmt;

use rand::Rng;

use super::model::{Batch, Gather};
use crate::autodiff::{AdError, Result};
use crate::domain::Regime;

/// Subset of the three regimes, bit `r.index()` set when `r` is a member.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RegimeSet(u8);

impl RegimeSet {
    pub const EMPTY: RegimeSet = RegimeSet(0);
    pub const ALL: RegimeSet = RegimeSet(0b111);

    pub fn new(regimes: &[Regime]) -> RegimeSet {
        RegimeSet(regimes.iter().fold(0, |m, r| m | 1 << r.index()))
    }

    pub fn bits(self) -> u8 {
        self.0
    }

    pub fn contains(self, r: Regime) -> bool {
        self.0 & (1 << r.index()) != 0
    }

    pub fn complement(self) -> RegimeSet {
        RegimeSet(!self.0 & 0b111)
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = Regime> {
        Regime::ALL.into_iter().filter(move |&r| self.contains(r))
    }
}

impl fmt::Display for RegimeSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, r) in self.iter().enumerate() {
            if i > 0 {
                f.write_str("+")?;
            }
            f.write_str(r.short_name())?;
        }
        Ok(())
    }
}

/// Ordered split of the regimes into disjoint, nonempty support and query
/// groups that together cover all three.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(try_from = "PartitionRepr", into = "PartitionRepr"))]
pub struct RegimePartition {
    support: RegimeSet,
}

impl RegimePartition {
    /// Every valid partition, ordered by support bitmask.
    pub const ALL: [RegimePartition; 6] = [
        RegimePartition { support: RegimeSet(1) },
        RegimePartition { support: RegimeSet(2) },
        RegimePartition { support: RegimeSet(3) },
        RegimePartition { support: RegimeSet(4) },
        RegimePartition { support: RegimeSet(5) },
        RegimePartition { support: RegimeSet(6) },
    ];

    /// `None` unless `support` is a nonempty proper subset.
    pub fn with_support(support: RegimeSet) -> Option<RegimePartition> {
        (!support.is_empty() && support != RegimeSet::ALL).then_some(RegimePartition { support })
    }

    pub fn new(support: RegimeSet, query: RegimeSet) -> Option<RegimePartition> {
        if query != support.complement() {
            return None;
        }
        RegimePartition::with_support(support)
    }

    pub fn support(self) -> RegimeSet {
        self.support
    }

    pub fn query(self) -> RegimeSet {
        self.support.complement()
    }

    /// Position in [`RegimePartition::ALL`].
    pub fn index(self) -> usize {
        self.support.0 as usize - 1
    }
}

impl fmt::Display for RegimePartition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}|{}", self.support(), self.query())
    }
}

#[cfg(feature = "serde")]
#[derive(serde::Serialize, serde::Deserialize)]
struct PartitionRepr {
    support: Vec<Regime>,
    query: Vec<Regime>,
}

#[cfg(feature = "serde")]
impl TryFrom<PartitionRepr> for RegimePartition {
    type Error = &'static str;

    fn try_from(r: PartitionRepr) -> core::result::Result<RegimePartition, &'static str> {
        RegimePartition::new(RegimeSet::new(&r.support), RegimeSet::new(&r.query))
            .ok_or("support and query must be disjoint, nonempty and cover all regimes")
    }
}

#[cfg(feature = "serde")]
impl From<RegimePartition> for PartitionRepr {
    fn from(p: RegimePartition) -> PartitionRepr {
        PartitionRepr {
            support: p.support().iter().collect(),
            query: p.query().iter().collect(),
        }
    }
}

/// Uniform draw over the six partitions.
pub fn sample_partition<R: Rng + ?Sized>(rng: &mut R) -> RegimePartition {
    RegimePartition::ALL[rng.random_range(0..6)]
}

/// One batch per regime, indexed by [`Regime::index`]. Batches may be empty.
#[derive(Clone, Debug, PartialEq)]
pub struct RegimeBatches<B>(pub [B; 3]);

impl<B: Batch> RegimeBatches<B> {
    pub fn get(&self, r: Regime) -> &B {
        &self.0[r.index()]
    }

    /// Concatenation of the member regimes' batches, in regime order.
    pub fn assemble(&self, set: RegimeSet) -> Result<B> {
        let parts: Vec<&B> = set.iter().map(|r| self.get(r)).collect();
        B::concat(&parts)
    }

    pub fn total_len(&self) -> usize {
        self.0.iter().map(Batch::len).sum()
    }
}

/// Per-regime training pools that minibatches are drawn from.
#[derive(Clone, Debug, PartialEq)]
pub struct RegimePools<B>(pub [B; 3]);

impl<B: Gather> RegimePools<B> {
    pub fn get(&self, r: Regime) -> &B {
        &self.0[r.index()]
    }

    /// `per_regime` rows from every regime, uniformly with replacement.
    pub fn balanced<R: Rng + ?Sized>(&self, per_regime: usize, rng: &mut R) -> Result<RegimeBatches<B>> {
        if self.0.iter().any(Batch::is_empty) {
            return Err(AdError::Empty("regime pool"));
        }
        let draw = |pool: &B, rng: &mut R| {
            let rows: Vec<usize> = (0..per_regime).map(|_| rng.random_range(0..pool.len())).collect();
            pool.gather(&rows)
        };
        let a = draw(&self.0[0], rng);
        let b = draw(&self.0[1], rng);
        let c = draw(&self.0[2], rng);
        Ok(RegimeBatches([a, b, c]))
    }

    /// `total` rows uniformly with replacement from the union of the pools,
    /// regrouped by regime. Each regime's share follows its pool size.
    pub fn pooled<R: Rng + ?Sized>(&self, total: usize, rng: &mut R) -> Result<RegimeBatches<B>> {
        let sizes = self.0.each_ref().map(Batch::len);
        let n: usize = sizes.iter().sum();
        if n == 0 {
            return Err(AdError::Empty("pooled draw"));
        }
        let mut rows: [Vec<usize>; 3] = Default::default();
        for _ in 0..total {
            let mut i = rng.random_range(0..n);
            let mut r = 0;
            while i >= sizes[r] {
                i -= sizes[r];
                r += 1;
            }
            rows[r].push(i);
        }
        Ok(RegimeBatches([
            self.0[0].gather(&rows[0]),
            self.0[1].gather(&rows[1]),
            self.0[2].gather(&rows[2]),
        ]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dualloop::LabeledBatch;
    use crate::rng::seeded;

    #[test]
    fn exactly_six_valid_partitions() {
        let valid: Vec<_> = (0u8..8).filter_map(|m| RegimePartition::with_support(RegimeSet(m))).collect();
        assert_eq!(valid.len(), 6);
        assert_eq!(valid, RegimePartition::ALL.to_vec());
        for p in valid {
            assert!(!p.support().is_empty() && !p.query().is_empty());
            assert_eq!(p.support().bits() & p.query().bits(), 0);
            assert_eq!(p.support().bits() | p.query().bits(), 0b111);
            assert_eq!(RegimePartition::ALL[p.index()], p);
        }
        assert!(RegimePartition::new(RegimeSet(1), RegimeSet(2)).is_none());
    }

    #[test]
    fn partition_frequencies_are_uniform() {
        let mut rng = seeded(3, 0);
        let n = 60_000;
        let mut counts = [0usize; 6];
        for _ in 0..n {
            counts[sample_partition(&mut rng).index()] += 1;
        }
        let expected = n as f64 / 6.0;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        // Upper 0.001 quantile of chi-square with 5 degrees of freedom.
        assert!(chi2 < 20.515, "chi2 = {chi2}");
        for c in counts {
            assert!((c as f64 / n as f64 - 1.0 / 6.0).abs() <= 0.01);
        }
    }

    #[test]
    fn display_forms() {
        let p = RegimePartition::new(RegimeSet::new(&[Regime::Mild]), RegimeSet::new(&[Regime::Standard, Regime::Severe])).unwrap();
        assert_eq!(alloc::format!("{p}"), "mild|std+severe");
    }

    fn pool(rows: usize, tag: f64) -> LabeledBatch {
        LabeledBatch::new(1, 1, alloc::vec![tag; rows], alloc::vec![0.0; rows]).unwrap()
    }

    #[test]
    fn balanced_and_pooled_draws() {
        let pools = RegimePools([pool(50, 0.0), pool(30, 1.0), pool(20, 2.0)]);
        let mut rng = seeded(4, 0);
        let b = pools.balanced(8, &mut rng).unwrap();
        assert!(b.0.iter().all(|x| x.len() == 8));
        assert_eq!(b.assemble(RegimeSet::new(&[Regime::Mild, Regime::Severe])).unwrap().len(), 16);

        let mut counts = [0usize; 3];
        for _ in 0..200 {
            let p = pools.pooled(10, &mut rng).unwrap();
            assert_eq!(p.total_len(), 10);
            for r in Regime::ALL {
                assert!(p.get(r).features().iter().all(|&v| v == r.index() as f64));
                counts[r.index()] += p.get(r).len();
            }
        }
        let share = counts[0] as f64 / 2000.0;
        assert!((share - 0.5).abs() < 0.05, "{share}");
    }

    #[test]
    fn empty_pool_is_rejected() {
        let pools = RegimePools([pool(5, 0.0), pool(0, 1.0), pool(5, 2.0)]);
        assert!(pools.balanced(2, &mut seeded(0, 0)).is_err());
        assert!(pools.pooled(4, &mut seeded(0, 0)).is_ok());
    }
}
