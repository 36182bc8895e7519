//! Vocabulary shared by every module.

use core::fmt;

/// Number of synthetic findings each study is labeled with.
pub const NUM_FINDINGS: usize = 4;

/// Acquisition-quality stratum.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Regime {
    #[cfg_attr(feature = "serde", serde(rename = "std"))]
    Standard,
    Mild,
    Severe,
}

impl Regime {
    pub const ALL: [Regime; 3] = [Regime::Standard, Regime::Mild, Regime::Severe];

    pub fn index(self) -> usize {
        match self {
            Regime::Standard => 0,
            Regime::Mild => 1,
            Regime::Severe => 2,
        }
    }

    pub fn from_index(index: usize) -> Option<Regime> {
        Regime::ALL.get(index).copied()
    }

    /// Short name used in file names, CSV cells and config keys.
    pub fn short_name(self) -> &'static str {
        match self {
            Regime::Standard => "std",
            Regime::Mild => "mild",
            Regime::Severe => "severe",
        }
    }

    pub fn from_short_name(name: &str) -> Option<Regime> {
        Regime::ALL.into_iter().find(|r| r.short_name() == name)
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn index(self) -> usize {
        match self {
            Split::Train => 0,
            Split::Val => 1,
            Split::Test => 2,
        }
    }

    pub fn from_index(index: usize) -> Option<Split> {
        Split::ALL.get(index).copied()
    }

    pub fn short_name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

/// K-bit finding mask; bit `k` set iff finding `k` is present.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(transparent))]
pub struct FindingMask(u8);

impl FindingMask {
    pub const EMPTY: FindingMask = FindingMask(0);
    const VALID: u8 = (1 << NUM_FINDINGS) - 1;

    /// Builds a mask, rejecting bits beyond [`NUM_FINDINGS`].
    pub fn new(bits: u8) -> Option<FindingMask> {
        (bits & !Self::VALID == 0).then_some(FindingMask(bits))
    }

    pub fn from_flags(flags: [bool; NUM_FINDINGS]) -> FindingMask {
        let mut bits = 0;
        for (k, &on) in flags.iter().enumerate() {
            if on {
                bits |= 1 << k;
            }
        }
        FindingMask(bits)
    }

    pub fn bits(self) -> u8 {
        self.0
    }

    pub fn has(self, finding: usize) -> bool {
        finding < NUM_FINDINGS && self.0 & (1 << finding) != 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn count(self) -> u32 {
        self.0.count_ones()
    }

    /// All 2^K masks in increasing bit order.
    pub fn all() -> impl Iterator<Item = FindingMask> {
        (0..=Self::VALID).map(FindingMask)
    }
}

impl fmt::Display for FindingMask {
    /// Renders bit 0 first, e.g. `1100` has findings 0 and 1.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for k in 0..NUM_FINDINGS {
            f.write_str(if self.has(k) { "1" } else { "0" })?;
        }
        Ok(())
    }
}
