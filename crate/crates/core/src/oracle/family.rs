use std::collections::BTreeSet;

use itertools::Itertools;
use num_traits::ToPrimitive;
use rand::seq::index::sample;
use rand::Rng;

use crate::combinatorics::binom;
use crate::majority::Support;
use crate::rng::{purpose, stream_rng};

use super::OracleError;

/// Largest `C(d,k)` enumerated in exhaustive mode.
pub const DEFAULT_FAMILY_CAP: u64 = 1_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FamilyMode {
    Exhaustive,
    Sampled { count: usize, seed: u64 },
    /// A caller-supplied list, possibly with repeats.
    Explicit,
}

/// A list of supports over which oracle quantities are averaged.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SupportFamily {
    d: usize,
    k: usize,
    mode: FamilyMode,
    supports: Vec<Support>,
}

fn check_shape(d: usize, k: usize) -> Result<(), OracleError> {
    if k == 0 || k > d {
        return Err(OracleError::InvalidFamily(format!("need 1 <= k <= d, got d = {d}, k = {k}")));
    }
    Ok(())
}

fn subset(d: usize, indices: Vec<usize>) -> Support {
    Support::new(d, indices).expect("combinations are strictly increasing")
}

impl SupportFamily {
    /// All k-subsets of `[d]` in lexicographic order.
    pub fn exhaustive(d: usize, k: usize) -> Result<Self, OracleError> {
        Self::exhaustive_with_cap(d, k, DEFAULT_FAMILY_CAP)
    }

    pub fn exhaustive_with_cap(d: usize, k: usize, cap: u64) -> Result<Self, OracleError> {
        check_shape(d, k)?;
        let total = binom(d as u64, k as u64);
        if total > cap.into() {
            return Err(OracleError::CapExceeded { needed: total.to_string(), cap });
        }
        let supports = (0..d).combinations(k).map(|c| subset(d, c)).collect();
        Ok(Self { d, k, mode: FamilyMode::Exhaustive, supports })
    }

    /// `count` distinct supports drawn uniformly without replacement, sorted.
    pub fn sampled(d: usize, k: usize, count: usize, seed: u64) -> Result<Self, OracleError> {
        check_shape(d, k)?;
        let total = binom(d as u64, k as u64);
        if total < count.into() {
            return Err(OracleError::InvalidFamily(format!("cannot draw {count} distinct supports from {total}")));
        }
        let mut rng = stream_rng(seed, purpose::SUPPORTS, 0);
        let supports: Vec<Support> = match total.to_u64().filter(|&t| t <= DEFAULT_FAMILY_CAP) {
            Some(t) => {
                let all: Vec<Vec<usize>> = (0..d).combinations(k).collect();
                let mut picked = sample(&mut rng, t as usize, count).into_vec();
                picked.sort_unstable();
                picked.into_iter().map(|i| subset(d, all[i].clone())).collect()
            }
            None => {
                let mut seen = BTreeSet::new();
                while seen.len() < count {
                    let mut idx = sample(&mut rng, d, k).into_vec();
                    idx.sort_unstable();
                    seen.insert(idx);
                }
                seen.into_iter().map(|idx| subset(d, idx)).collect()
            }
        };
        Ok(Self {
            d,
            k,
            mode: FamilyMode::Sampled { count, seed },
            supports,
        })
    }

    pub fn from_supports(supports: Vec<Support>) -> Result<Self, OracleError> {
        let first = supports.first().ok_or_else(|| OracleError::InvalidFamily("empty family".into()))?;
        let (d, k) = (first.d(), first.k());
        if supports.iter().any(|s| s.d() != d || s.k() != k) {
            return Err(OracleError::InvalidFamily("supports differ in d or k".into()));
        }
        Ok(Self { d, k, mode: FamilyMode::Explicit, supports })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn mode(&self) -> FamilyMode {
        self.mode
    }

    pub fn supports(&self) -> &[Support] {
        &self.supports
    }

    pub fn len(&self) -> usize {
        self.supports.len()
    }

    pub fn is_empty(&self) -> bool {
        self.supports.is_empty()
    }

    pub fn is_exhaustive(&self) -> bool {
        self.mode == FamilyMode::Exhaustive
    }

    pub fn position(&self, s: &Support) -> Option<usize> {
        match self.mode {
            FamilyMode::Explicit => self.supports.iter().position(|t| t == s),
            _ => self.supports.binary_search(s).ok(),
        }
    }

    /// A uniformly random member, used as the hidden support of a run.
    pub fn pick(&self, seed: u64) -> usize {
        stream_rng(seed, purpose::HIDDEN_SUPPORT, 0).random_range(0..self.len())
    }
}

/// `σ(S) = {(j mod d) + 1 : j ∈ S}` in 1-based terms, i.e. every index moves up
/// by one with `d` wrapping to 1.
pub fn cyclic_shift(s: &Support) -> Support {
    let d = s.d();
    let mut idx: Vec<usize> = s.indices().iter().map(|&j| (j + 1) % d).collect();
    idx.sort_unstable();
    subset(d, idx)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ShiftReport {
    pub fixed_points: Vec<Support>,
    /// `Some(σ(Q) ⊆ Q)` when a set `Q` was supplied.
    pub maps_into: Option<bool>,
}

/// Applies the cyclic shift to every support of `family` and, if given, checks
/// whether the members listed in `q` (positions in `family`) are mapped into `q`.
pub fn shift_automorphism(family: &SupportFamily, q: Option<&[usize]>) -> ShiftReport {
    let fixed_points = family
        .supports()
        .iter()
        .filter(|s| &cyclic_shift(s) == *s)
        .cloned()
        .collect();
    let maps_into = q.map(|q| {
        let members: BTreeSet<&Support> = q.iter().map(|&i| &family.supports()[i]).collect();
        members.iter().all(|s| members.contains(&cyclic_shift(s)))
    });
    ShiftReport { fixed_points, maps_into }
}
