use std::fmt;

use super::PceError;

/// Exponent vector of one multivariate polynomial.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MultiIndex(Vec<u32>);

impl MultiIndex {
    pub fn new(exponents: Vec<u32>) -> Self {
        Self(exponents)
    }

    pub fn zero(dim: usize) -> Self {
        Self(vec![0; dim])
    }

    pub fn exponents(&self) -> &[u32] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// Total degree |alpha|.
    pub fn degree(&self) -> usize {
        self.0.iter().map(|&a| a as usize).sum()
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, a) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{a}")?;
        }
        write!(f, ")")
    }
}

/// Binomial coefficient C(n, k), or `None` on u64 overflow.
pub fn binomial(n: u64, k: u64) -> Option<u64> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        // acc * (n - i) / (i + 1) stays integral at every step
        acc = acc.checked_mul((n - i) as u128)? / (i as u128 + 1);
        if acc > u64::MAX as u128 {
            return None;
        }
    }
    Some(acc as u64)
}

/// The total-degree set of all alpha in N_0^d with |alpha| <= N.
///
/// Ordering is graded lexicographic: by total degree, then by exponent vector
/// in descending lexicographic order, so `(1,0)` precedes `(0,1)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MultiIndexSet {
    dim: usize,
    degree: usize,
    indices: Vec<MultiIndex>,
}

impl MultiIndexSet {
    /// Number of terms C(d+N, d), checked against overflow.
    pub fn cardinality(dim: usize, degree: usize) -> Result<usize, PceError> {
        if dim == 0 {
            return Err(PceError::ZeroDimension);
        }
        let overflow = || PceError::SizeOverflow { dim, degree };
        let n = (dim as u64).checked_add(degree as u64).ok_or_else(overflow)?;
        let count = binomial(n, dim as u64).ok_or_else(overflow)?;
        usize::try_from(count).map_err(|_| overflow())
    }

    pub fn total_degree(dim: usize, degree: usize) -> Result<Self, PceError> {
        let count = Self::cardinality(dim, degree)?;
        let mut indices = Vec::new();
        indices.try_reserve_exact(count).map_err(|_| PceError::SizeOverflow { dim, degree })?;
        let mut scratch = vec![0u32; dim];
        for k in 0..=degree {
            push_compositions(&mut scratch, 0, k as u32, &mut indices);
        }
        debug_assert_eq!(indices.len(), count);
        Ok(Self { dim, degree, indices })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &[MultiIndex] {
        &self.indices
    }

    pub fn iter(&self) -> std::slice::Iter<'_, MultiIndex> {
        self.indices.iter()
    }

    /// True when every index of `self` appears in `other` at the same position.
    pub fn is_prefix_of(&self, other: &MultiIndexSet) -> bool {
        self.dim == other.dim
            && self.len() <= other.len()
            && self.indices.iter().zip(&other.indices).all(|(a, b)| a == b)
    }
}

/// Appends every composition of `remaining` into `scratch[pos..]`, largest
/// leading exponent first.
fn push_compositions(scratch: &mut [u32], pos: usize, remaining: u32, out: &mut Vec<MultiIndex>) {
    if pos + 1 == scratch.len() {
        scratch[pos] = remaining;
        out.push(MultiIndex(scratch.to_vec()));
        scratch[pos] = 0;
        return;
    }
    for first in (0..=remaining).rev() {
        scratch[pos] = first;
        push_compositions(scratch, pos + 1, remaining - first, out);
    }
    scratch[pos] = 0;
}
