//! Block-diagonal complex matrices.
//!
//! A Galerkin operator built from a flow with finitely many Fourier modes
//! only couples lattice points that differ by an element of the flow's
//! support, so it is block diagonal (after a permutation) with one block per
//! connected component of the coupling graph. Everything downstream - eigen
//! solves, resolvents, exponentials, projections - factorizes over blocks.

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{frobenius, max_abs, norm2, CMat};
use crate::scalar::{czero, Cx, Real};

/// Partition of `0..dim` into ordered index groups.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockPartition {
    dim: usize,
    groups: Vec<Vec<usize>>,
    owner: Vec<(usize, usize)>,
}

impl BlockPartition {
    /// Groups are sorted internally and ordered by their smallest index.
    pub fn new(dim: usize, mut groups: Vec<Vec<usize>>) -> Result<Self> {
        for g in groups.iter_mut() {
            g.sort_unstable();
        }
        groups.retain(|g| !g.is_empty());
        groups.sort_by_key(|g| g[0]);
        let mut owner = vec![(usize::MAX, 0); dim];
        for (b, g) in groups.iter().enumerate() {
            for (l, &c) in g.iter().enumerate() {
                if c >= dim || owner[c].0 != usize::MAX {
                    return Err(Error::InvalidArgument(format!("index {c} duplicated or out of range")));
                }
                owner[c] = (b, l);
            }
        }
        if owner.iter().any(|o| o.0 == usize::MAX) {
            return Err(Error::InvalidArgument("partition does not cover every index".into()));
        }
        Ok(Self { dim, groups, owner })
    }

    /// Single block holding everything.
    pub fn whole(dim: usize) -> Self {
        Self { dim, groups: if dim == 0 { vec![] } else { vec![(0..dim).collect()] }, owner: (0..dim).map(|i| (0, i)).collect() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn group(&self, b: usize) -> &[usize] {
        &self.groups[b]
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    /// `(block, local index)` of a global index.
    pub fn owner(&self, i: usize) -> (usize, usize) {
        self.owner[i]
    }

    pub fn largest(&self) -> usize {
        self.groups.iter().map(Vec::len).max().unwrap_or(0)
    }
}

/// Matrix stored as dense diagonal blocks over a [`BlockPartition`].
#[derive(Debug, Clone)]
pub struct BlockMatrix<T: Real> {
    partition: Arc<BlockPartition>,
    blocks: Vec<CMat<T>>,
}

impl<T: Real> BlockMatrix<T> {
    pub fn new(partition: Arc<BlockPartition>, blocks: Vec<CMat<T>>) -> Result<Self> {
        if blocks.len() != partition.len() {
            return Err(Error::DimensionMismatch { expected: partition.len(), got: blocks.len() });
        }
        for (b, m) in blocks.iter().enumerate() {
            let n = partition.group(b).len();
            if m.nrows() != n || m.ncols() != n {
                return Err(Error::DimensionMismatch { expected: n, got: m.nrows() });
            }
        }
        Ok(Self { partition, blocks })
    }

    pub fn zeros(partition: Arc<BlockPartition>) -> Self {
        let blocks = partition.groups().iter().map(|g| CMat::zeros(g.len(), g.len())).collect();
        Self { partition, blocks }
    }

    pub fn identity(partition: Arc<BlockPartition>) -> Self {
        let blocks = partition.groups().iter().map(|g| CMat::identity(g.len(), g.len())).collect();
        Self { partition, blocks }
    }

    /// Extracts the diagonal blocks of a dense matrix (off-block entries are ignored).
    pub fn from_dense(partition: Arc<BlockPartition>, a: &CMat<T>) -> Self {
        let blocks = partition
            .groups()
            .iter()
            .map(|g| CMat::from_fn(g.len(), g.len(), |i, j| a[(g[i], g[j])]))
            .collect();
        Self { partition, blocks }
    }

    pub fn partition(&self) -> &Arc<BlockPartition> {
        &self.partition
    }

    pub fn dim(&self) -> usize {
        self.partition.dim()
    }

    pub fn blocks(&self) -> &[CMat<T>] {
        &self.blocks
    }

    pub fn block(&self, b: usize) -> &CMat<T> {
        &self.blocks[b]
    }

    pub fn block_mut(&mut self, b: usize) -> &mut CMat<T> {
        &mut self.blocks[b]
    }

    /// Entry `(i, j)` in global indexing.
    pub fn get(&self, i: usize, j: usize) -> Cx<T> {
        let (bi, li) = self.partition.owner(i);
        let (bj, lj) = self.partition.owner(j);
        if bi == bj {
            self.blocks[bi][(li, lj)]
        } else {
            czero()
        }
    }

    pub fn to_dense(&self) -> CMat<T> {
        let n = self.dim();
        let mut a = CMat::zeros(n, n);
        for (g, m) in self.partition.groups().iter().zip(&self.blocks) {
            for (i, &gi) in g.iter().enumerate() {
                for (j, &gj) in g.iter().enumerate() {
                    a[(gi, gj)] = m[(i, j)];
                }
            }
        }
        a
    }

    /// Matrix-vector product in global indexing.
    pub fn apply(&self, x: &[Cx<T>]) -> Result<Vec<Cx<T>>> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: x.len() });
        }
        let mut y = vec![czero(); x.len()];
        for (g, m) in self.partition.groups().iter().zip(&self.blocks) {
            for (i, &gi) in g.iter().enumerate() {
                let mut acc = czero::<T>();
                for (j, &gj) in g.iter().enumerate() {
                    acc += m[(i, j)] * x[gj];
                }
                y[gi] = acc;
            }
        }
        Ok(y)
    }

    /// Applies `f` to every block (in parallel; output order is by block).
    pub fn try_map<F>(&self, f: F) -> Result<Self>
    where
        F: Fn(usize, &CMat<T>) -> Result<CMat<T>> + Sync + Send,
    {
        let blocks = self.blocks.par_iter().enumerate().map(|(b, m)| f(b, m)).collect::<Result<Vec<_>>>()?;
        Self::new(self.partition.clone(), blocks)
    }

    fn same_partition(&self, other: &Self) -> Result<()> {
        if Arc::ptr_eq(&self.partition, &other.partition) || self.partition == other.partition {
            Ok(())
        } else {
            Err(Error::ModeSetMismatch)
        }
    }

    pub fn zip_map<F>(&self, other: &Self, f: F) -> Result<Self>
    where
        F: Fn(&CMat<T>, &CMat<T>) -> CMat<T>,
    {
        self.same_partition(other)?;
        let blocks = self.blocks.iter().zip(&other.blocks).map(|(a, b)| f(a, b)).collect();
        Ok(Self { partition: self.partition.clone(), blocks })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a * b)
    }

    pub fn scale(&self, s: Cx<T>) -> Self {
        Self { partition: self.partition.clone(), blocks: self.blocks.iter().map(|m| m * s).collect() }
    }

    /// Operator 2-norm, the largest blockwise singular value.
    pub fn norm2(&self) -> T {
        self.blocks.iter().map(norm2).fold(T::zero(), |a, b| a.max(b))
    }

    pub fn frobenius(&self) -> T {
        self.blocks.iter().map(|m| frobenius(m).powi(2)).fold(T::zero(), |a, b| a + b).sqrt()
    }

    pub fn max_abs(&self) -> T {
        self.blocks.iter().map(max_abs).fold(T::zero(), |a, b| a.max(b))
    }

    pub fn trace(&self) -> Cx<T> {
        self.blocks.iter().fold(czero(), |acc, m| acc + m.trace())
    }
}
