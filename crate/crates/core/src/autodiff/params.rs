//! Parameter layouts and the gradient tape that binds them.

use serde::{Deserialize, Serialize};

use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::{Result, SgmError};
use crate::scalar::Scalar;

/// A matrix-shaped slice of a flat parameter vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Block {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Layout {
    blocks: Vec<Block>,
    total: usize,
}

impl Layout {
    pub fn push(&mut self, rows: usize, cols: usize) -> Block {
        let b = Block { offset: self.total, rows, cols };
        self.total += b.len();
        self.blocks.push(b);
        b
    }

    pub fn total(&self) -> usize {
        self.total
    }
}

/// Identifies one network's parameters on a [`GradTape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GroupId(usize);

struct Group {
    n_params: usize,
    leaves: Vec<(Var, usize)>,
}

/// A tape plus the bookkeeping that maps parameter leaves back into flat
/// gradient vectors. Several networks may share one tape; each registers a
/// group, and networks bound without a group act as constants.
pub struct GradTape<T> {
    pub tape: Tape<T>,
    groups: Vec<Group>,
}

impl<T: Scalar> Default for GradTape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> GradTape<T> {
    pub fn new() -> Self {
        Self { tape: Tape::new(), groups: Vec::new() }
    }

    /// Registers a parameter vector of length `n_params`.
    pub fn group(&mut self, n_params: usize) -> GroupId {
        self.groups.push(Group { n_params, leaves: Vec::new() });
        GroupId(self.groups.len() - 1)
    }

    /// Places `params[block]` on the tape, as a trainable leaf of `group` or as a constant.
    pub fn bind(&mut self, group: Option<GroupId>, params: &[T], block: Block) -> Var {
        let t = Tensor::new(block.rows, block.cols, params[block.range()].to_vec());
        match group {
            Some(g) => {
                let v = self.tape.var(t);
                self.groups[g.0].leaves.push((v, block.offset));
                v
            }
            None => self.tape.constant(t),
        }
    }

    /// Gradient of the scalar `out` with respect to every parameter of `group`.
    pub fn backward(&self, out: Var, group: GroupId) -> Result<Vec<T>> {
        let grads = self.tape.backward(out)?;
        let g = self.groups.get(group.0).ok_or_else(|| SgmError::Usage("unknown parameter group".into()))?;
        let mut flat = vec![T::zero(); g.n_params];
        for &(v, offset) in &g.leaves {
            if let Some(t) = grads.get(v) {
                for (dst, &src) in flat[offset..offset + t.data().len()].iter_mut().zip(t.data()) {
                    *dst = *dst + src;
                }
            }
        }
        Ok(flat)
    }
}
