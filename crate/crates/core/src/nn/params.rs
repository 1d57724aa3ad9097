use crate::error::{Error, Result};

/// A fixed tree of parameter tensors with a canonical traversal order.
///
/// Checkpoints, optimizer moments and gradient buffers all rely on
/// `tensors` and `tensors_mut` visiting the same tensors in the same order.
pub trait ParamTree {
    fn tensors(&self) -> Vec<&[f64]>;
    fn tensors_mut(&mut self) -> Vec<&mut [f64]>;

    fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for t in self.tensors() {
            out.extend_from_slice(t);
        }
        out
    }

    fn assign_flat(&mut self, flat: &[f64]) -> Result<()> {
        let n = self.num_params();
        if flat.len() != n {
            return Err(Error::Contract(format!(
                "flat parameter vector has {} entries, tree has {n}",
                flat.len()
            )));
        }
        let mut off = 0;
        for t in self.tensors_mut() {
            t.copy_from_slice(&flat[off..off + t.len()]);
            off += t.len();
        }
        Ok(())
    }

    fn fill(&mut self, v: f64) {
        for t in self.tensors_mut() {
            t.fill(v);
        }
    }

    fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    /// Shape signature: the length of each tensor in traversal order.
    fn shape_signature(&self) -> Vec<usize> {
        self.tensors().iter().map(|t| t.len()).collect()
    }
}

/// Clone of `tree` with every entry set to zero; used for gradient buffers.
pub fn zeros_like<T: ParamTree + Clone>(tree: &T) -> T {
    let mut z = tree.clone();
    z.fill(0.0);
    z
}
