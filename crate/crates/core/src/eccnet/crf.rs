use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diffcore::{ParamStore, Reduce, Session, TensorError, Var};
use crate::scalar::Scalar;

use super::ecc::EdgeBatch;
use super::mlp::{Arity, FilterNet, FilterNetConfig};

type Result<T> = std::result::Result<T, TensorError>;

/// Mean-field inference whose pairwise term is an edge-conditioned
/// `c × c` compatibility matrix:
///
/// ```text
/// Q_i ← softmax(U_i)
/// repeat T times:  Q_i ← softmax(U_i − Σ_{(j,i)} w(E_ji) Q_j)
/// ```
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CrfEcc {
    pub filter: FilterNet,
    pub classes: usize,
    pub iterations: usize,
}

impl CrfEcc {
    pub fn new<T: Scalar, R: Rng>(
        store: &mut ParamStore<T>,
        rng: &mut R,
        name: &str,
        attr_dim: usize,
        classes: usize,
        iterations: usize,
        cfg: &FilterNetConfig,
    ) -> Self {
        let filter =
            FilterNet::new(store, rng, &format!("{name}.w"), attr_dim, Arity::Matrix { dout: classes, din: classes }, cfg);
        CrfEcc { filter, classes, iterations }
    }

    /// All iterates `[Q^0, ..., Q^T]`; `eb` must be built without self-loops.
    pub fn infer_all<T: Scalar>(&self, s: &mut Session<T>, eb: &EdgeBatch<T>, unary: Var) -> Result<Vec<Var>> {
        if s.value(unary).cols() != self.classes {
            return Err(TensorError::Shape {
                op: "crf_ecc",
                detail: format!("unary width {} != {}", s.value(unary).cols(), self.classes),
            });
        }
        let attrs = s.constant(eb.unique_attr.clone());
        let wu = self.filter.forward(s, attrs)?;
        let w = s.gather_rows(wu, &eb.attr_index)?;
        let mut q = s.softmax(unary);
        let mut out = vec![q];
        for _ in 0..self.iterations {
            let qj = s.gather_rows(q, &eb.src)?;
            let msg = s.edge_matvec(w, qj, self.classes, self.classes)?;
            let qhat = s.segment_reduce(msg, &eb.dst, eb.n, Reduce::Sum)?;
            let logits = s.sub(unary, qhat)?;
            q = s.softmax(logits);
            out.push(q);
        }
        Ok(out)
    }

    pub fn infer<T: Scalar>(&self, s: &mut Session<T>, eb: &EdgeBatch<T>, unary: Var) -> Result<Var> {
        Ok(*self.infer_all(s, eb, unary)?.last().expect("nonempty"))
    }
}
