use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diffcore::{ParamStore, Reduce, Session, TensorError, Var};
use crate::scalar::Scalar;

use super::mlp::{Mlp, MlpConfig};

type Result<T> = std::result::Result<T, TensorError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolMode {
    Avg,
    Max,
    Gated,
}

/// `Σ_i σ(gate(H_i)) ⊙ value(H_i)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GatedPool {
    pub gate: Mlp,
    pub value: Mlp,
}

impl GatedPool {
    /// Single linear gate and value maps `din → dout`.
    pub fn new<T: Scalar, R: Rng>(store: &mut ParamStore<T>, rng: &mut R, name: &str, din: usize, dout: usize) -> Self {
        let cfg = MlpConfig::new(vec![din, dout]);
        GatedPool {
            gate: Mlp::new(store, rng, &format!("{name}.gate"), &cfg),
            value: Mlp::new(store, rng, &format!("{name}.value"), &cfg),
        }
    }
}

/// Pools node rows of `h` into one row per graph; `graph_of[i]` is the graph
/// of node `i` and every graph in `0..n_graphs` must own at least one node.
pub fn global_pool<T: Scalar>(
    s: &mut Session<T>,
    h: Var,
    graph_of: &[usize],
    n_graphs: usize,
    mode: PoolMode,
    gated: Option<&GatedPool>,
) -> Result<Var> {
    let mut count = vec![0usize; n_graphs];
    for &g in graph_of {
        if g >= n_graphs {
            return Err(TensorError::Index { op: "global_pool", index: g, bound: n_graphs });
        }
        count[g] += 1;
    }
    if let Some(g) = count.iter().position(|&c| c == 0) {
        return Err(TensorError::Domain { op: "global_pool", detail: format!("graph {g} has no nodes") });
    }
    match mode {
        PoolMode::Avg => s.segment_reduce(h, graph_of, n_graphs, Reduce::Mean),
        PoolMode::Max => s.segment_reduce(h, graph_of, n_graphs, Reduce::Max),
        PoolMode::Gated => {
            let gp = gated.ok_or_else(|| TensorError::Domain {
                op: "global_pool",
                detail: "gated pooling needs gate and value networks".into(),
            })?;
            let g = gp.gate.forward(s, h)?;
            let g = s.sigmoid(g);
            let v = gp.value.forward(s, h)?;
            let x = s.mul(g, v)?;
            s.segment_reduce(x, graph_of, n_graphs, Reduce::Sum)
        }
    }
}
