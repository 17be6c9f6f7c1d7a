//! Recurrent and attention building blocks shared by every translation model.

use rand::Rng;

use crate::error::Result;
use crate::numerics::{param_block, DiffGraph, Matrix, NodeId, Vector};

/// Uniform init over ±sqrt(6 / (rows + cols)).
pub(crate) fn glorot_matrix(rows: usize, cols: usize, rng: &mut impl Rng) -> Matrix {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    let mut m = Matrix::zeros(rows, cols);
    for v in m.as_mut_slice() {
        *v = rng.random_range(-limit..limit);
    }
    m
}

/// Vector analogue of [`glorot_matrix`], treated as a dim-by-1 map.
pub(crate) fn glorot_vector(dim: usize, rng: &mut impl Rng) -> Vector {
    let limit = (6.0 / (dim + 1) as f64).sqrt();
    Vector::new((0..dim).map(|_| rng.random_range(-limit..limit)).collect())
}

param_block! {
    /// Gated recurrent unit without bias terms:
    ///
    /// ```text
    /// z  = sigmoid(W_z x + U_z h)
    /// r  = sigmoid(W_r x + U_r h)
    /// h~ = tanh(W x + U (r . h))
    /// h' = (1 - z) . h~ + z . h
    /// ```
    pub struct GruCell, nodes GruCellNodes {
        pub w_update: Matrix,
        pub u_update: Matrix,
        pub w_reset: Matrix,
        pub u_reset: Matrix,
        pub w_cand: Matrix,
        pub u_cand: Matrix,
    }
}

impl GruCell {
    pub fn init(x_dim: usize, h_dim: usize, rng: &mut impl Rng) -> Self {
        GruCell {
            w_update: glorot_matrix(h_dim, x_dim, rng),
            u_update: glorot_matrix(h_dim, h_dim, rng),
            w_reset: glorot_matrix(h_dim, x_dim, rng),
            u_reset: glorot_matrix(h_dim, h_dim, rng),
            w_cand: glorot_matrix(h_dim, x_dim, rng),
            u_cand: glorot_matrix(h_dim, h_dim, rng),
        }
    }

    pub fn shaped(x_dim: usize, h_dim: usize) -> Self {
        GruCell {
            w_update: Matrix::zeros(h_dim, x_dim),
            u_update: Matrix::zeros(h_dim, h_dim),
            w_reset: Matrix::zeros(h_dim, x_dim),
            u_reset: Matrix::zeros(h_dim, h_dim),
            w_cand: Matrix::zeros(h_dim, x_dim),
            u_cand: Matrix::zeros(h_dim, h_dim),
        }
    }
}

/// One GRU transition from hidden state `h` under input `x`.
///
/// The update gate mixes the literal form `(1 - z) . h~ + z . h`, so a
/// saturated gate hands back the previous state bit for bit.
pub fn gru_step(g: &mut DiffGraph, cell: &GruCellNodes, x: NodeId, h: NodeId) -> Result<NodeId> {
    let zu = g.matvec(cell.w_update, x)?;
    let zh = g.matvec(cell.u_update, h)?;
    let zs = g.add(zu, zh)?;
    let z = g.sigmoid(zs)?;

    let ru = g.matvec(cell.w_reset, x)?;
    let rh = g.matvec(cell.u_reset, h)?;
    let rs = g.add(ru, rh)?;
    let r = g.sigmoid(rs)?;

    let gated = g.hadamard(r, h)?;
    let cu = g.matvec(cell.w_cand, x)?;
    let ch = g.matvec(cell.u_cand, gated)?;
    let cs = g.add(cu, ch)?;
    let cand = g.tanh(cs)?;

    let neg_z = g.scale(z, -1.0)?;
    let keep = g.add_const(neg_z, 1.0)?;
    let new_part = g.hadamard(keep, cand)?;
    let old_part = g.hadamard(z, h)?;
    g.add(new_part, old_part)
}

param_block! {
    /// Additive attention scorer: `score_i = v . tanh(W_q q + W_k k_i)`.
    pub struct AdditiveAttention, nodes AdditiveAttentionNodes {
        pub w_query: Matrix,
        pub w_key: Matrix,
        pub v_score: Vector,
    }
}

impl AdditiveAttention {
    pub fn init(q_dim: usize, k_dim: usize, attn_dim: usize, rng: &mut impl Rng) -> Self {
        AdditiveAttention {
            w_query: glorot_matrix(attn_dim, q_dim, rng),
            w_key: glorot_matrix(attn_dim, k_dim, rng),
            v_score: glorot_vector(attn_dim, rng),
        }
    }

    pub fn shaped(q_dim: usize, k_dim: usize, attn_dim: usize) -> Self {
        AdditiveAttention {
            w_query: Matrix::zeros(attn_dim, q_dim),
            w_key: Matrix::zeros(attn_dim, k_dim),
            v_score: Vector::zeros(attn_dim),
        }
    }
}

/// Key projections `W_k k_i`, computed once per sentence and reused by
/// every decode step that attends over the same keys.
pub struct AttentionKeys {
    pub projected: Vec<NodeId>,
}

pub fn project_keys(
    g: &mut DiffGraph,
    attn: &AdditiveAttentionNodes,
    keys: &[NodeId],
) -> Result<AttentionKeys> {
    let mut projected = Vec::with_capacity(keys.len());
    for &k in keys {
        projected.push(g.matvec(attn.w_key, k)?);
    }
    Ok(AttentionKeys { projected })
}

/// Softmax-normalized additive attention over `values`.
///
/// Returns `(weights, context)`; the weights always sum to one because they
/// come straight out of a softmax.
pub fn attend(
    g: &mut DiffGraph,
    attn: &AdditiveAttentionNodes,
    query: NodeId,
    values: &[NodeId],
    keys: &AttentionKeys,
) -> Result<(NodeId, NodeId)> {
    let q = g.matvec(attn.w_query, query)?;
    let mut scores = Vec::with_capacity(keys.projected.len());
    for &kp in &keys.projected {
        let s = g.add(q, kp)?;
        let t = g.tanh(s)?;
        scores.push(g.dot(attn.v_score, t)?);
    }
    let stacked = g.stack(&scores)?;
    let weights = g.softmax(stacked)?;
    let context = g.weighted_sum(weights, values)?;
    Ok((weights, context))
}

/// [`attend`] with the key projections computed on the spot.
pub fn attend_text(
    g: &mut DiffGraph,
    attn: &AdditiveAttentionNodes,
    query: NodeId,
    states: &[NodeId],
) -> Result<(NodeId, NodeId)> {
    let keys = project_keys(g, attn, states)?;
    attend(g, attn, query, states, &keys)
}
