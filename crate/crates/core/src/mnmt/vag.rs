//! Visual attention grounding: a visually weighted sentence representation
//! seeds the decoder, and paired sentence/image projections share an
//! embedding space under a bidirectional max-margin loss.

use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::{param_block, DiffGraph, Matrix, NodeId, Vector};

use super::bahdanau::BahdanauDecoderParams;
use super::cells::glorot_matrix;
use super::encoder::{EncoderOutput, EncoderParams};
use super::losses::graph_cosine;
use super::ModelDims;

param_block! {
    /// Encoder, grounding scorer, decoder, and the two shared-space
    /// projections. The grounding matrix over images and the shared-space
    /// image projection are distinct parameters.
    pub struct VagParams, nodes VagNodes {
        pub encoder: EncoderParams,
        pub ground_vis: Matrix,
        pub ground_txt: Matrix,
        pub init_state: Matrix,
        pub decoder: BahdanauDecoderParams,
        pub txt_proj: Matrix,
        pub txt_bias: Vector,
        pub vis_proj: Matrix,
        pub vis_bias: Vector,
    }
}

impl VagParams {
    pub fn init(dims: &ModelDims, rng: &mut impl Rng) -> Self {
        let shared = dims.shared_dim;
        VagParams {
            encoder: EncoderParams::init(dims, rng),
            ground_vis: glorot_matrix(shared, dims.global_dim, rng),
            ground_txt: glorot_matrix(shared, dims.enc_out(), rng),
            init_state: glorot_matrix(dims.dec_hidden(), dims.enc_out(), rng),
            decoder: BahdanauDecoderParams::init(dims, rng),
            txt_proj: glorot_matrix(shared, dims.enc_out(), rng),
            txt_bias: Vector::zeros(shared),
            vis_proj: glorot_matrix(shared, dims.global_dim, rng),
            vis_bias: Vector::zeros(shared),
        }
    }

    pub fn shaped(dims: &ModelDims) -> Self {
        let shared = dims.shared_dim;
        VagParams {
            encoder: EncoderParams::shaped(dims),
            ground_vis: Matrix::zeros(shared, dims.global_dim),
            ground_txt: Matrix::zeros(shared, dims.enc_out()),
            init_state: Matrix::zeros(dims.dec_hidden(), dims.enc_out()),
            decoder: BahdanauDecoderParams::shaped(dims),
            txt_proj: Matrix::zeros(shared, dims.enc_out()),
            txt_bias: Vector::zeros(shared),
            vis_proj: Matrix::zeros(shared, dims.global_dim),
            vis_bias: Vector::zeros(shared),
        }
    }
}

/// Visually weighted sentence representation.
///
/// Each source state is scored by `tanh(W_v v) . tanh(W_h h_i)`, the scores
/// are softmax-normalized, and the representation is the weighted sum of
/// the states. Returns `(weights, representation)`.
pub fn vag_sentence_representation(
    g: &mut DiffGraph,
    ground_vis: NodeId,
    ground_txt: NodeId,
    enc: &EncoderOutput,
    visual: NodeId,
) -> Result<(NodeId, NodeId)> {
    let qv = g.matvec(ground_vis, visual)?;
    let qv = g.tanh(qv)?;
    let mut scores = Vec::with_capacity(enc.states.len());
    for &h in &enc.states {
        let k = g.matvec(ground_txt, h)?;
        let k = g.tanh(k)?;
        scores.push(g.dot(qv, k)?);
    }
    let stacked = g.stack(&scores)?;
    let weights = g.softmax(stacked)?;
    let rep = g.weighted_sum(weights, &enc.states)?;
    Ok((weights, rep))
}

/// Decoder start state `tanh(W (rho t + (1 - rho) mean))`.
pub fn vag_decoder_init(
    g: &mut DiffGraph,
    init_state: NodeId,
    rep: NodeId,
    enc: &EncoderOutput,
    rho: f64,
) -> Result<NodeId> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::Argument(format!("rho must lie in [0, 1], got {rho}")));
    }
    let a = g.scale(rep, rho)?;
    let b = g.scale(enc.mean_state, 1.0 - rho)?;
    let mix = g.add(a, b)?;
    let m = g.matvec(init_state, mix)?;
    g.tanh(m)
}

/// Bidirectional pairwise ranking loss over a batch of sentence
/// representations and their paired image vectors.
///
/// Images and sentences are first mapped into the shared space with
/// `tanh(W x + b)`. For every pair `p` the paired similarity must beat
/// every mismatched similarity by the margin, anchored both at the image
/// and at the sentence:
///
/// ```text
/// sum_p sum_{k != p} max(0, m - d(v_p, t_p) + d(v_p, t_k))
/// + sum_k sum_{p != k} max(0, m - d(t_k, v_k) + d(t_k, v_p))
/// ```
///
/// A batch of one has no mismatched pairs; the loss is zero and a warning
/// is logged.
pub fn vag_pair_margin_loss(
    g: &mut DiffGraph,
    vag: &VagNodes,
    reps: &[NodeId],
    visuals: &[NodeId],
    margin: f64,
) -> Result<NodeId> {
    if !margin.is_finite() || margin < 0.0 {
        return Err(Error::Argument(format!(
            "margin must be finite and non-negative, got {margin}"
        )));
    }
    if reps.len() != visuals.len() {
        return Err(Error::dim("vag_pair_margin_loss", reps.len(), visuals.len()));
    }
    if reps.is_empty() {
        return Err(Error::Argument("pair margin loss needs a batch".into()));
    }
    if reps.len() == 1 {
        log::warn!("pair margin loss over a batch of one is identically zero");
        return Ok(g.constant(Vector::new(vec![0.0])));
    }

    let n = reps.len();
    let mut t_emb = Vec::with_capacity(n);
    for &t in reps {
        let p = g.matvec(vag.txt_proj, t)?;
        let p = g.add(p, vag.txt_bias)?;
        t_emb.push(g.tanh(p)?);
    }
    let mut v_emb = Vec::with_capacity(n);
    for &v in visuals {
        let p = g.matvec(vag.vis_proj, v)?;
        let p = g.add(p, vag.vis_bias)?;
        v_emb.push(g.tanh(p)?);
    }

    // d[p][k] = cos(v_emb[p], t_emb[k]); cosine is symmetric so both
    // anchoring directions read the same matrix.
    let mut d = vec![Vec::with_capacity(n); n];
    for p in 0..n {
        for k in 0..n {
            let c = graph_cosine(g, v_emb[p], t_emb[k])?;
            d[p].push(c);
        }
    }

    let mut terms = Vec::with_capacity(2 * n * (n - 1));
    for p in 0..n {
        for k in 0..n {
            if k == p {
                continue;
            }
            let diff = g.sub(d[p][k], d[p][p])?;
            let shifted = g.add_const(diff, margin)?;
            terms.push(g.relu(shifted)?);
        }
    }
    for k in 0..n {
        for p in 0..n {
            if p == k {
                continue;
            }
            let diff = g.sub(d[p][k], d[k][k])?;
            let shifted = g.add_const(diff, margin)?;
            terms.push(g.relu(shifted)?);
        }
    }
    g.sum(&terms)
}
