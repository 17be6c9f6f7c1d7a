//! Decoder with separate attention over source states and image locations.
//!
//! Each step proposes a state with a GRU, attends over text and (gated)
//! spatial image features, fuses all three through its own update and reset
//! gates, and reads the output distribution from a tanh of four projections
//! onto the vocabulary. The tanh means logits live in (-1, 1); that is the
//! published form of this output layer, kept as is.

use rand::Rng;

use crate::error::Result;
use crate::numerics::{param_block, DiffGraph, Matrix, NodeId, Vector};

use super::cells::{
    attend, glorot_matrix, glorot_vector, gru_step, AdditiveAttention, AdditiveAttentionNodes,
    AttentionKeys, GruCell,
};
use super::encoder::{EncoderOutput, EncoderParams};
use super::bahdanau::{DecodeState, StepOutput};
use super::ModelDims;

param_block! {
    /// All weights of the doubly-attentive model.
    pub struct DoublyAttentiveParams, nodes DoublyAttentiveNodes {
        pub encoder: EncoderParams,
        pub init_state: Matrix,
        pub emb_dec: Matrix,
        pub gru: GruCell,
        pub attn_text: AdditiveAttention,
        pub attn_vis: AdditiveAttention,
        pub gate_w: Vector,
        pub gate_b: Vector,
        pub comb_gate_txt: Matrix,
        pub comb_gate_vis: Matrix,
        pub comb_gate_state: Matrix,
        pub comb_reset_txt: Matrix,
        pub comb_reset_vis: Matrix,
        pub comb_reset_state: Matrix,
        pub cand_txt: Matrix,
        pub cand_vis: Matrix,
        pub cand_state: Matrix,
        pub out_state: Matrix,
        pub out_emb: Matrix,
        pub out_txt: Matrix,
        pub out_vis: Matrix,
    }
}

impl DoublyAttentiveParams {
    pub fn init(dims: &ModelDims, rng: &mut impl Rng) -> Self {
        let h = dims.dec_hidden();
        let ctx = dims.enc_out();
        let vis = dims.spatial_dim;
        DoublyAttentiveParams {
            encoder: EncoderParams::init(dims, rng),
            init_state: glorot_matrix(h, ctx, rng),
            emb_dec: glorot_matrix(dims.tgt_vocab, dims.emb, rng),
            gru: GruCell::init(dims.emb, h, rng),
            attn_text: AdditiveAttention::init(h, ctx, dims.attn_dim(), rng),
            attn_vis: AdditiveAttention::init(h, vis, dims.attn_dim(), rng),
            gate_w: glorot_vector(h, rng),
            gate_b: Vector::zeros(1),
            comb_gate_txt: glorot_matrix(h, ctx, rng),
            comb_gate_vis: glorot_matrix(h, vis, rng),
            comb_gate_state: glorot_matrix(h, h, rng),
            comb_reset_txt: glorot_matrix(h, ctx, rng),
            comb_reset_vis: glorot_matrix(h, vis, rng),
            comb_reset_state: glorot_matrix(h, h, rng),
            cand_txt: glorot_matrix(h, ctx, rng),
            cand_vis: glorot_matrix(h, vis, rng),
            cand_state: glorot_matrix(h, h, rng),
            out_state: glorot_matrix(dims.tgt_vocab, h, rng),
            out_emb: glorot_matrix(dims.tgt_vocab, dims.emb, rng),
            out_txt: glorot_matrix(dims.tgt_vocab, ctx, rng),
            out_vis: glorot_matrix(dims.tgt_vocab, vis, rng),
        }
    }

    pub fn shaped(dims: &ModelDims) -> Self {
        let h = dims.dec_hidden();
        let ctx = dims.enc_out();
        let vis = dims.spatial_dim;
        DoublyAttentiveParams {
            encoder: EncoderParams::shaped(dims),
            init_state: Matrix::zeros(h, ctx),
            emb_dec: Matrix::zeros(dims.tgt_vocab, dims.emb),
            gru: GruCell::shaped(dims.emb, h),
            attn_text: AdditiveAttention::shaped(h, ctx, dims.attn_dim()),
            attn_vis: AdditiveAttention::shaped(h, vis, dims.attn_dim()),
            gate_w: Vector::zeros(h),
            gate_b: Vector::zeros(1),
            comb_gate_txt: Matrix::zeros(h, ctx),
            comb_gate_vis: Matrix::zeros(h, vis),
            comb_gate_state: Matrix::zeros(h, h),
            comb_reset_txt: Matrix::zeros(h, ctx),
            comb_reset_vis: Matrix::zeros(h, vis),
            comb_reset_state: Matrix::zeros(h, h),
            cand_txt: Matrix::zeros(h, ctx),
            cand_vis: Matrix::zeros(h, vis),
            cand_state: Matrix::zeros(h, h),
            out_state: Matrix::zeros(dims.tgt_vocab, h),
            out_emb: Matrix::zeros(dims.tgt_vocab, dims.emb),
            out_txt: Matrix::zeros(dims.tgt_vocab, ctx),
            out_vis: Matrix::zeros(dims.tgt_vocab, vis),
        }
    }
}

/// Gated visual attention output.
pub struct VisualContext {
    pub weights: NodeId,
    pub gate: NodeId,
    pub context: NodeId,
}

/// Attention over image locations, scaled by the gate
/// `beta = sigmoid(w . s_prev + b)` computed from the previous decoder
/// state, not the current proposal.
pub fn attend_visual_gated(
    g: &mut DiffGraph,
    attn: &AdditiveAttentionNodes,
    gate_w: NodeId,
    gate_b: NodeId,
    prev_state: NodeId,
    query: NodeId,
    locations: &[NodeId],
    keys: &AttentionKeys,
) -> Result<VisualContext> {
    let (weights, raw) = attend(g, attn, query, locations, keys)?;
    let gw = g.dot(gate_w, prev_state)?;
    let pre = g.add(gw, gate_b)?;
    let gate = g.sigmoid(pre)?;
    let context = g.mul_scalar(gate, raw)?;
    Ok(VisualContext {
        weights,
        gate,
        context,
    })
}

/// One doubly-attentive decode step.
///
/// The fusion gates read the GRU proposal itself; the update gate keeps the
/// literal `(1 - z)` form so a saturated gate returns the proposal exactly.
pub fn da_decoder_step(
    g: &mut DiffGraph,
    da: &DoublyAttentiveNodes,
    state: &DecodeState,
    enc: &EncoderOutput,
    text_keys: &AttentionKeys,
    locations: &[NodeId],
    vis_keys: &AttentionKeys,
    out_dropout: Option<&Vector>,
) -> Result<StepOutput> {
    let e = g.embed_row(da.emb_dec, state.prev_token)?;
    let proposal = gru_step(g, &da.gru, e, state.hidden)?;

    let (attention, c_txt) = attend(g, &da.attn_text, proposal, &enc.states, text_keys)?;
    let vis = attend_visual_gated(
        g,
        &da.attn_vis,
        da.gate_w,
        da.gate_b,
        state.hidden,
        proposal,
        locations,
        vis_keys,
    )?;

    let fuse = |g: &mut DiffGraph, wt: NodeId, wv: NodeId, ws: NodeId| -> Result<NodeId> {
        let t = g.matvec(wt, c_txt)?;
        let v = g.matvec(wv, vis.context)?;
        let s = g.matvec(ws, proposal)?;
        let tv = g.add(t, v)?;
        g.add(tv, s)
    };
    let zs = fuse(g, da.comb_gate_txt, da.comb_gate_vis, da.comb_gate_state)?;
    let z = g.sigmoid(zs)?;
    let rs = fuse(g, da.comb_reset_txt, da.comb_reset_vis, da.comb_reset_state)?;
    let r = g.sigmoid(rs)?;

    let ct = g.matvec(da.cand_txt, c_txt)?;
    let cv = g.matvec(da.cand_vis, vis.context)?;
    let us = g.matvec(da.cand_state, proposal)?;
    let rus = g.hadamard(r, us)?;
    let csum = g.add(ct, cv)?;
    let csum = g.add(csum, rus)?;
    let cand = g.tanh(csum)?;

    let neg_z = g.scale(z, -1.0)?;
    let keep = g.add_const(neg_z, 1.0)?;
    let new_part = g.hadamard(keep, cand)?;
    let old_part = g.hadamard(z, proposal)?;
    let hidden = g.add(new_part, old_part)?;

    let os = g.matvec(da.out_state, hidden)?;
    let oe = g.matvec(da.out_emb, e)?;
    let ot = g.matvec(da.out_txt, c_txt)?;
    let ov = g.matvec(da.out_vis, vis.context)?;
    let sum = g.add(os, oe)?;
    let sum = g.add(sum, ot)?;
    let sum = g.add(sum, ov)?;
    let mut logits = g.tanh(sum)?;
    if let Some(mask) = out_dropout {
        let m = g.constant(mask.clone());
        logits = g.hadamard(logits, m)?;
    }
    let dist = g.softmax(logits)?;
    Ok(StepOutput {
        dist,
        hidden,
        attention,
    })
}
