//! Attention decoder with a learned readout, used by the text-only model,
//! the latent-space multitask model, and the visually grounded model.

use rand::Rng;

use crate::error::Result;
use crate::numerics::{param_block, DiffGraph, Matrix, NodeId, Vector};

use super::cells::{attend, glorot_matrix, gru_step, AdditiveAttention, AttentionKeys, GruCell};
use super::encoder::{EncoderOutput, EncoderParams};
use super::ModelDims;

param_block! {
    /// Decoder embedding, recurrence, attention scorer, and the output
    /// stack. The readout sums per-term projections of state, previous
    /// embedding, and context in embedding size, then maps to the
    /// vocabulary:
    ///
    /// ```text
    /// p = softmax(L_o tanh(P_s s_j + P_e e(y_prev) + P_c c_j))
    /// ```
    pub struct BahdanauDecoderParams, nodes BahdanauDecoderNodes {
        pub emb: Matrix,
        pub gru: GruCell,
        pub attn: AdditiveAttention,
        pub out_state: Matrix,
        pub out_emb: Matrix,
        pub out_ctx: Matrix,
        pub out_vocab: Matrix,
    }
}

impl BahdanauDecoderParams {
    pub fn init(dims: &ModelDims, rng: &mut impl Rng) -> Self {
        let h = dims.dec_hidden();
        let ctx = dims.enc_out();
        BahdanauDecoderParams {
            emb: glorot_matrix(dims.tgt_vocab, dims.emb, rng),
            gru: GruCell::init(dims.emb, h, rng),
            attn: AdditiveAttention::init(h, ctx, dims.attn_dim(), rng),
            out_state: glorot_matrix(dims.emb, h, rng),
            out_emb: glorot_matrix(dims.emb, dims.emb, rng),
            out_ctx: glorot_matrix(dims.emb, ctx, rng),
            out_vocab: glorot_matrix(dims.tgt_vocab, dims.emb, rng),
        }
    }

    pub fn shaped(dims: &ModelDims) -> Self {
        let h = dims.dec_hidden();
        let ctx = dims.enc_out();
        BahdanauDecoderParams {
            emb: Matrix::zeros(dims.tgt_vocab, dims.emb),
            gru: GruCell::shaped(dims.emb, h),
            attn: AdditiveAttention::shaped(h, ctx, dims.attn_dim()),
            out_state: Matrix::zeros(dims.emb, h),
            out_emb: Matrix::zeros(dims.emb, dims.emb),
            out_ctx: Matrix::zeros(dims.emb, ctx),
            out_vocab: Matrix::zeros(dims.tgt_vocab, dims.emb),
        }
    }
}

param_block! {
    /// Everything the text-only translation model owns. The multitask
    /// model extends this block, so its fields must stay a prefix.
    pub struct TextBackbone, nodes TextBackboneNodes {
        pub encoder: EncoderParams,
        pub init_state: Matrix,
        pub decoder: BahdanauDecoderParams,
    }
}

impl TextBackbone {
    pub fn init(dims: &ModelDims, rng: &mut impl Rng) -> Self {
        TextBackbone {
            encoder: EncoderParams::init(dims, rng),
            init_state: glorot_matrix(dims.dec_hidden(), dims.enc_out(), rng),
            decoder: BahdanauDecoderParams::init(dims, rng),
        }
    }

    pub fn shaped(dims: &ModelDims) -> Self {
        TextBackbone {
            encoder: EncoderParams::shaped(dims),
            init_state: Matrix::zeros(dims.dec_hidden(), dims.enc_out()),
            decoder: BahdanauDecoderParams::shaped(dims),
        }
    }
}

/// Decoder position: the running hidden state and the previously produced
/// (or teacher-forced) token.
pub struct DecodeState {
    pub hidden: NodeId,
    pub prev_token: usize,
}

/// What one decode step yields: a distribution over the target vocabulary,
/// the next hidden state, and the text attention weights.
pub struct StepOutput {
    pub dist: NodeId,
    pub hidden: NodeId,
    pub attention: NodeId,
}

/// Initial decoder state `tanh(W mean(h))`.
pub fn init_decoder_state(
    g: &mut DiffGraph,
    init_state: NodeId,
    enc: &EncoderOutput,
) -> Result<NodeId> {
    let m = g.matvec(init_state, enc.mean_state)?;
    g.tanh(m)
}

/// One decode step: GRU proposal, attention over the encoder states, then
/// the projected readout. `out_dropout` masks the pre-output activation.
pub fn bahdanau_decoder_step(
    g: &mut DiffGraph,
    dec: &BahdanauDecoderNodes,
    state: &DecodeState,
    enc: &EncoderOutput,
    keys: &AttentionKeys,
    out_dropout: Option<&Vector>,
) -> Result<StepOutput> {
    let e = g.embed_row(dec.emb, state.prev_token)?;
    let s = gru_step(g, &dec.gru, e, state.hidden)?;
    let (attention, c) = attend(g, &dec.attn, s, &enc.states, keys)?;

    let ps = g.matvec(dec.out_state, s)?;
    let pe = g.matvec(dec.out_emb, e)?;
    let pc = g.matvec(dec.out_ctx, c)?;
    let sum = g.add(ps, pe)?;
    let sum = g.add(sum, pc)?;
    let mut pre = g.tanh(sum)?;
    if let Some(mask) = out_dropout {
        let m = g.constant(mask.clone());
        pre = g.hadamard(pre, m)?;
    }
    let logits = g.matvec(dec.out_vocab, pre)?;
    let dist = g.softmax(logits)?;
    Ok(StepOutput {
        dist,
        hidden: s,
        attention,
    })
}
