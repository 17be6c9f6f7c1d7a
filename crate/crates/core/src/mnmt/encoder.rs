//! Bidirectional GRU source encoder.

use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::{param_block, DiffGraph, Matrix, NodeId, Vector};

use super::cells::{glorot_matrix, gru_step, GruCell};
use super::ModelDims;

param_block! {
    /// Source embedding table plus forward and backward GRU cells.
    pub struct EncoderParams, nodes EncoderNodes {
        pub emb: Matrix,
        pub fwd: GruCell,
        pub bwd: GruCell,
    }
}

impl EncoderParams {
    pub fn init(dims: &ModelDims, rng: &mut impl Rng) -> Self {
        EncoderParams {
            emb: glorot_matrix(dims.src_vocab, dims.emb, rng),
            fwd: GruCell::init(dims.emb, dims.enc_hidden, rng),
            bwd: GruCell::init(dims.emb, dims.enc_hidden, rng),
        }
    }

    pub fn shaped(dims: &ModelDims) -> Self {
        EncoderParams {
            emb: Matrix::zeros(dims.src_vocab, dims.emb),
            fwd: GruCell::shaped(dims.emb, dims.enc_hidden),
            bwd: GruCell::shaped(dims.emb, dims.enc_hidden),
        }
    }
}

/// Graph handles produced by [`encode_bigru`]: one state per source token
/// (forward and backward halves concatenated) plus their mean.
pub struct EncoderOutput {
    pub states: Vec<NodeId>,
    pub mean_state: NodeId,
}

/// Runs the bidirectional encoder over a source sentence.
///
/// Both directions start from a zero state and read the same embedded
/// tokens, so an optional dropout mask per position applies to both at once.
pub fn encode_bigru(
    g: &mut DiffGraph,
    enc: &EncoderNodes,
    source: &[usize],
    dropout: Option<&[Vector]>,
) -> Result<EncoderOutput> {
    if source.is_empty() {
        return Err(Error::Argument("cannot encode an empty sentence".into()));
    }
    if let Some(masks) = dropout {
        if masks.len() != source.len() {
            return Err(Error::dim("encode_bigru", source.len(), masks.len()));
        }
    }
    let hidden = g.value_mat(enc.fwd.u_update)?.rows();

    let mut embedded = Vec::with_capacity(source.len());
    for (i, &tok) in source.iter().enumerate() {
        let mut e = g.embed_row(enc.emb, tok)?;
        if let Some(masks) = dropout {
            let m = g.constant(masks[i].clone());
            e = g.hadamard(e, m)?;
        }
        embedded.push(e);
    }

    let mut fwd = Vec::with_capacity(source.len());
    let mut h = g.constant(Vector::zeros(hidden));
    for &e in &embedded {
        h = gru_step(g, &enc.fwd, e, h)?;
        fwd.push(h);
    }

    let mut bwd = Vec::with_capacity(source.len());
    let mut h = g.constant(Vector::zeros(hidden));
    for &e in embedded.iter().rev() {
        h = gru_step(g, &enc.bwd, e, h)?;
        bwd.push(h);
    }
    bwd.reverse();

    let mut states = Vec::with_capacity(source.len());
    for i in 0..source.len() {
        states.push(g.concat(&[fwd[i], bwd[i]])?);
    }
    let mean_state = g.mean(&states)?;
    Ok(EncoderOutput { states, mean_state })
}
