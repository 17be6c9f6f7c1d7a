//! Sequence and multitask losses plus the per-model batch loss builders.

use crate::embedding::{BOS_ID, EOS_ID, PAD_ID};
use crate::error::{Error, Result};
use crate::numerics::{DiffGraph, Matrix, NodeId, Vector};

use super::bahdanau::{
    bahdanau_decoder_step, init_decoder_state, BahdanauDecoderNodes, DecodeState,
    TextBackboneNodes,
};
use super::cells::project_keys;
use super::doubly::{da_decoder_step, DoublyAttentiveNodes};
use super::encoder::{encode_bigru, EncoderOutput};
use super::imagination::{imagination_latent, imagination_margin_loss, ImaginationNodes};
use super::vag::{
    vag_decoder_init, vag_pair_margin_loss, vag_sentence_representation, VagNodes,
};
use super::Hyper;

/// Probabilities below this floor are clamped inside the log, and each
/// clamp is counted on the graph.
pub const NLL_PROB_FLOOR: f64 = 1e-30;

/// In-graph cosine similarity between two vectors of equal dimension.
/// Zero-norm inputs surface as numerical errors.
pub fn graph_cosine(g: &mut DiffGraph, a: NodeId, b: NodeId) -> Result<NodeId> {
    let dot = g.dot(a, b)?;
    let aa = g.dot(a, a)?;
    let bb = g.dot(b, b)?;
    let na = g.sqrt(aa)?;
    let nb = g.sqrt(bb)?;
    let denom = g.hadamard(na, nb)?;
    let inv = g.recip(denom)?;
    g.hadamard(dot, inv)
}

/// Negative log likelihood of the reference tokens under one distribution
/// per position. Padding positions are skipped entirely.
pub fn sequence_nll(g: &mut DiffGraph, dists: &[NodeId], reference: &[usize]) -> Result<NodeId> {
    if dists.len() != reference.len() {
        return Err(Error::dim("sequence_nll", dists.len(), reference.len()));
    }
    if dists.is_empty() {
        return Err(Error::Argument(
            "sequence_nll needs at least one position".into(),
        ));
    }
    let mut terms = Vec::with_capacity(reference.len());
    for (&d, &tok) in dists.iter().zip(reference) {
        if tok == PAD_ID {
            continue;
        }
        let p = g.pick(d, tok)?;
        terms.push(g.ln_clamped(p, NLL_PROB_FLOOR)?);
    }
    if terms.is_empty() {
        return Ok(g.constant(Vector::new(vec![0.0])));
    }
    let total = g.sum(&terms)?;
    g.scale(total, -1.0)
}

/// Linear interpolation `lambda * task + (1 - lambda) * latent`.
pub fn multitask_loss(
    g: &mut DiffGraph,
    task: NodeId,
    latent: NodeId,
    lambda: f64,
) -> Result<NodeId> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::Argument(format!(
            "lambda must lie in [0, 1], got {lambda}"
        )));
    }
    let a = g.scale(task, lambda)?;
    let b = g.scale(latent, 1.0 - lambda)?;
    g.add(a, b)
}

/// One training row: token ids plus whatever features the model wants.
/// Target ids carry no sentence markers; the loss builders frame them.
#[derive(Debug, Clone)]
pub struct TrainExample {
    pub source: Vec<usize>,
    pub target: Vec<usize>,
    pub global: Option<Vector>,
    pub spatial: Option<Matrix>,
}

/// Dropout masks for one sentence: one per source position and one per
/// decode step (target length plus the closing marker).
#[derive(Debug, Clone)]
pub struct SentenceDropout {
    pub source: Vec<Vector>,
    pub output: Vec<Vector>,
}

/// Loss node handles for one batch. `total` is the training objective;
/// `task` is the translation part; `latent` is present for multitask models.
pub struct LossNodes {
    pub total: NodeId,
    pub task: NodeId,
    pub latent: Option<NodeId>,
}

fn check_dropout(ex: &TrainExample, dropout: Option<&SentenceDropout>) -> Result<()> {
    if let Some(d) = dropout {
        if d.source.len() != ex.source.len() {
            return Err(Error::dim("dropout source masks", ex.source.len(), d.source.len()));
        }
        if d.output.len() != ex.target.len() + 1 {
            return Err(Error::dim(
                "dropout output masks",
                ex.target.len() + 1,
                d.output.len(),
            ));
        }
    }
    Ok(())
}

/// Teacher-forced decode of one sentence, returning its NLL node.
fn decode_teacher_forced(
    g: &mut DiffGraph,
    dec: &BahdanauDecoderNodes,
    enc: &EncoderOutput,
    start: NodeId,
    target: &[usize],
    out_masks: Option<&[Vector]>,
) -> Result<NodeId> {
    let keys = project_keys(g, &dec.attn, &enc.states)?;
    let mut seq = Vec::with_capacity(target.len() + 2);
    seq.push(BOS_ID);
    seq.extend_from_slice(target);
    seq.push(EOS_ID);

    let mut hidden = start;
    let mut dists = Vec::with_capacity(seq.len() - 1);
    for j in 1..seq.len() {
        let state = DecodeState {
            hidden,
            prev_token: seq[j - 1],
        };
        let mask = out_masks.map(|m| &m[j - 1]);
        let out = bahdanau_decoder_step(g, dec, &state, enc, &keys, mask)?;
        dists.push(out.dist);
        hidden = out.hidden;
    }
    sequence_nll(g, &dists, &seq[1..])
}

/// Sum of sentence NLLs for the text-only model.
pub fn nmt_batch_loss(
    g: &mut DiffGraph,
    nodes: &TextBackboneNodes,
    batch: &[TrainExample],
    dropout: Option<&[SentenceDropout]>,
) -> Result<LossNodes> {
    let (task, _) = text_task_loss(g, nodes, batch, dropout)?;
    Ok(LossNodes {
        total: task,
        task,
        latent: None,
    })
}

/// Shared text pipeline: returns the summed NLL node and the per-sentence
/// encoder outputs for reuse by multitask heads.
fn text_task_loss(
    g: &mut DiffGraph,
    nodes: &TextBackboneNodes,
    batch: &[TrainExample],
    dropout: Option<&[SentenceDropout]>,
) -> Result<(NodeId, Vec<EncoderOutput>)> {
    check_batch(batch, dropout)?;
    let mut nlls = Vec::with_capacity(batch.len());
    let mut encs = Vec::with_capacity(batch.len());
    for (i, ex) in batch.iter().enumerate() {
        let drop = dropout.map(|d| &d[i]);
        check_dropout(ex, drop)?;
        let enc = encode_bigru(
            g,
            &nodes.encoder,
            &ex.source,
            drop.map(|d| d.source.as_slice()),
        )?;
        let start = init_decoder_state(g, nodes.init_state, &enc)?;
        let nll = decode_teacher_forced(
            g,
            &nodes.decoder,
            &enc,
            start,
            &ex.target,
            drop.map(|d| d.output.as_slice()),
        )?;
        nlls.push(nll);
        encs.push(enc);
    }
    let task = g.sum(&nlls)?;
    Ok((task, encs))
}

/// Sum of sentence NLLs for the doubly-attentive model. Every example must
/// carry spatial features.
pub fn da_batch_loss(
    g: &mut DiffGraph,
    nodes: &DoublyAttentiveNodes,
    batch: &[TrainExample],
    dropout: Option<&[SentenceDropout]>,
) -> Result<LossNodes> {
    check_batch(batch, dropout)?;
    let mut nlls = Vec::with_capacity(batch.len());
    for (i, ex) in batch.iter().enumerate() {
        let drop = dropout.map(|d| &d[i]);
        check_dropout(ex, drop)?;
        let spatial = ex.spatial.as_ref().ok_or_else(|| {
            Error::Config("the doubly-attentive model needs spatial features".into())
        })?;
        let enc = encode_bigru(
            g,
            &nodes.encoder,
            &ex.source,
            drop.map(|d| d.source.as_slice()),
        )?;
        let text_keys = project_keys(g, &nodes.attn_text, &enc.states)?;
        let feat = g.constant_matrix(spatial.clone());
        let mut locations = Vec::with_capacity(spatial.rows());
        for r in 0..spatial.rows() {
            locations.push(g.embed_row(feat, r)?);
        }
        let vis_keys = project_keys(g, &nodes.attn_vis, &locations)?;
        let start = init_decoder_state(g, nodes.init_state, &enc)?;

        let mut seq = Vec::with_capacity(ex.target.len() + 2);
        seq.push(BOS_ID);
        seq.extend_from_slice(&ex.target);
        seq.push(EOS_ID);
        let mut hidden = start;
        let mut dists = Vec::with_capacity(seq.len() - 1);
        for j in 1..seq.len() {
            let state = DecodeState {
                hidden,
                prev_token: seq[j - 1],
            };
            let mask = drop.map(|d| &d.output[j - 1]);
            let out = da_decoder_step(
                g, nodes, &state, &enc, &text_keys, &locations, &vis_keys, mask,
            )?;
            dists.push(out.dist);
            hidden = out.hidden;
        }
        nlls.push(sequence_nll(g, &dists, &seq[1..])?);
    }
    let task = g.sum(&nlls)?;
    Ok(LossNodes {
        total: task,
        task,
        latent: None,
    })
}

/// Multitask loss for the latent-space model: translation NLL interpolated
/// with the in-batch ranking loss over predicted image vectors.
///
/// A batch of one has no negative samples; the latent term contributes
/// zero and a warning is logged.
pub fn imagination_batch_loss(
    g: &mut DiffGraph,
    nodes: &ImaginationNodes,
    batch: &[TrainExample],
    hyper: &Hyper,
    dropout: Option<&[SentenceDropout]>,
) -> Result<LossNodes> {
    let (task, encs) = text_task_loss(g, &nodes.backbone, batch, dropout)?;

    let mut visuals = Vec::with_capacity(batch.len());
    for ex in batch {
        let v = ex.global.as_ref().ok_or_else(|| {
            Error::Config("the latent-space model needs global image features".into())
        })?;
        visuals.push(g.constant(v.clone()));
    }
    let latent = if batch.len() == 1 {
        log::warn!("latent margin loss over a batch of one is identically zero");
        g.constant(Vector::new(vec![0.0]))
    } else {
        let mut terms = Vec::with_capacity(batch.len());
        for (i, enc) in encs.iter().enumerate() {
            let predicted = imagination_latent(g, nodes.latent_proj, enc)?;
            let negatives: Vec<NodeId> = visuals
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, &v)| v)
                .collect();
            terms.push(imagination_margin_loss(
                g,
                predicted,
                visuals[i],
                &negatives,
                hyper.margin,
            )?);
        }
        g.sum(&terms)?
    };
    let total = multitask_loss(g, task, latent, hyper.lambda)?;
    Ok(LossNodes {
        total,
        task,
        latent: Some(latent),
    })
}

/// Multitask loss for the visually grounded model: NLL from the visually
/// seeded decoder interpolated with the bidirectional pair ranking loss.
pub fn vag_batch_loss(
    g: &mut DiffGraph,
    nodes: &VagNodes,
    batch: &[TrainExample],
    hyper: &Hyper,
    dropout: Option<&[SentenceDropout]>,
) -> Result<LossNodes> {
    check_batch(batch, dropout)?;
    let mut nlls = Vec::with_capacity(batch.len());
    let mut reps = Vec::with_capacity(batch.len());
    let mut visuals = Vec::with_capacity(batch.len());
    for (i, ex) in batch.iter().enumerate() {
        let drop = dropout.map(|d| &d[i]);
        check_dropout(ex, drop)?;
        let v = ex.global.as_ref().ok_or_else(|| {
            Error::Config("the visually grounded model needs global image features".into())
        })?;
        let visual = g.constant(v.clone());
        let enc = encode_bigru(
            g,
            &nodes.encoder,
            &ex.source,
            drop.map(|d| d.source.as_slice()),
        )?;
        let (_, rep) =
            vag_sentence_representation(g, nodes.ground_vis, nodes.ground_txt, &enc, visual)?;
        let start = vag_decoder_init(g, nodes.init_state, rep, &enc, hyper.rho)?;
        let nll = decode_teacher_forced(
            g,
            &nodes.decoder,
            &enc,
            start,
            &ex.target,
            drop.map(|d| d.output.as_slice()),
        )?;
        nlls.push(nll);
        reps.push(rep);
        visuals.push(visual);
    }
    let task = g.sum(&nlls)?;
    let latent = vag_pair_margin_loss(g, nodes, &reps, &visuals, hyper.margin)?;
    let total = multitask_loss(g, task, latent, hyper.lambda)?;
    Ok(LossNodes {
        total,
        task,
        latent: Some(latent),
    })
}

fn check_batch(batch: &[TrainExample], dropout: Option<&[SentenceDropout]>) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::Argument("empty batch".into()));
    }
    if let Some(d) = dropout {
        if d.len() != batch.len() {
            return Err(Error::dim("dropout masks", batch.len(), d.len()));
        }
    }
    Ok(())
}
