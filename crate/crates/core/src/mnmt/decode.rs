//! Greedy decoding.

use crate::embedding::{BOS_ID, EOS_ID};
use crate::error::{Error, Result};
use crate::numerics::{DiffGraph, NodeId, ParamBlock};

use super::bahdanau::{
    bahdanau_decoder_step, init_decoder_state, BahdanauDecoderNodes, DecodeState,
    TextBackboneNodes,
};
use super::cells::project_keys;
use super::doubly::da_decoder_step;
use super::encoder::{encode_bigru, EncoderOutput};
use super::model::{Model, ModelNodes};
use super::vag::{vag_decoder_init, vag_sentence_representation};
use super::{GlobalFeature, SpatialFeatures};

/// Greedily translates one source sentence. Each step emits the most
/// probable token, ties resolving to the lowest id; generation stops at
/// the end marker (not emitted) or after `max_len` tokens. The
/// doubly-attentive model needs `spatial`, the visually grounded model
/// needs `global`, and the rest translate from text alone.
pub fn greedy_decode(
    model: &Model,
    source: &[usize],
    spatial: Option<&SpatialFeatures>,
    global: Option<&GlobalFeature>,
    max_len: usize,
) -> Result<Vec<usize>> {
    let mut g = DiffGraph::new();
    match model.bind(&mut g) {
        ModelNodes::Nmt(n) => decode_text(&mut g, &n, source, max_len),
        ModelNodes::Imagination(n) => decode_text(&mut g, &n.backbone, source, max_len),
        ModelNodes::DoublyAttentive(n) => {
            let spatial = spatial.ok_or_else(|| {
                Error::Config("the doubly-attentive model needs spatial features".into())
            })?;
            let enc = encode_bigru(&mut g, &n.encoder, source, None)?;
            let text_keys = project_keys(&mut g, &n.attn_text, &enc.states)?;
            let feat = g.constant_matrix(spatial.locations.clone());
            let mut locations = Vec::with_capacity(spatial.locations.rows());
            for r in 0..spatial.locations.rows() {
                locations.push(g.embed_row(feat, r)?);
            }
            let vis_keys = project_keys(&mut g, &n.attn_vis, &locations)?;
            let mut hidden = init_decoder_state(&mut g, n.init_state, &enc)?;
            let mut prev = BOS_ID;
            let mut out = Vec::new();
            for _ in 0..max_len {
                let state = DecodeState { hidden, prev_token: prev };
                let step = da_decoder_step(
                    &mut g, &n, &state, &enc, &text_keys, &locations, &vis_keys, None,
                )?;
                let tok = argmax(g.value_vec(step.dist)?.as_slice());
                if tok == EOS_ID {
                    break;
                }
                out.push(tok);
                prev = tok;
                hidden = step.hidden;
            }
            Ok(out)
        }
        ModelNodes::Vag(n) => {
            let global = global.ok_or_else(|| {
                Error::Config("the visually grounded model needs a global image feature".into())
            })?;
            let visual = g.constant(global.vector.clone());
            let enc = encode_bigru(&mut g, &n.encoder, source, None)?;
            let (_, rep) =
                vag_sentence_representation(&mut g, n.ground_vis, n.ground_txt, &enc, visual)?;
            let start = vag_decoder_init(&mut g, n.init_state, rep, &enc, model.hyper.rho)?;
            decode_from(&mut g, &n.decoder, &enc, start, max_len)
        }
    }
}

fn decode_text(
    g: &mut DiffGraph,
    n: &TextBackboneNodes,
    source: &[usize],
    max_len: usize,
) -> Result<Vec<usize>> {
    let enc = encode_bigru(g, &n.encoder, source, None)?;
    let start = init_decoder_state(g, n.init_state, &enc)?;
    decode_from(g, &n.decoder, &enc, start, max_len)
}

fn decode_from(
    g: &mut DiffGraph,
    dec: &BahdanauDecoderNodes,
    enc: &EncoderOutput,
    start: NodeId,
    max_len: usize,
) -> Result<Vec<usize>> {
    let keys = project_keys(g, &dec.attn, &enc.states)?;
    let mut hidden = start;
    let mut prev = BOS_ID;
    let mut out = Vec::new();
    for _ in 0..max_len {
        let state = DecodeState { hidden, prev_token: prev };
        let step = bahdanau_decoder_step(g, dec, &state, enc, &keys, None)?;
        let tok = argmax(g.value_vec(step.dist)?.as_slice());
        if tok == EOS_ID {
            break;
        }
        out.push(tok);
        prev = tok;
        hidden = step.hidden;
    }
    Ok(out)
}

/// Index of the strictly largest value; earlier entries win ties.
fn argmax(dist: &[f64]) -> usize {
    let mut best = 0;
    let mut best_value = dist[0];
    for (i, &v) in dist.iter().enumerate().skip(1) {
        if v > best_value {
            best = i;
            best_value = v;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::super::model::{Hyper, ModelKind, ModelParams};
    use super::super::ModelDims;
    use super::*;
    use crate::embedding::PAD_ID;
    use crate::numerics::{Matrix, Vector};

    fn tiny_dims() -> ModelDims {
        ModelDims {
            src_vocab: 8,
            tgt_vocab: 6,
            emb: 3,
            enc_hidden: 2,
            spatial_dim: 5,
            global_dim: 6,
            latent_dim: 6,
            shared_dim: 4,
        }
    }

    fn spatial() -> SpatialFeatures {
        let mut m = Matrix::zeros(2, 5);
        m.as_mut_slice().iter_mut().enumerate().for_each(|(i, v)| *v = 0.1 * i as f64);
        SpatialFeatures { locations: m }
    }

    fn global() -> GlobalFeature {
        GlobalFeature {
            vector: Vector::new(vec![0.2, -0.1, 0.4, 0.0, 0.3, -0.2]),
        }
    }

    #[test]
    fn all_zero_model_emits_the_lowest_id() {
        // Zero weights give a uniform output distribution; the tie must
        // resolve to token zero, and the end marker must never win a tie.
        let m = Model::shaped(ModelKind::Nmt, tiny_dims(), Hyper::default()).unwrap();
        let out = greedy_decode(&m, &[4, 5], None, None, 4).unwrap();
        assert_eq!(out, vec![PAD_ID; 4]);
    }

    /// Rigs the decoder so every readout sees the all-ones embedding and
    /// the chosen vocabulary row collects it with positive weight.
    fn rig_favoring(token: usize) -> Model {
        let dims = tiny_dims();
        let mut m = Model::shaped(ModelKind::Nmt, dims, Hyper::default()).unwrap();
        let ModelParams::Nmt(b) = &mut m.params else { unreachable!() };
        b.decoder.emb.as_mut_slice().fill(1.0);
        for i in 0..dims.emb {
            b.decoder.out_emb.set(i, i, 1.0);
        }
        for c in 0..dims.emb {
            b.decoder.out_vocab.set(token, c, 1.0);
        }
        m
    }

    #[test]
    fn end_marker_stops_generation_immediately() {
        let m = rig_favoring(EOS_ID);
        let out = greedy_decode(&m, &[4], None, None, 10).unwrap();
        assert!(out.is_empty());
    }

    #[test]
    fn favored_token_repeats_up_to_max_len() {
        let m = rig_favoring(4);
        let out = greedy_decode(&m, &[4], None, None, 7).unwrap();
        assert_eq!(out, vec![4; 7]);
    }

    #[test]
    fn decoding_is_deterministic() {
        for kind in ModelKind::ALL {
            let m = Model::init(kind, tiny_dims(), Hyper::default(), 11).unwrap();
            let s = spatial();
            let v = global();
            let a = greedy_decode(&m, &[4, 5, 6], Some(&s), Some(&v), 6).unwrap();
            let b = greedy_decode(&m, &[4, 5, 6], Some(&s), Some(&v), 6).unwrap();
            assert_eq!(a, b, "{kind}");
        }
    }

    #[test]
    fn multitask_model_translates_exactly_like_its_text_backbone() {
        let nmt = Model::init(ModelKind::Nmt, tiny_dims(), Hyper::default(), 23).unwrap();
        let img = Model::init(ModelKind::Imagination, tiny_dims(), Hyper::default(), 23).unwrap();
        let a = greedy_decode(&nmt, &[4, 5], None, None, 6).unwrap();
        let b = greedy_decode(&img, &[4, 5], None, None, 6).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn missing_features_are_config_errors() {
        let da = Model::init(ModelKind::DoublyAttentive, tiny_dims(), Hyper::default(), 1).unwrap();
        assert!(greedy_decode(&da, &[4], None, Some(&global()), 4).is_err());
        assert!(greedy_decode(&da, &[4], Some(&spatial()), None, 4).is_ok());

        let vag = Model::init(ModelKind::Vag, tiny_dims(), Hyper::default(), 1).unwrap();
        assert!(greedy_decode(&vag, &[4], Some(&spatial()), None, 4).is_err());
        assert!(greedy_decode(&vag, &[4], None, Some(&global()), 4).is_ok());
    }

    #[test]
    fn empty_source_is_rejected() {
        let m = Model::init(ModelKind::Nmt, tiny_dims(), Hyper::default(), 2).unwrap();
        assert!(greedy_decode(&m, &[], None, None, 4).is_err());
    }
}
