//! Latent-space multitask extension of the text backbone: the mean encoder
//! state is projected toward the paired image feature under a max-margin
//! ranking loss, while translation continues through the shared backbone.

use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::{param_block, DiffGraph, Matrix, NodeId};

use super::bahdanau::TextBackbone;
use super::cells::glorot_matrix;
use super::encoder::EncoderOutput;
use super::losses::graph_cosine;
use super::ModelDims;

param_block! {
    /// Text backbone plus the latent projection. The backbone comes first
    /// so its initialization draws, flat coordinates, and checkpoint bytes
    /// line up with the text-only model.
    pub struct ImaginationParams, nodes ImaginationNodes {
        pub backbone: TextBackbone,
        pub latent_proj: Matrix,
    }
}

impl ImaginationParams {
    pub fn init(dims: &ModelDims, rng: &mut impl Rng) -> Self {
        ImaginationParams {
            backbone: TextBackbone::init(dims, rng),
            latent_proj: glorot_matrix(dims.latent_dim, dims.enc_out(), rng),
        }
    }

    pub fn shaped(dims: &ModelDims) -> Self {
        ImaginationParams {
            backbone: TextBackbone::shaped(dims),
            latent_proj: Matrix::zeros(dims.latent_dim, dims.enc_out()),
        }
    }
}

/// Predicted image vector `tanh(W mean(h))`.
pub fn imagination_latent(
    g: &mut DiffGraph,
    latent_proj: NodeId,
    enc: &EncoderOutput,
) -> Result<NodeId> {
    let m = g.matvec(latent_proj, enc.mean_state)?;
    g.tanh(m)
}

/// Max-margin ranking loss against the paired image:
/// `sum_neg max(0, margin - cos(latent, positive) + cos(latent, negative))`.
///
/// Zero-norm vectors have no cosine and surface as numerical errors.
pub fn imagination_margin_loss(
    g: &mut DiffGraph,
    latent: NodeId,
    positive: NodeId,
    negatives: &[NodeId],
    margin: f64,
) -> Result<NodeId> {
    if !margin.is_finite() || margin < 0.0 {
        return Err(Error::Argument(format!(
            "margin must be finite and non-negative, got {margin}"
        )));
    }
    if negatives.is_empty() {
        return Err(Error::Argument(
            "margin loss needs at least one negative sample".into(),
        ));
    }
    let pos = graph_cosine(g, latent, positive)?;
    let mut terms = Vec::with_capacity(negatives.len());
    for &n in negatives {
        let neg = graph_cosine(g, latent, n)?;
        let diff = g.sub(neg, pos)?;
        let shifted = g.add_const(diff, margin)?;
        terms.push(g.relu(shifted)?);
    }
    g.sum(&terms)
}

#[cfg(test)]
mod tests {
    use super::super::encoder::encode_bigru;
    use super::*;
    use crate::numerics::{flatten_gradients, ParamBlock, Vector};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

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

    #[test]
    fn latent_zero_projection_is_zero() {
        let params = ImaginationParams::shaped(&tiny_dims());
        let mut g = DiffGraph::new();
        let nodes = params.bind(&mut g);
        let enc = encode_bigru(&mut g, &nodes.backbone.encoder, &[4, 5], None).unwrap();
        let latent = imagination_latent(&mut g, nodes.latent_proj, &enc).unwrap();
        assert!(g.value_vec(latent).unwrap().as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn latent_single_state_uses_that_state() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let params = ImaginationParams::init(&tiny_dims(), &mut rng);
        let mut g = DiffGraph::new();
        let nodes = params.bind(&mut g);
        let enc = encode_bigru(&mut g, &nodes.backbone.encoder, &[5], None).unwrap();
        let latent = imagination_latent(&mut g, nodes.latent_proj, &enc).unwrap();
        let h = g.value_vec(enc.states[0]).unwrap().as_slice().to_vec();
        for i in 0..6 {
            let want: f64 = params
                .latent_proj
                .row(i)
                .iter()
                .zip(&h)
                .map(|(a, b)| a * b)
                .sum::<f64>()
                .tanh();
            assert!((g.value_vec(latent).unwrap()[i] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn margin_loss_hand_case() {
        // cos(latent, positive) = 0.5, cos(latent, negative) = 0.7,
        // margin 0.1 -> single hinge 0.1 - 0.5 + 0.7 = 0.3.
        let mut g = DiffGraph::new();
        let latent = g.constant(Vector::new(vec![1.0, 0.0]));
        let pos = g.constant(Vector::new(vec![0.5, 0.75_f64.sqrt()]));
        let neg = g.constant(Vector::new(vec![0.7, 0.51_f64.sqrt()]));
        let loss = imagination_margin_loss(&mut g, latent, pos, &[neg], 0.1).unwrap();
        assert!((g.value_vec(loss).unwrap()[0] - 0.3).abs() < 1e-12);
    }

    #[test]
    fn inactive_hinge_gives_zero_loss_and_zero_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let params = ImaginationParams::init(&tiny_dims(), &mut rng);
        let mut g = DiffGraph::new();
        let nodes = params.bind(&mut g);
        let enc = encode_bigru(&mut g, &nodes.backbone.encoder, &[4, 5], None).unwrap();
        let latent = imagination_latent(&mut g, nodes.latent_proj, &enc).unwrap();
        // Positive aligned with the latent itself; negative opposed.
        let lv = g.value_vec(latent).unwrap().as_slice().to_vec();
        let pos = g.constant(Vector::new(lv.iter().map(|v| v * 2.0).collect()));
        let neg = g.constant(Vector::new(lv.iter().map(|v| -v).collect()));
        let loss = imagination_margin_loss(&mut g, latent, pos, &[neg], 0.1).unwrap();
        assert_eq!(g.value_vec(loss).unwrap()[0], 0.0);
        let grads = g.backward(loss).unwrap();
        let flat = flatten_gradients::<ImaginationParams>(&nodes, &grads);
        assert!(flat.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn margin_loss_non_negative_on_random_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        for _ in 0..25 {
            let mut g = DiffGraph::new();
            let rand_vec = |rng: &mut ChaCha8Rng| {
                Vector::new((0..4).map(|_| rng.random_range(-1.0..1.0) + 0.01).collect())
            };
            let latent = g.constant(rand_vec(&mut rng));
            let pos = g.constant(rand_vec(&mut rng));
            let negs: Vec<_> = (0..3).map(|_| g.constant(rand_vec(&mut rng))).collect();
            let loss = imagination_margin_loss(&mut g, latent, pos, &negs, 0.1).unwrap();
            assert!(g.value_vec(loss).unwrap()[0] >= 0.0);
        }
    }

    #[test]
    fn empty_negatives_rejected() {
        let mut g = DiffGraph::new();
        let latent = g.constant(Vector::new(vec![1.0, 0.0]));
        let pos = g.constant(Vector::new(vec![0.5, 0.5]));
        assert!(imagination_margin_loss(&mut g, latent, pos, &[], 0.1).is_err());
        assert!(imagination_margin_loss(&mut g, latent, pos, &[pos], -0.5).is_err());
    }
}
