//! Desk-scale multimodal translation models.
//!
//! Four architectures share one bidirectional recurrent encoder and an
//! attentive recurrent decoder: a text-only baseline, a doubly-attentive
//! decoder that also attends over spatial image features, a multitask
//! variant that predicts a global image vector from the source, and a
//! visually grounded variant that seeds the decoder from an image-guided
//! sentence representation. Everything runs on the reverse-mode graph in
//! [`crate::numerics`], small enough to be checked against finite
//! differences end to end.

pub mod bahdanau;
pub mod cells;
pub mod checkpoint;
pub mod decode;
pub mod doubly;
pub mod encoder;
pub mod features;
pub mod imagination;
pub mod losses;
pub mod model;
pub mod vag;

pub use bahdanau::{BahdanauDecoderParams, TextBackbone};
pub use decode::greedy_decode;
pub use doubly::DoublyAttentiveParams;
pub use features::FeatureFile;
pub use imagination::ImaginationParams;
pub use losses::{
    graph_cosine, multitask_loss, sequence_nll, LossNodes, SentenceDropout, TrainExample,
    NLL_PROB_FLOOR,
};
pub use model::{Hyper, Model, ModelKind, ModelNodes, ModelParams};
pub use vag::VagParams;

use crate::embedding::SPECIAL_COUNT;
use crate::error::{Error, Result};
use crate::numerics::{Matrix, Vector};

/// Layer sizes shared by every architecture. Vocabulary sizes count the
/// reserved marker tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelDims {
    pub src_vocab: usize,
    pub tgt_vocab: usize,
    pub emb: usize,
    pub enc_hidden: usize,
    pub spatial_dim: usize,
    pub global_dim: usize,
    pub latent_dim: usize,
    pub shared_dim: usize,
}

impl ModelDims {
    /// Published layer sizes; only the vocabularies vary per corpus.
    pub fn new(src_vocab: usize, tgt_vocab: usize) -> Self {
        ModelDims {
            src_vocab,
            tgt_vocab,
            emb: 300,
            enc_hidden: 256,
            spatial_dim: 1024,
            global_dim: 2048,
            latent_dim: 2048,
            shared_dim: 512,
        }
    }

    /// Encoder output width: forward and backward states concatenated.
    pub fn enc_out(&self) -> usize {
        2 * self.enc_hidden
    }

    /// Decoder hidden width, matched to the encoder output.
    pub fn dec_hidden(&self) -> usize {
        2 * self.enc_hidden
    }

    /// Width of the additive attention space.
    pub fn attn_dim(&self) -> usize {
        2 * self.enc_hidden
    }

    pub fn validate(&self) -> Result<()> {
        let sizes = [
            ("emb", self.emb),
            ("enc_hidden", self.enc_hidden),
            ("spatial_dim", self.spatial_dim),
            ("global_dim", self.global_dim),
            ("latent_dim", self.latent_dim),
            ("shared_dim", self.shared_dim),
        ];
        for (name, v) in sizes {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        for (name, v) in [("src_vocab", self.src_vocab), ("tgt_vocab", self.tgt_vocab)] {
            if v <= SPECIAL_COUNT {
                return Err(Error::Config(format!(
                    "{name} must exceed the {SPECIAL_COUNT} reserved tokens, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Spatial image features: one row per image location.
#[derive(Debug, Clone)]
pub struct SpatialFeatures {
    pub locations: Matrix,
}

/// Pooled whole-image feature vector.
#[derive(Debug, Clone)]
pub struct GlobalFeature {
    pub vector: Vector,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_dims_follow_published_sizes() {
        let d = ModelDims::new(100, 80);
        assert_eq!(d.src_vocab, 100);
        assert_eq!(d.tgt_vocab, 80);
        assert_eq!(d.emb, 300);
        assert_eq!(d.enc_hidden, 256);
        assert_eq!(d.enc_out(), 512);
        assert_eq!(d.dec_hidden(), 512);
        assert_eq!(d.attn_dim(), 512);
        assert_eq!(d.spatial_dim, 1024);
        assert_eq!(d.global_dim, 2048);
        assert_eq!(d.latent_dim, 2048);
        assert_eq!(d.shared_dim, 512);
        assert!(d.validate().is_ok());
    }

    #[test]
    fn validation_rejects_degenerate_sizes() {
        let mut d = ModelDims::new(10, 10);
        d.emb = 0;
        assert!(d.validate().is_err());

        let mut d = ModelDims::new(10, 10);
        d.src_vocab = SPECIAL_COUNT;
        assert!(d.validate().is_err());

        let mut d = ModelDims::new(10, 10);
        d.tgt_vocab = 3;
        assert!(d.validate().is_err());
    }
}
