//! One wrapper over the four architectures so training, decoding, and
//! serialization can stay generic.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numerics::{coord_count, DiffGraph, Matrix, NodeId, ParamBlock};

use super::bahdanau::{TextBackbone, TextBackboneNodes};
use super::doubly::{DoublyAttentiveNodes, DoublyAttentiveParams};
use super::imagination::{ImaginationNodes, ImaginationParams};
use super::losses::{
    da_batch_loss, imagination_batch_loss, nmt_batch_loss, vag_batch_loss, LossNodes,
    SentenceDropout, TrainExample,
};
use super::vag::{VagNodes, VagParams};
use super::ModelDims;

/// The four architectures.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Nmt,
    DoublyAttentive,
    Imagination,
    Vag,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [
        ModelKind::Nmt,
        ModelKind::DoublyAttentive,
        ModelKind::Imagination,
        ModelKind::Vag,
    ];

    /// Stable one-byte code used by the checkpoint format.
    pub fn code(self) -> u8 {
        match self {
            ModelKind::Nmt => 0,
            ModelKind::DoublyAttentive => 1,
            ModelKind::Imagination => 2,
            ModelKind::Vag => 3,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.code() == code)
            .ok_or_else(|| Error::Argument(format!("unknown model kind code {code}")))
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Nmt => "nmt",
            ModelKind::DoublyAttentive => "doubly-attentive",
            ModelKind::Imagination => "imagination",
            ModelKind::Vag => "vag",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nmt" => Ok(ModelKind::Nmt),
            "doubly-attentive" | "da" => Ok(ModelKind::DoublyAttentive),
            "imagination" => Ok(ModelKind::Imagination),
            "vag" => Ok(ModelKind::Vag),
            other => Err(Error::Argument(format!(
                "unknown model kind {other:?}; expected nmt, doubly-attentive, imagination, or vag"
            ))),
        }
    }
}

/// Scalars that shape the training objective rather than the parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hyper {
    /// Weight of the translation loss in multitask objectives.
    pub lambda: f64,
    /// Margin of the ranking losses.
    pub margin: f64,
    /// Mix between the grounded representation and the mean encoder state
    /// when seeding the visually grounded decoder.
    pub rho: f64,
}

impl Default for Hyper {
    fn default() -> Self {
        Hyper {
            lambda: 0.5,
            margin: 0.1,
            rho: 0.5,
        }
    }
}

impl Hyper {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::Config(format!(
                "lambda must lie in [0, 1], got {}",
                self.lambda
            )));
        }
        if !self.margin.is_finite() || self.margin < 0.0 {
            return Err(Error::Config(format!(
                "margin must be finite and non-negative, got {}",
                self.margin
            )));
        }
        if !(0.0..=1.0).contains(&self.rho) {
            return Err(Error::Config(format!(
                "rho must lie in [0, 1], got {}",
                self.rho
            )));
        }
        Ok(())
    }
}

/// Parameters of one concrete architecture.
#[derive(Debug, Clone)]
pub enum ModelParams {
    Nmt(TextBackbone),
    DoublyAttentive(DoublyAttentiveParams),
    Imagination(ImaginationParams),
    Vag(VagParams),
}

/// Graph handles mirroring [`ModelParams`].
#[derive(Debug, Clone, Copy)]
pub enum ModelNodes {
    Nmt(TextBackboneNodes),
    DoublyAttentive(DoublyAttentiveNodes),
    Imagination(ImaginationNodes),
    Vag(VagNodes),
}

/// A model: sizes, objective scalars, and parameters.
#[derive(Debug, Clone)]
pub struct Model {
    pub dims: ModelDims,
    pub hyper: Hyper,
    pub params: ModelParams,
}

impl Model {
    /// Fresh model with uniform Glorot weights drawn from `seed`.
    pub fn init(kind: ModelKind, dims: ModelDims, hyper: Hyper, seed: u64) -> Result<Self> {
        Self::check(kind, &dims, &hyper)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = match kind {
            ModelKind::Nmt => ModelParams::Nmt(TextBackbone::init(&dims, &mut rng)),
            ModelKind::DoublyAttentive => {
                ModelParams::DoublyAttentive(DoublyAttentiveParams::init(&dims, &mut rng))
            }
            ModelKind::Imagination => {
                ModelParams::Imagination(ImaginationParams::init(&dims, &mut rng))
            }
            ModelKind::Vag => ModelParams::Vag(VagParams::init(&dims, &mut rng)),
        };
        Ok(Model { dims, hyper, params })
    }

    /// Zero-valued model with the right shapes, ready to be filled by a
    /// checkpoint loader.
    pub fn shaped(kind: ModelKind, dims: ModelDims, hyper: Hyper) -> Result<Self> {
        Self::check(kind, &dims, &hyper)?;
        let params = match kind {
            ModelKind::Nmt => ModelParams::Nmt(TextBackbone::shaped(&dims)),
            ModelKind::DoublyAttentive => {
                ModelParams::DoublyAttentive(DoublyAttentiveParams::shaped(&dims))
            }
            ModelKind::Imagination => {
                ModelParams::Imagination(ImaginationParams::shaped(&dims))
            }
            ModelKind::Vag => ModelParams::Vag(VagParams::shaped(&dims)),
        };
        Ok(Model { dims, hyper, params })
    }

    fn check(kind: ModelKind, dims: &ModelDims, hyper: &Hyper) -> Result<()> {
        dims.validate()?;
        hyper.validate()?;
        if kind == ModelKind::Imagination && dims.latent_dim != dims.global_dim {
            return Err(Error::Config(format!(
                "the predicted latent vector is scored by cosine against the image \
                 feature, so latent_dim must equal global_dim: {} vs {}",
                dims.latent_dim, dims.global_dim
            )));
        }
        Ok(())
    }

    pub fn kind(&self) -> ModelKind {
        match &self.params {
            ModelParams::Nmt(_) => ModelKind::Nmt,
            ModelParams::DoublyAttentive(_) => ModelKind::DoublyAttentive,
            ModelParams::Imagination(_) => ModelKind::Imagination,
            ModelParams::Vag(_) => ModelKind::Vag,
        }
    }

    /// Number of scalar parameters under the flat traversal order.
    pub fn coord_count(&self) -> usize {
        coord_count(self)
    }

    /// Builds this model's training loss over one batch.
    pub fn build_batch_loss(
        &self,
        g: &mut DiffGraph,
        nodes: &ModelNodes,
        batch: &[TrainExample],
        dropout: Option<&[SentenceDropout]>,
    ) -> Result<LossNodes> {
        match (&self.params, nodes) {
            (ModelParams::Nmt(_), ModelNodes::Nmt(n)) => nmt_batch_loss(g, n, batch, dropout),
            (ModelParams::DoublyAttentive(_), ModelNodes::DoublyAttentive(n)) => {
                da_batch_loss(g, n, batch, dropout)
            }
            (ModelParams::Imagination(_), ModelNodes::Imagination(n)) => {
                imagination_batch_loss(g, n, batch, &self.hyper, dropout)
            }
            (ModelParams::Vag(_), ModelNodes::Vag(n)) => {
                vag_batch_loss(g, n, batch, &self.hyper, dropout)
            }
            _ => Err(Error::Argument(
                "node handles belong to a different model kind".into(),
            )),
        }
    }

    /// Width of the pre-output dropout mask. The doubly-attentive decoder
    /// masks the final vocabulary-sized activation; the others mask the
    /// embedding-sized readout.
    pub fn output_mask_dim(&self) -> usize {
        match self.kind() {
            ModelKind::DoublyAttentive => self.dims.tgt_vocab,
            _ => self.dims.emb,
        }
    }

    /// Overwrites the source embedding table.
    pub fn set_source_embeddings(&mut self, table: &Matrix) -> Result<()> {
        let want = (self.dims.src_vocab, self.dims.emb);
        if table.shape() != want {
            return Err(Error::dim(
                "set_source_embeddings",
                format!("{:?}", want),
                format!("{:?}", table.shape()),
            ));
        }
        let slot = match &mut self.params {
            ModelParams::Nmt(p) => &mut p.encoder.emb,
            ModelParams::DoublyAttentive(p) => &mut p.encoder.emb,
            ModelParams::Imagination(p) => &mut p.backbone.encoder.emb,
            ModelParams::Vag(p) => &mut p.encoder.emb,
        };
        *slot = table.clone();
        Ok(())
    }

    /// Overwrites the target embedding table.
    pub fn set_target_embeddings(&mut self, table: &Matrix) -> Result<()> {
        let want = (self.dims.tgt_vocab, self.dims.emb);
        if table.shape() != want {
            return Err(Error::dim(
                "set_target_embeddings",
                format!("{:?}", want),
                format!("{:?}", table.shape()),
            ));
        }
        let slot = match &mut self.params {
            ModelParams::Nmt(p) => &mut p.decoder.emb,
            ModelParams::DoublyAttentive(p) => &mut p.emb_dec,
            ModelParams::Imagination(p) => &mut p.backbone.decoder.emb,
            ModelParams::Vag(p) => &mut p.decoder.emb,
        };
        *slot = table.clone();
        Ok(())
    }
}

/// A model is itself a parameter block, so the optimizer, checkpoints,
/// and the finite-difference oracle all share one flat coordinate order.
impl ParamBlock for Model {
    type Nodes = ModelNodes;

    fn bind(&self, g: &mut DiffGraph) -> ModelNodes {
        match &self.params {
            ModelParams::Nmt(p) => ModelNodes::Nmt(p.bind(g)),
            ModelParams::DoublyAttentive(p) => ModelNodes::DoublyAttentive(p.bind(g)),
            ModelParams::Imagination(p) => ModelNodes::Imagination(p.bind(g)),
            ModelParams::Vag(p) => ModelNodes::Vag(p.bind(g)),
        }
    }

    fn visit(&self, f: &mut dyn FnMut(&[f64])) {
        match &self.params {
            ModelParams::Nmt(p) => p.visit(f),
            ModelParams::DoublyAttentive(p) => p.visit(f),
            ModelParams::Imagination(p) => p.visit(f),
            ModelParams::Vag(p) => p.visit(f),
        }
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        match &mut self.params {
            ModelParams::Nmt(p) => p.visit_mut(f),
            ModelParams::DoublyAttentive(p) => p.visit_mut(f),
            ModelParams::Imagination(p) => p.visit_mut(f),
            ModelParams::Vag(p) => p.visit_mut(f),
        }
    }

    fn leaf_ids(nodes: &ModelNodes, out: &mut Vec<NodeId>) {
        match nodes {
            ModelNodes::Nmt(n) => TextBackbone::leaf_ids(n, out),
            ModelNodes::DoublyAttentive(n) => DoublyAttentiveParams::leaf_ids(n, out),
            ModelNodes::Imagination(n) => ImaginationParams::leaf_ids(n, out),
            ModelNodes::Vag(n) => VagParams::leaf_ids(n, out),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

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

    fn flat(m: &Model) -> Vec<f64> {
        let mut v = Vec::new();
        m.visit(&mut |s| v.extend_from_slice(s));
        v
    }

    #[test]
    fn init_is_deterministic_per_seed() {
        for kind in ModelKind::ALL {
            let a = Model::init(kind, tiny_dims(), Hyper::default(), 17).unwrap();
            let b = Model::init(kind, tiny_dims(), Hyper::default(), 17).unwrap();
            let c = Model::init(kind, tiny_dims(), Hyper::default(), 18).unwrap();
            assert_eq!(flat(&a), flat(&b), "{kind}");
            assert_ne!(flat(&a), flat(&c), "{kind}");
        }
    }

    #[test]
    fn multitask_init_extends_the_text_model_bitwise() {
        // The text backbone comes first in the multitask block and both
        // inits consume the seed in declaration order, so the shared prefix
        // must match exactly. Training with the latent term switched off
        // then follows the text-only trajectory.
        let nmt = Model::init(ModelKind::Nmt, tiny_dims(), Hyper::default(), 9).unwrap();
        let img = Model::init(ModelKind::Imagination, tiny_dims(), Hyper::default(), 9).unwrap();
        let a = flat(&nmt);
        let b = flat(&img);
        assert!(b.len() > a.len());
        assert_eq!(a.as_slice(), &b[..a.len()]);
    }

    #[test]
    fn shaped_models_are_zero_with_matching_layout() {
        for kind in ModelKind::ALL {
            let z = Model::shaped(kind, tiny_dims(), Hyper::default()).unwrap();
            let r = Model::init(kind, tiny_dims(), Hyper::default(), 3).unwrap();
            assert_eq!(z.coord_count(), r.coord_count(), "{kind}");
            assert!(flat(&z).iter().all(|&v| v == 0.0), "{kind}");
        }
    }

    #[test]
    fn kind_names_round_trip() {
        for kind in ModelKind::ALL {
            assert_eq!(kind.name().parse::<ModelKind>().unwrap(), kind);
            assert_eq!(ModelKind::from_code(kind.code()).unwrap(), kind);
        }
        assert_eq!("da".parse::<ModelKind>().unwrap(), ModelKind::DoublyAttentive);
        assert!("transformer".parse::<ModelKind>().is_err());
        assert!(ModelKind::from_code(9).is_err());
    }

    #[test]
    fn latent_dimension_must_match_the_image_feature() {
        let mut dims = tiny_dims();
        dims.latent_dim = 5;
        assert!(Model::init(ModelKind::Imagination, dims, Hyper::default(), 0).is_err());
        // The constraint binds only the latent-space model.
        assert!(Model::init(ModelKind::Vag, dims, Hyper::default(), 0).is_ok());
    }

    #[test]
    fn hyper_validation() {
        assert!(Hyper::default().validate().is_ok());
        assert!(Hyper { lambda: 1.2, ..Hyper::default() }.validate().is_err());
        assert!(Hyper { margin: -0.1, ..Hyper::default() }.validate().is_err());
        assert!(Hyper { margin: f64::NAN, ..Hyper::default() }.validate().is_err());
        assert!(Hyper { rho: -0.5, ..Hyper::default() }.validate().is_err());
    }

    #[test]
    fn output_mask_dim_per_kind() {
        let dims = tiny_dims();
        let h = Hyper::default();
        let mask_dim = |k| Model::shaped(k, dims, h).unwrap().output_mask_dim();
        assert_eq!(mask_dim(ModelKind::Nmt), dims.emb);
        assert_eq!(mask_dim(ModelKind::DoublyAttentive), dims.tgt_vocab);
        assert_eq!(mask_dim(ModelKind::Imagination), dims.emb);
        assert_eq!(mask_dim(ModelKind::Vag), dims.emb);
    }

    #[test]
    fn mismatched_nodes_are_rejected() {
        let nmt = Model::shaped(ModelKind::Nmt, tiny_dims(), Hyper::default()).unwrap();
        let vag = Model::shaped(ModelKind::Vag, tiny_dims(), Hyper::default()).unwrap();
        let mut g = DiffGraph::new();
        let nodes = nmt.bind(&mut g);
        let batch = [TrainExample {
            source: vec![4],
            target: vec![4],
            global: None,
            spatial: None,
        }];
        assert!(vag.build_batch_loss(&mut g, &nodes, &batch, None).is_err());
    }

    #[test]
    fn embedding_tables_can_be_seeded() {
        let dims = tiny_dims();
        let mut m = Model::shaped(ModelKind::DoublyAttentive, dims, Hyper::default()).unwrap();
        let mut src = Matrix::zeros(dims.src_vocab, dims.emb);
        src.as_mut_slice().iter_mut().enumerate().for_each(|(i, v)| *v = i as f64);
        let mut tgt = Matrix::zeros(dims.tgt_vocab, dims.emb);
        tgt.as_mut_slice().iter_mut().enumerate().for_each(|(i, v)| *v = -(i as f64));
        m.set_source_embeddings(&src).unwrap();
        m.set_target_embeddings(&tgt).unwrap();
        match &m.params {
            ModelParams::DoublyAttentive(p) => {
                assert_eq!(p.encoder.emb.as_slice(), src.as_slice());
                assert_eq!(p.emb_dec.as_slice(), tgt.as_slice());
            }
            _ => unreachable!(),
        }
        let bad = Matrix::zeros(dims.src_vocab + 1, dims.emb);
        assert!(m.set_source_embeddings(&bad).is_err());
    }
}
