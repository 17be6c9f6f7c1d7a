//! Dense linear algebra, reverse-mode differentiation, and deterministic PCA.

mod dense;
pub mod graph;
mod params;
mod pca;

pub use dense::{cosine_similarity, softmax, Matrix, Vector};
pub use graph::{DiffGraph, Gradients, NodeId};
pub use params::{
    coord_count, finite_difference_gradient, flatten_gradients, read_coord, relative_error,
    set_coord, shift_coord, ParamBlock,
};
pub use pca::{pca_top_components, PcaBasis};

pub(crate) use params::param_block;
