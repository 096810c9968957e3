//! Layer engine with hand-written reverse-mode gradients.

pub mod adam;
pub mod gradcheck;
pub mod io;
mod kernels;
pub mod layers;
pub mod loss;
pub mod model;
pub mod sequential;
pub mod tensor;
pub mod train;

pub use adam::{Adam, AdamConfig};
pub use io::{embedding_from_parts, embedding_meta, head_from_net, load_model, save_model, ModelFile};
pub use layers::{elu, Ctx, Layer, LayerSpec, PoolIndices};
pub use loss::{mse, softmax, softmax_cross_entropy, LossKind};
pub use model::{quantize, ArchConfig, Autoencoder, ConvBlock, DenseHead, EmbeddingKind, EmbeddingModel};
pub use sequential::{Mode, Sequential};
pub use tensor::Tensor;
pub use train::{
    argmax_row, classify, embed_all, fit_autoencoder, fit_classifier, fit_head, predict_features, reconstruction_error,
    train_cae, train_cnn, EpochRecord, History, SampleSet, TrainConfig,
};
