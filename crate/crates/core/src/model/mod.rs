//! Segmentation network: band adapter, encoder, decoder, softmax. Also the
//! masked-autoencoder pretraining path and the convolutional baseline.

mod adapter;
mod baseline;
mod decoder;
mod layers;
mod mae;
mod params;
mod seg;
mod spec;
mod vit;

pub use adapter::{linear_init, Adapter};
pub use baseline::UNet;
pub use decoder::Decoder;
pub use layers::{sincos_1d, sincos_2d};
pub use mae::{
    mae_loss, mae_pretrain_step, mask_count, patchify, random_masking, MaeOutput, MaePretrainer, Masking,
    ReconDecoder, ReconSpec,
};
pub use params::ParamStore;
pub use seg::{
    patches_to_labels, patches_to_tensor, predict_mask, threshold_mask, CheckpointMeta, SegModel, ADAPTER_FILE,
    DECODER_FILE, ENCODER_FILE, FINETUNE_TIMESTAMP, MODEL_FILE,
};
pub use spec::{
    AdapterKind, AdapterSpec, Architecture, DecoderSpec, EncoderKind, EncoderSpec, ModelSpec, TuningStrategy, B_PRE,
};
pub use vit::{gather_tokens, load_external_checkpoint, ToyVit};
