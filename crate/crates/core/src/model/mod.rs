//! Relevance models: lexical feature extraction, the multinomial-logistic
//! reference implementation, its training objectives, and distillation.

mod features;
mod objectives;
mod reference;

pub use features::{tokenize, FeatureExtractor, FeatureVector, FEATURE_DIM, FEATURE_NAMES};
pub use objectives::{
    generative_grad, generative_loss, kl_divergence, pairwise_grad, pairwise_loss, softmax,
    softmax_with_floor, distill_grad, distill_loss,
};
pub use reference::{
    distill, ConstantModel, PreferenceTriple, ReferenceModelParams, ReferenceRelevanceModel,
    RelevanceModel, PROBABILITY_FLOOR, TEMPERATURE_FLOOR,
};
