//! Bounding-box GAN: a U-net generator mapping day images to night images,
//! a strided convolutional discriminator, the adversarial objective and the
//! ROI content-preserving term, plus the alternating training loop.

mod gradcheck;
mod loss;
mod model;
mod train;

pub use gradcheck::{gradient_check, relative_error, GradCheckReport, GRADCHECK_STEP};
pub use loss::{bbgan_loss, content_loss, gan_loss, graph_bbgan_objective, PROB_EPS};
pub use model::{ArchConfig, Discriminator, GanModel, Generator, ALPHA_EPS, RESIDUAL_EPS};
pub use train::{
    image_to_tensor, roi_mask_tensor, tensor_to_image, train_bbgan, translate_image, GanSample, LossRecord,
    TrainConfig, TrainOutcome,
};
