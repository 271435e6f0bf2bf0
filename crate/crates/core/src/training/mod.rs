//! Fine-tuning: losses, the trainability policy, Adam, checkpoints and the
//! training driver.

pub mod checkpoint;
pub mod fit;
pub mod loss;
pub mod optim;
pub mod policy;
