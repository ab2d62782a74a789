//! Tensor arithmetic, seeded randomness, the 2-D DCT and image transforms.

pub mod dct;
pub mod io;
pub mod rng;
pub mod tensor;
pub mod transform;

pub use dct::{dct2, idct2};
pub use io::{read_tensor, write_tensor};
pub use rng::{gaussian, uniform, Rng};
pub use tensor::{project_linf, Norm, Tensor};
pub use transform::{
    block_transform, block_transform_traced, conv2d_same, gaussian_kernel, resize_pad,
    resize_pad_traced, translate, BlockOp, Pullback,
};

pub(crate) use tensor::mean_of;
