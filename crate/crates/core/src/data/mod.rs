//! Procedural toy dataset, degradation transforms, latent samplers and the
//! tensor file format. Everything here is a pure function of its seed.

mod dataset;
mod degrade;
mod io;
mod latents;
pub mod rng;

pub use dataset::{generate_dataset, generate_split, DatasetSplits, Split, ToyDatasetSpec, CLASSES, IMAGE_SIZE};
pub use degrade::{gaussian_blur, gaussian_kernel_1d, gaussian_noise};
pub use io::{read_image_batch, read_labels, read_tensor, write_image_batch, write_labels, write_tensor};
pub use latents::{random_noise_images, sample_latents, wasserstein_1d, LatentDist};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// A batch of images in [0, 1], shape (N, C, H, W), with optional labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBatch {
    images: Tensor,
    labels: Option<Vec<usize>>,
}

impl ImageBatch {
    /// Validates rank, label count and the [0, 1] pixel range.
    pub fn new(images: Tensor, labels: Option<Vec<usize>>) -> Result<Self> {
        if images.shape().len() != 4 {
            return Err(Error::ShapeMismatch {
                op: "ImageBatch::new",
                details: format!("expected (N,C,H,W), got {:?}", images.shape()),
            });
        }
        if let Some(ls) = &labels {
            if ls.len() != images.shape()[0] {
                return Err(Error::ShapeMismatch {
                    op: "ImageBatch::new",
                    details: format!("{} labels for {} images", ls.len(), images.shape()[0]),
                });
            }
        }
        if images.data().iter().any(|&v| !(0.0..=1.0).contains(&v)) {
            return Err(Error::InvalidArgument("image values outside [0, 1]".into()));
        }
        Ok(ImageBatch { images, labels })
    }

    pub fn images(&self) -> &Tensor {
        &self.images
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn len(&self) -> usize {
        self.images.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// (C, H, W) of each image.
    pub fn image_shape(&self) -> (usize, usize, usize) {
        let s = self.images.shape();
        (s[1], s[2], s[3])
    }

    /// One image as a (C, H, W) tensor.
    pub fn image(&self, i: usize) -> Tensor {
        self.images.index_axis0(i)
    }

    pub fn label(&self, i: usize) -> Option<usize> {
        self.labels.as_ref().map(|l| l[i])
    }

    /// Contiguous sub-batch `[start, start+len)`.
    pub fn slice(&self, start: usize, len: usize) -> ImageBatch {
        let per = self.images.numel() / self.len();
        let data = self.images.data()[start * per..(start + len) * per].to_vec();
        let mut shape = self.images.shape().to_vec();
        shape[0] = len;
        ImageBatch {
            images: Tensor::new(shape, data).unwrap(),
            labels: self.labels.as_ref().map(|l| l[start..start + len].to_vec()),
        }
    }

    /// Re-assemble from per-item images.
    pub fn from_items(items: &[Tensor], labels: Option<Vec<usize>>) -> Result<Self> {
        ImageBatch::new(Tensor::stack(items)?, labels)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_out_of_range_pixels() {
        let t = Tensor::full(vec![1, 1, 2, 2], 1.5);
        assert!(ImageBatch::new(t, None).is_err());
    }

    #[test]
    fn rejects_wrong_rank() {
        let t = Tensor::zeros(vec![4, 4]);
        assert!(ImageBatch::new(t, None).is_err());
    }

    #[test]
    fn slice_keeps_labels_aligned() {
        let t = Tensor::from_fn(vec![4, 1, 1, 1], |i| i as f32 / 10.0);
        let b = ImageBatch::new(t, Some(vec![0, 1, 2, 3])).unwrap();
        let s = b.slice(1, 2);
        assert_eq!(s.len(), 2);
        assert_eq!(s.labels(), Some(&[1usize, 2][..]));
        assert_eq!(s.images().data(), &[0.1, 0.2]);
    }
}
