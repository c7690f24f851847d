use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest pixel total for which every count is exactly representable in an `f64`.
pub const MAX_TOTAL_PIXELS: u64 = 1 << 53;

/// Dimensions of the target set: image count, per-image grid size and class count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DatasetShape {
    num_images: usize,
    height: usize,
    width: usize,
    num_classes: usize,
}

impl DatasetShape {
    pub fn new(num_images: usize, height: usize, width: usize, num_classes: usize) -> Result<Self> {
        for (name, value) in [
            ("num_images", num_images),
            ("height", height),
            ("width", width),
            ("num_classes", num_classes),
        ] {
            if value == 0 {
                return Err(Error::config(name, "must be strictly positive"));
            }
        }
        if num_classes > usize::from(u16::MAX) + 1 {
            return Err(Error::config(
                "num_classes",
                "at most 65536 classes are supported",
            ));
        }
        if height > u32::MAX as usize || width > u32::MAX as usize || num_images > u32::MAX as usize
        {
            return Err(Error::Shape("dimensions must fit in 32 bits".into()));
        }
        let total = (num_images as u64)
            .checked_mul(height as u64)
            .and_then(|v| v.checked_mul(width as u64))
            .filter(|&t| t <= MAX_TOTAL_PIXELS)
            .ok_or_else(|| Error::Shape("total pixel count exceeds 2^53".into()))?;
        debug_assert!(total > 0);
        Ok(Self {
            num_images,
            height,
            width,
            num_classes,
        })
    }

    pub fn num_images(&self) -> usize {
        self.num_images
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn pixels_per_image(&self) -> u64 {
        self.height as u64 * self.width as u64
    }

    /// `|T| * H * W`.
    pub fn total_pixels(&self) -> u64 {
        self.num_images as u64 * self.pixels_per_image()
    }
}
