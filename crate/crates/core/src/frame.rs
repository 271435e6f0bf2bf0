use image::RgbImage;
use ndarray::Array3;

/// An RGB image together with the identifier it is known by in a dataset
/// (`sequence/frame`) or on the command line (file stem).
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub id: String,
    pub rgb: RgbImage,
}

impl Frame {
    pub fn new(id: impl Into<String>, rgb: RgbImage) -> Self {
        Frame { id: id.into(), rgb }
    }

    pub fn height(&self) -> usize {
        self.rgb.height() as usize
    }

    pub fn width(&self) -> usize {
        self.rgb.width() as usize
    }

    /// `[3, H, W]` with channel values scaled to `[0, 1]`.
    pub fn to_tensor(&self) -> Array3<f64> {
        let (h, w) = (self.height(), self.width());
        Array3::from_shape_fn((3, h, w), |(c, y, x)| {
            self.rgb.get_pixel(x as u32, y as u32)[c] as f64 / 255.0
        })
    }
}

/// 64-bit FNV-1a; stable across platforms and releases, unlike `DefaultHasher`.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}
