use alloc::vec::Vec;

/// Side length of synthetic studies.
pub const IMAGE_SIDE: usize = 16;
pub const IMAGE_PIXELS: usize = IMAGE_SIDE * IMAGE_SIDE;

/// Row-major grayscale intensities, nominally in [0,1].
#[derive(Clone, Debug, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<f32>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<f32>) -> Option<GrayImage> {
        (pixels.len() == width * height).then_some(GrayImage { width, height, pixels })
    }

    pub fn filled(width: usize, height: usize, value: f32) -> GrayImage {
        GrayImage {
            width,
            height,
            pixels: alloc::vec![value; width * height],
        }
    }

    pub fn from_f64(width: usize, height: usize, values: &[f64]) -> Option<GrayImage> {
        GrayImage::new(width, height, values.iter().map(|&v| v as f32).collect())
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.pixels[y * self.width + x]
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.pixels.iter().map(|&v| f64::from(v)).collect()
    }
}

/// One pass of a 3×3 mean filter with replicated borders.
pub fn box_blur(values: &[f64], width: usize, height: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len());
    for y in 0..height {
        for x in 0..width {
            let mut acc = 0.0;
            for dy in [-1isize, 0, 1] {
                for dx in [-1isize, 0, 1] {
                    let sx = (x as isize + dx).clamp(0, width as isize - 1) as usize;
                    let sy = (y as isize + dy).clamp(0, height as isize - 1) as usize;
                    acc += values[sy * width + sx];
                }
            }
            out.push(acc / 9.0);
        }
    }
    out
}
