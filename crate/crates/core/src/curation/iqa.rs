use super::CurationError;
use crate::synth::{box_blur, GrayImage};

/// Exposure deviation index, `10·log10(EI / EI_T)`.
pub fn deviation_index(ei: f64, ei_t: f64) -> Result<f64, CurationError> {
    if !(ei > 0.0 && ei_t > 0.0) || !ei.is_finite() || !ei_t.is_finite() {
        return Err(CurationError::ExposureDomain { ei, ei_t });
    }
    Ok(10.0 * libm::log10(ei / ei_t))
}

/// Pixel-statistics quality proxies.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ImageQuality {
    /// Variance of the 4-neighbor Laplacian response.
    pub sharpness: f64,
    /// Std of the residual after one 3×3 box blur.
    pub noise_est: f64,
    /// Global intensity std.
    pub contrast: f64,
    /// Shannon entropy (bits) of a 256-bin histogram.
    pub entropy: f64,
}

/// Numeric priors handed to the grader: DI plus the image proxies.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct IqaScores {
    pub di: f64,
    pub sharpness: f64,
    pub noise_est: f64,
    pub contrast: f64,
    pub entropy: f64,
}

impl IqaScores {
    pub fn new(di: f64, image: ImageQuality) -> IqaScores {
        IqaScores {
            di,
            sharpness: image.sharpness,
            noise_est: image.noise_est,
            contrast: image.contrast,
            entropy: image.entropy,
        }
    }

    pub fn is_finite(&self) -> bool {
        [self.di, self.sharpness, self.noise_est, self.contrast, self.entropy]
            .iter()
            .all(|v| v.is_finite())
    }
}

fn population_std(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = values.clone().count();
    if n == 0 {
        return 0.0;
    }
    let mean = values.clone().sum::<f64>() / n as f64;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    libm::sqrt(var)
}

pub fn iqa_proxies(image: &GrayImage) -> ImageQuality {
    let (w, h) = (image.width(), image.height());
    let px = image.to_f64();
    if px.is_empty() {
        return ImageQuality::default();
    }
    let at = |x: isize, y: isize| {
        let cx = x.clamp(0, w as isize - 1) as usize;
        let cy = y.clamp(0, h as isize - 1) as usize;
        px[cy * w + cx]
    };
    let laplacian = (0..h as isize).flat_map(|y| {
        (0..w as isize).map(move |x| at(x - 1, y) + at(x + 1, y) + at(x, y - 1) + at(x, y + 1) - 4.0 * at(x, y))
    });
    let sharpness = {
        let s = population_std(laplacian);
        s * s
    };
    let blurred = box_blur(&px, w, h);
    let noise_est = population_std(px.iter().zip(&blurred).map(|(a, b)| a - b));
    let contrast = population_std(px.iter().copied());

    let mut hist = [0usize; 256];
    for &v in &px {
        let bin = libm::floor(v.clamp(0.0, 1.0) * 256.0) as usize;
        hist[bin.min(255)] += 1;
    }
    let n = px.len() as f64;
    let entropy = hist
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * libm::log2(p)
        })
        .sum::<f64>()
        .max(0.0);

    ImageQuality {
        sharpness,
        noise_est,
        contrast,
        entropy,
    }
}
