//! Image preprocessing and augmentation on `[channels, height, width]` tensors.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::tensor::Tensor;
use crate::{Error, Result};

fn dims(img: &Tensor) -> Result<(usize, usize, usize)> {
    match *img.shape() {
        [c, h, w] => Ok((c, h, w)),
        _ => Err(Error::Shape {
            context: "image",
            expected: vec![0, 0, 0],
            found: img.shape().to_vec(),
        }),
    }
}

/// Bilinear resize with half-pixel centres and edge clamping.
pub fn resize_bilinear(img: &Tensor, out_h: usize, out_w: usize) -> Result<Tensor> {
    let (c, h, w) = dims(img)?;
    if out_h == 0 || out_w == 0 {
        return Err(Error::invalid("resize target must be positive"));
    }
    if (h, w) == (out_h, out_w) {
        return Ok(img.clone());
    }
    let src = img.data();
    let sy = h as f64 / out_h as f64;
    let sx = w as f64 / out_w as f64;
    let mut out = Vec::with_capacity(c * out_h * out_w);
    for ch in 0..c {
        let plane = &src[ch * h * w..(ch + 1) * h * w];
        for oy in 0..out_h {
            let fy = ((oy as f64 + 0.5) * sy - 0.5).clamp(0.0, (h - 1) as f64);
            let y0 = fy as usize;
            let y1 = (y0 + 1).min(h - 1);
            let ty = fy - y0 as f64;
            for ox in 0..out_w {
                let fx = ((ox as f64 + 0.5) * sx - 0.5).clamp(0.0, (w - 1) as f64);
                let x0 = fx as usize;
                let x1 = (x0 + 1).min(w - 1);
                let tx = fx - x0 as f64;
                let top = plane[y0 * w + x0] * (1.0 - tx) + plane[y0 * w + x1] * tx;
                let bottom = plane[y1 * w + x0] * (1.0 - tx) + plane[y1 * w + x1] * tx;
                out.push(top * (1.0 - ty) + bottom * ty);
            }
        }
    }
    Ok(Tensor::from_parts(vec![c, out_h, out_w], out))
}

pub fn crop(img: &Tensor, top: usize, left: usize, height: usize, width: usize) -> Result<Tensor> {
    let (c, h, w) = dims(img)?;
    if height == 0 || width == 0 || top + height > h || left + width > w {
        return Err(Error::invalid("crop window outside the image"));
    }
    let src = img.data();
    let mut out = Vec::with_capacity(c * height * width);
    for ch in 0..c {
        for y in top..top + height {
            let row = (ch * h + y) * w;
            out.extend_from_slice(&src[row + left..row + left + width]);
        }
    }
    Ok(Tensor::from_parts(vec![c, height, width], out))
}

pub fn flip_horizontal(img: &Tensor) -> Result<Tensor> {
    let (_, _, w) = dims(img)?;
    let mut out = img.data().to_vec();
    for row in out.chunks_mut(w) {
        row.reverse();
    }
    Ok(Tensor::from_parts(img.shape().to_vec(), out))
}

/// Crop-and-resize, horizontal flip and additive Gaussian noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Augmentation {
    /// Range of the crop side as a fraction of the image side.
    pub crop_fraction: (f64, f64),
    pub flip_probability: f64,
    pub noise_sigma: f64,
}

impl Default for Augmentation {
    fn default() -> Self {
        Augmentation {
            crop_fraction: (0.7, 1.0),
            flip_probability: 0.5,
            noise_sigma: 0.05,
        }
    }
}

impl Augmentation {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.crop_fraction;
        if !(0.0 < lo && lo <= hi && hi <= 1.0) {
            return Err(Error::invalid("crop fraction range must satisfy 0 < lo <= hi <= 1"));
        }
        if !(0.0..=1.0).contains(&self.flip_probability) || !(self.noise_sigma >= 0.0) {
            return Err(Error::invalid("flip probability in [0,1] and noise sigma >= 0 required"));
        }
        Ok(())
    }

    /// One random view of `img`, same shape as the input.
    pub fn apply(&self, rng: &mut impl Rng, img: &Tensor) -> Result<Tensor> {
        let (_, h, w) = dims(img)?;
        let (lo, hi) = self.crop_fraction;
        let frac = if hi > lo { rng.random_range(lo..=hi) } else { lo };
        let ch = ((h as f64 * frac) as usize).clamp(1, h);
        let cw = ((w as f64 * frac) as usize).clamp(1, w);
        let top = rng.random_range(0..=h - ch);
        let left = rng.random_range(0..=w - cw);
        let mut view = resize_bilinear(&crop(img, top, left, ch, cw)?, h, w)?;
        if rng.random_bool(self.flip_probability) {
            view = flip_horizontal(&view)?;
        }
        if self.noise_sigma > 0.0 {
            let normal = Normal::new(0.0, self.noise_sigma).map_err(|_| Error::invalid("noise sigma"))?;
            for v in view.data_mut() {
                *v += normal.sample(rng);
            }
        }
        Ok(view)
    }
}
