//! Tiled procedural textures baked to a raster in plane coordinates (meters).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{input, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TextureSpec {
    /// Multi-octave value noise; the coarsest lattice spacing is `cell` m and
    /// each further octave halves it with half the amplitude.
    ValueNoise {
        seed: u64,
        octaves: u32,
        contrast: f64,
        #[serde(default = "default_cell")]
        cell: f64,
    },
    /// Checkerboard with squares of side `square` m.
    Checker { square: f64, contrast: f64 },
}

fn default_cell() -> f64 {
    0.08
}

impl Default for TextureSpec {
    fn default() -> Self {
        TextureSpec::ValueNoise {
            seed: 7,
            octaves: 4,
            contrast: 0.8,
            cell: default_cell(),
        }
    }
}

impl TextureSpec {
    pub fn validate(&self) -> Result<()> {
        let (contrast, scale) = match *self {
            TextureSpec::ValueNoise {
                octaves, contrast, cell, ..
            } => {
                if octaves == 0 || octaves > 8 {
                    return input(format!("texture octaves must be in 1..=8, got {octaves}"));
                }
                (contrast, cell)
            }
            TextureSpec::Checker { square, contrast } => (contrast, square),
        };
        if !(contrast > 0.0 && contrast <= 1.0) {
            return input(format!("texture contrast must be in (0, 1], got {contrast}"));
        }
        if !(scale > 0.0 && scale.is_finite()) {
            return input(format!("texture scale must be positive, got {scale}"));
        }
        Ok(())
    }
}

/// Square power-of-two raster tiled over the plane.
#[derive(Clone, Debug)]
pub struct Texture {
    size: usize,
    texel: f64,
    data: Vec<f32>,
}

fn fade(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

impl Texture {
    pub const SIZE: usize = 2048;
    pub const TEXEL: f64 = 0.0025;

    pub fn bake(spec: &TextureSpec) -> Result<Texture> {
        spec.validate()?;
        let n = Self::SIZE;
        let texel = Self::TEXEL;
        let mut data = vec![0.0f32; n * n];
        match *spec {
            TextureSpec::ValueNoise {
                seed,
                octaves,
                contrast,
                cell,
            } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut acc = vec![0.0f64; n * n];
                let mut amp = 1.0;
                let mut total = 0.0;
                let tile = n as f64 * texel;
                for o in 0..octaves {
                    // lattice count per tile, so the octave tiles seamlessly
                    let cells = ((tile / (cell / (1u32 << o) as f64)).round() as usize).max(1);
                    let lattice: Vec<f64> = (0..cells * cells).map(|_| rng.random::<f64>()).collect();
                    let per = cells as f64 / n as f64;
                    for j in 0..n {
                        let gy = j as f64 * per;
                        let (iy, fy) = (gy.floor() as usize % cells, fade(gy.fract()));
                        let iy1 = (iy + 1) % cells;
                        for i in 0..n {
                            let gx = i as f64 * per;
                            let (ix, fx) = (gx.floor() as usize % cells, fade(gx.fract()));
                            let ix1 = (ix + 1) % cells;
                            let v00 = lattice[iy * cells + ix];
                            let v10 = lattice[iy * cells + ix1];
                            let v01 = lattice[iy1 * cells + ix];
                            let v11 = lattice[iy1 * cells + ix1];
                            let top = v00 + fx * (v10 - v00);
                            let bot = v01 + fx * (v11 - v01);
                            acc[j * n + i] += amp * (top + fy * (bot - top));
                        }
                    }
                    total += amp;
                    amp *= 0.5;
                }
                // stretch to the full range before applying contrast
                let (lo, hi) = acc
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
                let span = (hi - lo).max(1e-12 * total);
                for (d, a) in data.iter_mut().zip(&acc) {
                    *d = (0.5 + contrast * ((a - lo) / span - 0.5)) as f32;
                }
            }
            TextureSpec::Checker { square, contrast } => {
                for j in 0..n {
                    for i in 0..n {
                        let cx = ((i as f64 + 0.5) * texel / square).floor() as i64;
                        let cy = ((j as f64 + 0.5) * texel / square).floor() as i64;
                        let on = (cx + cy).rem_euclid(2) == 0;
                        data[j * n + i] = (0.5 + if on { 0.5 } else { -0.5 } * contrast) as f32;
                    }
                }
            }
        }
        Ok(Texture { size: n, texel, data })
    }

    /// Bilinear, wrapping lookup at plane coordinates in meters.
    #[inline]
    pub fn sample(&self, s: f64, t: f64) -> f32 {
        let mask = self.size - 1;
        let u = s / self.texel;
        let v = t / self.texel;
        let (u0, v0) = (u.floor(), v.floor());
        let (fu, fv) = ((u - u0) as f32, (v - v0) as f32);
        let i0 = (u0 as i64 as usize) & mask;
        let j0 = (v0 as i64 as usize) & mask;
        let i1 = (i0 + 1) & mask;
        let j1 = (j0 + 1) & mask;
        let r0 = j0 * self.size;
        let r1 = j1 * self.size;
        let top = self.data[r0 + i0] + fu * (self.data[r0 + i1] - self.data[r0 + i0]);
        let bot = self.data[r1 + i0] + fu * (self.data[r1 + i1] - self.data[r1 + i0]);
        top + fv * (bot - top)
    }

    pub fn range(&self) -> (f32, f32) {
        self.data
            .iter()
            .fold((f32::INFINITY, f32::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noise_is_bounded_and_seeded() {
        let spec = TextureSpec::ValueNoise {
            seed: 3,
            octaves: 3,
            contrast: 0.6,
            cell: 0.1,
        };
        let a = Texture::bake(&spec).unwrap();
        let (lo, hi) = a.range();
        assert!(lo >= 0.0 && hi <= 1.0);
        assert!((hi - lo - 0.6).abs() < 1e-4);
        let b = Texture::bake(&spec).unwrap();
        assert_eq!(a.sample(0.123, -4.56), b.sample(0.123, -4.56));
        let tile = Texture::SIZE as f64 * Texture::TEXEL;
        assert!((a.sample(0.3, 0.7) - a.sample(0.3 + tile, 0.7 - tile)).abs() < 1e-6);
    }

    #[test]
    fn checker_and_validation() {
        let t = Texture::bake(&TextureSpec::Checker {
            square: 0.05,
            contrast: 1.0,
        })
        .unwrap();
        assert_eq!(t.range(), (0.0, 1.0));
        assert!(TextureSpec::Checker {
            square: 0.05,
            contrast: 0.0
        }
        .validate()
        .is_err());
        assert!(TextureSpec::ValueNoise {
            seed: 0,
            octaves: 0,
            contrast: 0.5,
            cell: 0.1
        }
        .validate()
        .is_err());
    }
}
