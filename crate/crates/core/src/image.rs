//! Grayscale frames with intensities normalized to `[0, 1]`.

use crate::error::{input, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct GrayFrame {
    width: u32,
    height: u32,
    data: Vec<f32>,
}

impl GrayFrame {
    pub fn new(width: u32, height: u32, data: Vec<f32>) -> Result<Self> {
        if data.len() != width as usize * height as usize {
            return input(format!(
                "frame buffer holds {} values, expected {}x{}",
                data.len(),
                width,
                height
            ));
        }
        Ok(GrayFrame { width, height, data })
    }

    pub fn from_u8(width: u32, height: u32, bytes: &[u8]) -> Result<Self> {
        GrayFrame::new(width, height, bytes.iter().map(|&b| b as f32 / 255.0).collect())
    }

    pub fn to_u8(&self) -> Vec<u8> {
        self.data
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect()
    }

    /// Round-trips through 8-bit storage.
    pub fn quantized(&self) -> GrayFrame {
        GrayFrame::from_u8(self.width, self.height, &self.to_u8()).expect("same dimensions")
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn pixel(&self, x: u32, y: u32) -> f32 {
        self.data[y as usize * self.width as usize + x as usize]
    }

    /// Bilinear lookup at pixel coordinates (pixel centers on integers).
    /// `None` outside `[0, w-1] x [0, h-1]`.
    #[inline]
    pub fn bilinear(&self, x: f64, y: f64) -> Option<f64> {
        let w = self.width as usize;
        let h = self.height as usize;
        if w < 2 || h < 2 || !(x >= 0.0 && y >= 0.0 && x <= (w - 1) as f64 && y <= (h - 1) as f64) {
            return None;
        }
        let x0 = (x as usize).min(w - 2);
        let y0 = (y as usize).min(h - 2);
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;
        let i = y0 * w + x0;
        let p00 = self.data[i] as f64;
        let p10 = self.data[i + 1] as f64;
        let p01 = self.data[i + w] as f64;
        let p11 = self.data[i + w + 1] as f64;
        let top = p00 + fx * (p10 - p00);
        let bottom = p01 + fx * (p11 - p01);
        Some(top + fy * (bottom - top))
    }

    /// Central-difference gradient at an interior pixel.
    pub fn gradient(&self, x: u32, y: u32) -> Option<(f64, f64)> {
        if x == 0 || y == 0 || x + 1 >= self.width || y + 1 >= self.height {
            return None;
        }
        let gx = 0.5 * (self.pixel(x + 1, y) as f64 - self.pixel(x - 1, y) as f64);
        let gy = 0.5 * (self.pixel(x, y + 1) as f64 - self.pixel(x, y - 1) as f64);
        Some((gx, gy))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp() -> GrayFrame {
        // value = 0.01 * x + 0.02 * y
        let data = (0..20)
            .flat_map(|y| (0..30).map(move |x| 0.01 * x as f32 + 0.02 * y as f32))
            .collect();
        GrayFrame::new(30, 20, data).unwrap()
    }

    #[test]
    fn bilinear_is_exact_on_ramps() {
        let f = ramp();
        let v = f.bilinear(3.25, 7.5).unwrap();
        assert!((v - (0.0325 + 0.15)).abs() < 1e-6);
        assert_eq!(f.bilinear(-0.1, 2.0), None);
        assert_eq!(f.bilinear(29.5, 2.0), None);
        assert!(f.bilinear(29.0, 19.0).is_some());
    }

    #[test]
    fn central_gradient() {
        let (gx, gy) = ramp().gradient(5, 5).unwrap();
        assert!((gx - 0.01).abs() < 1e-6 && (gy - 0.02).abs() < 1e-6);
        assert!(ramp().gradient(0, 5).is_none());
    }

    #[test]
    fn u8_round_trip_and_size_check() {
        let f = GrayFrame::from_u8(2, 1, &[0, 255]).unwrap();
        assert_eq!(f.to_u8(), vec![0, 255]);
        assert!(GrayFrame::new(2, 2, vec![0.0; 3]).is_err());
    }
}
