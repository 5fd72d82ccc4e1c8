use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::layers::{ConvLayerParams, Network};

const SEPARATOR: u8 = 255;
const FLAT: u8 = 128;

/// An 8-bit grayscale image, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KernelGrid {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl KernelGrid {
    /// Binary PGM (P5) encoding.
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }
}

/// Tiles the kernels of a conv layer into a near-square mosaic.
///
/// Kernels with several input channels are averaged over channels. Each tile
/// is min-max normalized on its own; a constant tile is mid-gray. Tiles are
/// separated by 1-pixel white lines.
pub fn kernel_grid(params: &ConvLayerParams) -> KernelGrid {
    let (n, d, k) = (params.out_channels(), params.in_channels(), params.kernel_size());
    let cols = (1..=n).find(|c| c * c >= n).unwrap_or(1);
    let rows = n.div_ceil(cols);
    let width = cols * k + cols - 1;
    let height = rows * k + rows - 1;
    let mut pixels = vec![SEPARATOR; width * height];
    let w = params.weights().data();
    for i in 0..n {
        let kernel = &w[i * d * k * k..(i + 1) * d * k * k];
        let tile: Vec<f64> = (0..k * k)
            .map(|p| (0..d).map(|c| kernel[c * k * k + p] as f64).sum::<f64>() / d as f64)
            .collect();
        let (lo, hi) = tile.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        let (top, left) = ((i / cols) * (k + 1), (i % cols) * (k + 1));
        for y in 0..k {
            for x in 0..k {
                let v = tile[y * k + x];
                let px = if hi > lo { ((v - lo) / (hi - lo) * 255.0).round() as u8 } else { FLAT };
                pixels[(top + y) * width + left + x] = px;
            }
        }
    }
    KernelGrid { width, height, pixels }
}

/// Writes the kernels of conv layer `layer_index` as a PGM mosaic.
pub fn export_kernel_grid(model: &Network, layer_index: usize, path: &Path) -> Result<KernelGrid> {
    let layer = model.layers().get(layer_index).ok_or_else(|| Error::InvalidArgument(format!(
        "no layer {layer_index} (network has {})",
        model.layers().len()
    )))?;
    let params = layer.as_conv().ok_or_else(|| {
        Error::InvalidArgument(format!("layer {layer_index} is {}, not conv", layer.kind()))
    })?;
    let grid = kernel_grid(params);
    fs::write(path, grid.to_pgm()).map_err(Error::at(path))?;
    Ok(grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    #[test]
    fn hundred_5x5_kernels_make_59x59() {
        let w = Tensor::from_fn(&[100, 1, 5, 5], |i| ((i / 25) * 7 + i % 25) as f32).unwrap();
        let g = kernel_grid(&ConvLayerParams::new(w, Tensor::zeros(&[100]).unwrap()).unwrap());
        assert_eq!((g.width, g.height), (59, 59));
        assert_eq!(g.pixels[5], SEPARATOR);
        assert_eq!(g.pixels[0], 0);
        assert_eq!(g.pixels[4 * 59 + 4], 255);
    }

    #[test]
    fn constant_kernel_is_mid_gray() {
        let g = kernel_grid(&ConvLayerParams::new(Tensor::full(&[1, 2, 3, 3], 0.7).unwrap(), Tensor::zeros(&[1]).unwrap()).unwrap());
        assert_eq!((g.width, g.height), (3, 3));
        assert!(g.pixels.iter().all(|&p| p == FLAT));
    }

    #[test]
    fn unused_tiles_stay_blank() {
        let w = Tensor::from_fn(&[3, 1, 2, 2], |i| (i % 2) as f32).unwrap();
        let g = kernel_grid(&ConvLayerParams::new(w, Tensor::zeros(&[3]).unwrap()).unwrap());
        assert_eq!((g.width, g.height), (5, 5));
        assert_eq!(g.pixels[3 * 5 + 3], SEPARATOR);
        assert_eq!(&g.to_pgm()[..11], b"P5\n5 5\n255\n");
    }
}
