use crate::error::{dim_err, Result};
use crate::tensor::Tensor;

/// Source coordinates this close to a grid point are snapped onto it, so that
/// quarter and half turns move pixels exactly.
const SNAP: f64 = 1e-9;

fn snap(v: f64) -> f64 {
    let r = v.round();
    if (v - r).abs() < SNAP {
        r
    } else {
        v
    }
}

/// Rotates every `k x k` slice of a `[d x k x k]` kernel counter-clockwise by
/// `angle` radians about the grid centre.
///
/// Inverse mapping with bilinear interpolation; samples falling outside the
/// grid read as zero. The same angle is used for every input channel.
pub fn rotate_kernel(kernel: &Tensor, angle: f64) -> Result<Tensor> {
    let s = kernel.shape();
    if s.len() != 3 || s[1] != s[2] {
        return dim_err(format!("rotate_kernel expects [d x k x k], got {s:?}"));
    }
    let (d, k) = (s[0], s[1]);
    let centre = (k as f64 - 1.0) / 2.0;
    let (sin, cos) = angle.sin_cos();
    let src = kernel.data();
    let mut out = vec![0.0f32; d * k * k];

    for i in 0..k {
        for j in 0..k {
            // Output pixel in a y-up frame centred on the grid.
            let x = j as f64 - centre;
            let y = centre - i as f64;
            // Rotate back by -angle to find the source location.
            let sx = x * cos + y * sin;
            let sy = -x * sin + y * cos;
            let col = snap(centre + sx);
            let row = snap(centre - sy);
            let (r0, c0) = (row.floor(), col.floor());
            let (fr, fc) = (row - r0, col - c0);
            let taps = [
                (r0, c0, (1.0 - fr) * (1.0 - fc)),
                (r0, c0 + 1.0, (1.0 - fr) * fc),
                (r0 + 1.0, c0, fr * (1.0 - fc)),
                (r0 + 1.0, c0 + 1.0, fr * fc),
            ];
            for ch in 0..d {
                let plane = &src[ch * k * k..(ch + 1) * k * k];
                let mut acc = 0.0f64;
                for &(r, c, w) in &taps {
                    if w == 0.0 || r < 0.0 || c < 0.0 || r >= k as f64 || c >= k as f64 {
                        continue;
                    }
                    acc += w * plane[r as usize * k + c as usize] as f64;
                }
                out[ch * k * k + i * k + j] = acc as f32;
            }
        }
    }
    Tensor::new(s, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn delta(k: usize, r: usize, c: usize) -> Tensor {
        let mut t = Tensor::zeros(&[1, k, k]).unwrap();
        t.set(&[0, r, c], 1.0).unwrap();
        t
    }

    #[test]
    fn zero_angle_is_identity() {
        let t = Tensor::from_fn(&[2, 5, 5], |i| (i as f32 * 0.37).sin()).unwrap();
        assert_eq!(rotate_kernel(&t, 0.0).unwrap(), t);
    }

    #[test]
    fn quarter_turn_moves_top_middle_to_middle_left() {
        let out = rotate_kernel(&delta(3, 0, 1), FRAC_PI_2).unwrap();
        assert_eq!(out, delta(3, 1, 0));
    }

    #[test]
    fn half_turn_twice_is_identity_for_smooth_kernel() {
        let t = Tensor::from_fn(&[1, 5, 5], |i| {
            let (r, c) = ((i / 5) as f32, (i % 5) as f32);
            (-(r - 1.5).powi(2) / 4.0 - (c - 2.5).powi(2) / 6.0).exp()
        })
        .unwrap();
        let twice = rotate_kernel(&rotate_kernel(&t, PI).unwrap(), PI).unwrap();
        assert!(twice.max_abs_diff(&t).unwrap() < 1e-3);
    }

    #[test]
    fn centre_pixel_is_fixed() {
        let out = rotate_kernel(&delta(5, 2, 2), 0.7).unwrap();
        assert_eq!(out.get(&[0, 2, 2]).unwrap(), 1.0);
    }
}
