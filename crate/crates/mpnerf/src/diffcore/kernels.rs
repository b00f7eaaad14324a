//! Raw f32 compute kernels. Inner reductions accumulate in f64 and cast once
//! at the end, so results are deterministic and gradient checks stay tight.
//!
//! Parallel kernels split work so that every output element is produced by
//! exactly one task with a fixed reduction order; results are bit-identical
//! for any thread count.

use rayon::prelude::*;

/// Dot product with f64 accumulation, unrolled into four lanes.
pub fn dot_f64(a: &[f32], b: &[f32]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for i in 0..chunks {
        let j = i * 4;
        acc[0] += a[j] as f64 * b[j] as f64;
        acc[1] += a[j + 1] as f64 * b[j + 1] as f64;
        acc[2] += a[j + 2] as f64 * b[j + 2] as f64;
        acc[3] += a[j + 3] as f64 * b[j + 3] as f64;
    }
    for j in chunks * 4..a.len() {
        acc[0] += a[j] as f64 * b[j] as f64;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3])
}

pub fn sum_f64(a: &[f32]) -> f64 {
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for i in 0..chunks {
        let j = i * 4;
        acc[0] += a[j] as f64;
        acc[1] += a[j + 1] as f64;
        acc[2] += a[j + 2] as f64;
        acc[3] += a[j + 3] as f64;
    }
    for j in chunks * 4..a.len() {
        acc[0] += a[j] as f64;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3])
}

pub fn transpose(src: &[f32], rows: usize, cols: usize) -> Vec<f32> {
    let mut out = vec![0.0f32; src.len()];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = src[r * cols + c];
        }
    }
    out
}

/// C = A * B^T where A is [m, k] and B is [n, k]; both operands are read
/// row-contiguously. The one matmul kernel everything else is phrased in.
pub fn mm_nt(a: &[f32], m: usize, k: usize, b: &[f32], n: usize) -> Vec<f32> {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    let mut out = vec![0.0f32; m * n];
    let work = m * n * k;
    if work > 1 << 16 && rayon::current_num_threads() > 1 {
        out.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
            let ar = &a[i * k..(i + 1) * k];
            for (j, o) in row.iter_mut().enumerate() {
                *o = dot_f64(ar, &b[j * k..(j + 1) * k]) as f32;
            }
        });
    } else {
        for i in 0..m {
            let ar = &a[i * k..(i + 1) * k];
            for j in 0..n {
                out[i * n + j] = dot_f64(ar, &b[j * k..(j + 1) * k]) as f32;
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    Same,
    Valid,
}

pub fn conv_out_dims(h: usize, w: usize, kh: usize, kw: usize, pad: Padding) -> (usize, usize) {
    match pad {
        Padding::Same => (h, w),
        Padding::Valid => (h + 1 - kh, w + 1 - kw),
    }
}

/// Lay out conv patches as rows: output [oh*ow, cin*kh*kw], stride 1.
pub fn im2col(
    input: &[f32],
    cin: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    pad: Padding,
) -> Vec<f32> {
    let (oh, ow) = conv_out_dims(h, w, kh, kw, pad);
    let (py, px) = match pad {
        Padding::Same => ((kh / 2) as isize, (kw / 2) as isize),
        Padding::Valid => (0, 0),
    };
    let patch = cin * kh * kw;
    let mut cols = vec![0.0f32; oh * ow * patch];
    for oy in 0..oh {
        for ox in 0..ow {
            let row = (oy * ow + ox) * patch;
            let mut idx = row;
            for c in 0..cin {
                let plane = &input[c * h * w..(c + 1) * h * w];
                for dy in 0..kh {
                    let sy = oy as isize + dy as isize - py;
                    for dx in 0..kw {
                        let sx = ox as isize + dx as isize - px;
                        cols[idx] = if sy >= 0 && sy < h as isize && sx >= 0 && sx < w as isize {
                            plane[sy as usize * w + sx as usize]
                        } else {
                            0.0
                        };
                        idx += 1;
                    }
                }
            }
        }
    }
    cols
}

/// Scatter-add of column gradients back into the input layout.
pub fn col2im_add(
    d_cols: &[f32],
    cin: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    pad: Padding,
    d_input: &mut [f32],
) {
    let (oh, ow) = conv_out_dims(h, w, kh, kw, pad);
    let (py, px) = match pad {
        Padding::Same => ((kh / 2) as isize, (kw / 2) as isize),
        Padding::Valid => (0, 0),
    };
    let patch = cin * kh * kw;
    for oy in 0..oh {
        for ox in 0..ow {
            let row = (oy * ow + ox) * patch;
            let mut idx = row;
            for c in 0..cin {
                for dy in 0..kh {
                    let sy = oy as isize + dy as isize - py;
                    for dx in 0..kw {
                        let sx = ox as isize + dx as isize - px;
                        if sy >= 0 && sy < h as isize && sx >= 0 && sx < w as isize {
                            d_input[c * h * w + sy as usize * w + sx as usize] += d_cols[idx];
                        }
                        idx += 1;
                    }
                }
            }
        }
    }
}

/// 2x2 stride-2 max pool; dimensions of size 1 pass through. Returns the
/// pooled map and the flat input index of each chosen element (first max on
/// ties, fixed scan order).
pub fn maxpool2(input: &[f32], c: usize, h: usize, w: usize) -> (Vec<f32>, Vec<u32>, usize, usize) {
    let oh = (h / 2).max(1);
    let ow = (w / 2).max(1);
    let mut out = vec![0.0f32; c * oh * ow];
    let mut arg = vec![0u32; c * oh * ow];
    for ch in 0..c {
        let plane = &input[ch * h * w..(ch + 1) * h * w];
        for oy in 0..oh {
            for ox in 0..ow {
                let y0 = (oy * 2).min(h - 1);
                let x0 = (ox * 2).min(w - 1);
                let y1 = (y0 + 1).min(h - 1);
                let x1 = (x0 + 1).min(w - 1);
                let mut best = plane[y0 * w + x0];
                let mut best_i = y0 * w + x0;
                for &(yy, xx) in &[(y0, x1), (y1, x0), (y1, x1)] {
                    let i = yy * w + xx;
                    if plane[i] > best {
                        best = plane[i];
                        best_i = i;
                    }
                }
                out[ch * oh * ow + oy * ow + ox] = best;
                arg[ch * oh * ow + oy * ow + ox] = (ch * h * w + best_i) as u32;
            }
        }
    }
    (out, arg, oh, ow)
}

/// Nearest-neighbour 2x upsampling.
pub fn upsample2(input: &[f32], c: usize, h: usize, w: usize) -> Vec<f32> {
    let (oh, ow) = (h * 2, w * 2);
    let mut out = vec![0.0f32; c * oh * ow];
    for ch in 0..c {
        let src = &input[ch * h * w..(ch + 1) * h * w];
        let dst = &mut out[ch * oh * ow..(ch + 1) * oh * ow];
        for y in 0..oh {
            for x in 0..ow {
                dst[y * ow + x] = src[(y / 2) * w + (x / 2)];
            }
        }
    }
    out
}

/// Alpha-compositing weights shared by both rendering branches:
/// w_i = T_i * (1 - exp(-sigma_i * delta_i)), T_i = exp(-sum_{j<i} sigma_j delta_j).
/// Rows are independent rays (or pixels); columns are samples (or planes),
/// ordered near to far.
pub fn composite_weights_raw(sigmas: &[f32], deltas: &[f32], rows: usize, cols: usize) -> Vec<f32> {
    debug_assert_eq!(sigmas.len(), rows * cols);
    debug_assert_eq!(deltas.len(), rows * cols);
    let mut out = vec![0.0f32; rows * cols];
    for r in 0..rows {
        let base = r * cols;
        let mut accum = 0.0f64;
        for i in 0..cols {
            let a = sigmas[base + i] as f64 * deltas[base + i] as f64;
            let t = (-accum).exp();
            out[base + i] = (t * (1.0 - (-a).exp())) as f32;
            accum += a;
        }
    }
    out
}

/// Backward of [`composite_weights_raw`] with respect to sigmas and deltas.
pub fn composite_weights_backward(
    sigmas: &[f32],
    deltas: &[f32],
    weights: &[f32],
    upstream: &[f32],
    rows: usize,
    cols: usize,
    d_sigmas: &mut [f32],
    d_deltas: &mut [f32],
) {
    // d w_i / d a_j = -w_i for j < i, (T_i - w_i) for j == i, 0 for j > i,
    // where a_j = sigma_j * delta_j. Suffix sums give the j < i part.
    for r in 0..rows {
        let base = r * cols;
        let mut suffix = 0.0f64; // sum_{i>j} g_i w_i
        let mut accum = 0.0f64; // running optical depth, recomputed forward first
        let mut trans = vec![0.0f64; cols];
        for i in 0..cols {
            trans[i] = (-accum).exp();
            accum += sigmas[base + i] as f64 * deltas[base + i] as f64;
        }
        for j in (0..cols).rev() {
            let g = upstream[base + j] as f64;
            let w = weights[base + j] as f64;
            let da = g * (trans[j] - w) - suffix;
            d_sigmas[base + j] = (da * deltas[base + j] as f64) as f32;
            d_deltas[base + j] = (da * sigmas[base + j] as f64) as f32;
            suffix += g * w;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mm_nt_small() {
        // A = [1 2; 3 4], B rows are columns of the logical rhs.
        let a = [1.0, 2.0, 3.0, 4.0];
        let b = [1.0, 0.0, 0.0, 1.0]; // identity as B^T
        let c = mm_nt(&a, 2, 2, &b, 2);
        assert_eq!(c, vec![1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn im2col_valid_counts() {
        let input: Vec<f32> = (0..16).map(|v| v as f32).collect();
        let cols = im2col(&input, 1, 4, 4, 3, 3, Padding::Valid);
        assert_eq!(cols.len(), 2 * 2 * 9);
        // First patch is the top-left 3x3 block.
        assert_eq!(&cols[0..3], &[0.0, 1.0, 2.0]);
        assert_eq!(&cols[3..6], &[4.0, 5.0, 6.0]);
    }

    #[test]
    fn maxpool_passthrough_on_unit_dims() {
        let input = vec![3.0, 7.0];
        let (out, arg, oh, ow) = maxpool2(&input, 2, 1, 1);
        assert_eq!((oh, ow), (1, 1));
        assert_eq!(out, vec![3.0, 7.0]);
        assert_eq!(arg, vec![0, 1]);
    }

    #[test]
    fn composite_row_sums_match_total_opacity() {
        let sigmas = [0.3f32, 1.2, 0.05, 2.0];
        let deltas = [0.5f32, 0.25, 1.0, 0.125];
        let w = composite_weights_raw(&sigmas, &deltas, 1, 4);
        let total: f64 = w.iter().map(|&x| x as f64).sum();
        let optical: f64 = sigmas
            .iter()
            .zip(&deltas)
            .map(|(&s, &d)| s as f64 * d as f64)
            .sum();
        assert!((total - (1.0 - (-optical).exp())).abs() < 1e-6);
    }
}
