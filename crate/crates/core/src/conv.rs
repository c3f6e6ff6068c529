//! Valid (no padding) 2-D convolution and average pooling on channel-major
//! feature maps, plus the matching gradient operations.
//!
//! The forward and kernel-gradient passes iterate over nonzero input cells:
//! spike maps are mostly zero, so scattering each active input into the
//! outputs it touches beats the dense gather by the input's sparsity factor.
//! Skipping exact zeros never changes the result.

/// `out[oc][oy][ox] += sum_{ic,ky,kx} k[oc][ic][ky][kx] * input[ic][oy*s+ky][ox*s+kx]`
pub fn conv_forward(
    out: &mut [f64],
    input: &[f64],
    kernel: &[f64],
    in_ch: usize,
    in_h: usize,
    in_w: usize,
    out_ch: usize,
    k: usize,
    stride: usize,
) {
    let out_h = (in_h - k) / stride + 1;
    let out_w = (in_w - k) / stride + 1;
    debug_assert_eq!(out.len(), out_ch * out_h * out_w);
    debug_assert_eq!(input.len(), in_ch * in_h * in_w);
    if stride == 1 {
        for ic in 0..in_ch {
            for iy in 0..in_h {
                let irow = &input[(ic * in_h + iy) * in_w..(ic * in_h + iy + 1) * in_w];
                let ky_lo = (iy + 1).saturating_sub(out_h).min(k);
                let ky_hi = iy.min(k - 1);
                for (ix, &v) in irow.iter().enumerate() {
                    if v == 0.0 {
                        continue;
                    }
                    let kx_lo = (ix + 1).saturating_sub(out_w).min(k);
                    let kx_hi = ix.min(k - 1);
                    for oc in 0..out_ch {
                        for ky in ky_lo..=ky_hi {
                            let oy = iy - ky;
                            let krow = &kernel
                                [((oc * in_ch + ic) * k + ky) * k..((oc * in_ch + ic) * k + ky + 1) * k];
                            let orow =
                                &mut out[(oc * out_h + oy) * out_w..(oc * out_h + oy + 1) * out_w];
                            for kx in kx_lo..=kx_hi {
                                orow[ix - kx] += v * krow[kx];
                            }
                        }
                    }
                }
            }
        }
    } else {
        for oc in 0..out_ch {
            for oy in 0..out_h {
                for ox in 0..out_w {
                    let mut acc = 0.0;
                    for ic in 0..in_ch {
                        for ky in 0..k {
                            let iy = oy * stride + ky;
                            let ibase = (ic * in_h + iy) * in_w + ox * stride;
                            let kbase = ((oc * in_ch + ic) * k + ky) * k;
                            for kx in 0..k {
                                acc += kernel[kbase + kx] * input[ibase + kx];
                            }
                        }
                    }
                    out[(oc * out_h + oy) * out_w + ox] += acc;
                }
            }
        }
    }
}

/// Kernel gradient: `dk[oc][ic][ky][kx] += sum_{oy,ox} du[oc][oy][ox] * input[ic][oy+ky][ox+kx]`.
///
/// Stride 1 only, which is all the architecture notation produces.
pub fn conv_kernel_grad(
    dk: &mut [f64],
    du: &[f64],
    input: &[f64],
    in_ch: usize,
    in_h: usize,
    in_w: usize,
    out_ch: usize,
    k: usize,
) {
    let out_h = in_h - k + 1;
    let out_w = in_w - k + 1;
    debug_assert_eq!(du.len(), out_ch * out_h * out_w);
    for ic in 0..in_ch {
        for iy in 0..in_h {
            let irow = &input[(ic * in_h + iy) * in_w..(ic * in_h + iy + 1) * in_w];
            let ky_lo = (iy + 1).saturating_sub(out_h).min(k);
            let ky_hi = iy.min(k - 1);
            for (ix, &v) in irow.iter().enumerate() {
                if v == 0.0 {
                    continue;
                }
                let kx_lo = (ix + 1).saturating_sub(out_w).min(k);
                let kx_hi = ix.min(k - 1);
                for oc in 0..out_ch {
                    for ky in ky_lo..=ky_hi {
                        let oy = iy - ky;
                        let durow = &du[(oc * out_h + oy) * out_w..(oc * out_h + oy + 1) * out_w];
                        let dkrow = &mut dk
                            [((oc * in_ch + ic) * k + ky) * k..((oc * in_ch + ic) * k + ky + 1) * k];
                        for kx in kx_lo..=kx_hi {
                            dkrow[kx] += v * durow[ix - kx];
                        }
                    }
                }
            }
        }
    }
}

/// Input gradient (transposed convolution, stride 1):
/// `din[ic][iy][ix] += sum_{oc,ky,kx} du[oc][iy-ky][ix-kx] * k[oc][ic][ky][kx]`.
pub fn conv_input_grad(
    din: &mut [f64],
    du: &[f64],
    kernel: &[f64],
    in_ch: usize,
    in_h: usize,
    in_w: usize,
    out_ch: usize,
    k: usize,
) {
    let out_h = in_h - k + 1;
    let out_w = in_w - k + 1;
    for oc in 0..out_ch {
        for oy in 0..out_h {
            let durow = &du[(oc * out_h + oy) * out_w..(oc * out_h + oy + 1) * out_w];
            for ic in 0..in_ch {
                for ky in 0..k {
                    let iy = oy + ky;
                    let krow =
                        &kernel[((oc * in_ch + ic) * k + ky) * k..((oc * in_ch + ic) * k + ky + 1) * k];
                    let dinrow = &mut din[(ic * in_h + iy) * in_w..(ic * in_h + iy + 1) * in_w];
                    for (kx, &kv) in krow.iter().enumerate() {
                        if kv == 0.0 {
                            continue;
                        }
                        for ox in 0..out_w {
                            dinrow[ox + kx] += kv * durow[ox];
                        }
                    }
                }
            }
        }
    }
}

/// `out[c][oy][ox] = mean of the window` — fractional spikes in [0,1] for
/// binary inputs.
pub fn avgpool_forward(
    out: &mut [f64],
    input: &[f64],
    ch: usize,
    in_h: usize,
    in_w: usize,
    window: usize,
) {
    let out_h = in_h / window;
    let out_w = in_w / window;
    let inv = 1.0 / (window * window) as f64;
    for c in 0..ch {
        for oy in 0..out_h {
            for ox in 0..out_w {
                let mut acc = 0.0;
                for dy in 0..window {
                    let iy = oy * window + dy;
                    let base = (c * in_h + iy) * in_w + ox * window;
                    for dx in 0..window {
                        acc += input[base + dx];
                    }
                }
                out[(c * out_h + oy) * out_w + ox] = acc * inv;
            }
        }
    }
}

/// Adjoint of [`avgpool_forward`]: spreads each output gradient uniformly
/// over its window.
pub fn avgpool_backward(
    din: &mut [f64],
    dout: &[f64],
    ch: usize,
    in_h: usize,
    in_w: usize,
    window: usize,
) {
    let out_h = in_h / window;
    let out_w = in_w / window;
    let inv = 1.0 / (window * window) as f64;
    for c in 0..ch {
        for oy in 0..out_h {
            for ox in 0..out_w {
                let g = dout[(c * out_h + oy) * out_w + ox] * inv;
                if g == 0.0 {
                    continue;
                }
                for dy in 0..window {
                    let iy = oy * window + dy;
                    let base = (c * in_h + iy) * in_w + ox * window;
                    for dx in 0..window {
                        din[base + dx] += g;
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Textbook gather convolution used as the oracle for the sparse path.
    fn conv_naive(
        input: &[f64],
        kernel: &[f64],
        in_ch: usize,
        in_h: usize,
        in_w: usize,
        out_ch: usize,
        k: usize,
    ) -> Vec<f64> {
        let out_h = in_h - k + 1;
        let out_w = in_w - k + 1;
        let mut out = vec![0.0; out_ch * out_h * out_w];
        for oc in 0..out_ch {
            for oy in 0..out_h {
                for ox in 0..out_w {
                    let mut acc = 0.0;
                    for ic in 0..in_ch {
                        for ky in 0..k {
                            for kx in 0..k {
                                acc += kernel[((oc * in_ch + ic) * k + ky) * k + kx]
                                    * input[(ic * in_h + oy + ky) * in_w + ox + kx];
                            }
                        }
                    }
                    out[(oc * out_h + oy) * out_w + ox] = acc;
                }
            }
        }
        out
    }

    #[test]
    fn sparse_forward_matches_naive_gather() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for (in_ch, in_h, in_w, out_ch, k) in [(1, 6, 6, 2, 3), (3, 9, 7, 4, 3), (2, 5, 5, 1, 5)] {
            let input: Vec<f64> = (0..in_ch * in_h * in_w)
                .map(|_| {
                    if rng.gen_bool(0.4) {
                        rng.gen_range(0.25..1.0)
                    } else {
                        0.0
                    }
                })
                .collect();
            let kernel: Vec<f64> = (0..out_ch * in_ch * k * k)
                .map(|_| rng.gen_range(-1.0..1.0))
                .collect();
            let want = conv_naive(&input, &kernel, in_ch, in_h, in_w, out_ch, k);
            let mut got = vec![0.0; want.len()];
            conv_forward(&mut got, &input, &kernel, in_ch, in_h, in_w, out_ch, k, 1);
            for (g, w) in got.iter().zip(&want) {
                assert!((g - w).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn input_grad_is_adjoint_of_forward() {
        // <conv(x), y> == <x, conv_input_grad(y)> for random x, y
        let (in_ch, in_h, in_w, out_ch, k) = (2, 7, 6, 3, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x: Vec<f64> = (0..in_ch * in_h * in_w)
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect();
        let kernel: Vec<f64> = (0..out_ch * in_ch * k * k)
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect();
        let out_h = in_h - k + 1;
        let out_w = in_w - k + 1;
        let y: Vec<f64> = (0..out_ch * out_h * out_w)
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect();
        let mut cx = vec![0.0; y.len()];
        conv_forward(&mut cx, &x, &kernel, in_ch, in_h, in_w, out_ch, k, 1);
        let lhs: f64 = cx.iter().zip(&y).map(|(a, b)| a * b).sum();
        let mut aty = vec![0.0; x.len()];
        conv_input_grad(&mut aty, &y, &kernel, in_ch, in_h, in_w, out_ch, k);
        let rhs: f64 = x.iter().zip(&aty).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10);
    }

    #[test]
    fn kernel_grad_matches_finite_difference() {
        let (in_ch, in_h, in_w, out_ch, k) = (2, 5, 5, 2, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let x: Vec<f64> = (0..in_ch * in_h * in_w)
            .map(|_| if rng.gen_bool(0.5) { 1.0 } else { 0.0 })
            .collect();
        let mut kernel: Vec<f64> = (0..out_ch * in_ch * k * k)
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect();
        let out_h = in_h - k + 1;
        let out_w = in_w - k + 1;
        let du: Vec<f64> = (0..out_ch * out_h * out_w)
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect();
        // analytic gradient of L = <conv(x; kernel), du>
        let mut dk = vec![0.0; kernel.len()];
        conv_kernel_grad(&mut dk, &du, &x, in_ch, in_h, in_w, out_ch, k);
        let loss = |kernel: &[f64]| {
            let mut out = vec![0.0; du.len()];
            conv_forward(&mut out, &x, kernel, in_ch, in_h, in_w, out_ch, k, 1);
            out.iter().zip(&du).map(|(a, b)| a * b).sum::<f64>()
        };
        let h = 1e-6;
        for idx in [0, 5, kernel.len() / 2, kernel.len() - 1] {
            let orig = kernel[idx];
            kernel[idx] = orig + h;
            let up = loss(&kernel);
            kernel[idx] = orig - h;
            let down = loss(&kernel);
            kernel[idx] = orig;
            let fd = (up - down) / (2.0 * h);
            assert!((fd - dk[idx]).abs() < 1e-6, "idx {idx}: {fd} vs {}", dk[idx]);
        }
    }

    #[test]
    fn avgpool_round_numbers() {
        // 1 channel, 4x4, window 2
        #[rustfmt::skip]
        let input = vec![
            1.0, 1.0, 0.0, 0.0,
            1.0, 1.0, 1.0, 0.0,
            0.0, 0.0, 1.0, 1.0,
            0.0, 0.0, 1.0, 1.0,
        ];
        let mut out = vec![0.0; 4];
        avgpool_forward(&mut out, &input, 1, 4, 4, 2);
        assert_eq!(out, vec![1.0, 0.25, 0.0, 1.0]);
        // outputs stay in [0,1] for binary inputs by construction
        let mut din = vec![0.0; 16];
        avgpool_backward(&mut din, &[4.0, 0.0, 0.0, 8.0], 1, 4, 4, 2);
        assert_eq!(din[0], 1.0);
        assert_eq!(din[5], 1.0);
        assert_eq!(din[2], 0.0);
        assert_eq!(din[10], 2.0);
        assert_eq!(din[15], 2.0);
    }
}
