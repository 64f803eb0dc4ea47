//! Single-sample 3D convolution over `[channel][z][y][x]` buffers, lowered
//! to a matrix product on an unfolded (im2col) input.

#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvGeom {
    pub cin: usize,
    pub cout: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub n_in: usize,
    pub n_out: usize,
}

impl ConvGeom {
    fn k3(&self) -> usize {
        self.k * self.k * self.k
    }

    fn out_len(&self) -> usize {
        self.n_out * self.n_out * self.n_out
    }

    /// Rows of the unfolded input.
    fn taps(&self) -> usize {
        self.cin * self.k3()
    }

    /// Input coordinate read by output `o` at kernel offset `off`, if inside.
    #[inline]
    fn tap(&self, o: usize, off: usize) -> Option<usize> {
        (o * self.stride + off).checked_sub(self.pad).filter(|&i| i < self.n_in)
    }

    /// Visits every `(row, column, input index)` of the unfolded matrix that
    /// reads a real (non-padding) voxel.
    #[inline]
    fn for_each_tap(&self, mut f: impl FnMut(usize, usize, usize)) {
        let (n, m, k) = (self.n_in, self.n_out, self.k);
        let p = self.out_len();
        for ci in 0..self.cin {
            for kz in 0..k {
                for ky in 0..k {
                    for kx in 0..k {
                        let row = ((ci * k + kz) * k + ky) * k + kx;
                        for oz in 0..m {
                            let Some(iz) = self.tap(oz, kz) else { continue };
                            for oy in 0..m {
                                let Some(iy) = self.tap(oy, ky) else { continue };
                                let base = ((ci * n + iz) * n + iy) * n;
                                for ox in 0..m {
                                    if let Some(ix) = self.tap(ox, kx) {
                                        f(row * p + (oz * m + oy) * m + ox, row, base + ix);
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    fn im2col(&self, input: &[f64]) -> Vec<f64> {
        let mut col = vec![0.0; self.taps() * self.out_len()];
        self.for_each_tap(|c, _, i| col[c] = input[i]);
        col
    }
}

/// `c (m x n) = alpha * a (m x k) * b (k x n) + beta * c`, with explicit
/// row/column strides for the two inputs.
#[allow(clippy::too_many_arguments)]
fn gemm(m: usize, k: usize, n: usize, a: &[f64], a_t: bool, b: &[f64], b_t: bool, beta: f64, c: &mut [f64]) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the asserted lengths cover every element addressed by the
    // given shapes and strides, and `c` does not alias `a` or `b`.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// `output = bias + weight * input` for one sample.
pub(crate) fn forward(g: &ConvGeom, weight: &[f64], bias: &[f64], input: &[f64], output: &mut [f64]) {
    let p = g.out_len();
    for (co, out_c) in output.chunks_exact_mut(p).enumerate() {
        out_c.fill(bias[co]);
    }
    let col = g.im2col(input);
    gemm(g.cout, g.taps(), p, weight, false, &col, false, 1.0, output);
}

/// Accumulates weight and bias gradients (and optionally the input gradient)
/// for one sample.
pub(crate) fn backward(
    g: &ConvGeom,
    weight: &[f64],
    input: &[f64],
    dout: &[f64],
    dweight: &mut [f64],
    dbias: &mut [f64],
    dinput: Option<&mut [f64]>,
) {
    let p = g.out_len();
    for (db, d) in dbias.iter_mut().zip(dout.chunks_exact(p)) {
        *db += d.iter().sum::<f64>();
    }
    let col = g.im2col(input);
    // dW += dout (cout x P) * col^T (P x taps)
    gemm(g.cout, p, g.taps(), dout, false, &col, true, 1.0, dweight);
    if let Some(din) = dinput {
        // dcol = W^T (taps x cout) * dout (cout x P), folded back onto the input
        let mut dcol = vec![0.0; g.taps() * p];
        gemm(g.taps(), g.cout, p, weight, true, dout, false, 0.0, &mut dcol);
        g.for_each_tap(|c, _, i| din[i] += dcol[c]);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn geom(cin: usize, cout: usize, k: usize, stride: usize, pad: usize, n_in: usize) -> ConvGeom {
        let n_out = (n_in + 2 * pad - k) / stride + 1;
        ConvGeom {
            cin,
            cout,
            k,
            stride,
            pad,
            n_in,
            n_out,
        }
    }

    /// Zero-padded reference convolution.
    fn reference(g: &ConvGeom, w: &[f64], b: &[f64], x: &[f64]) -> Vec<f64> {
        let (n, m, k) = (g.n_in as isize, g.n_out, g.k);
        let mut out = vec![0.0; g.cout * m * m * m];
        for co in 0..g.cout {
            for oz in 0..m {
                for oy in 0..m {
                    for ox in 0..m {
                        let mut s = b[co];
                        for ci in 0..g.cin {
                            for kz in 0..k {
                                for ky in 0..k {
                                    for kx in 0..k {
                                        let iz = (oz * g.stride + kz) as isize - g.pad as isize;
                                        let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                                        if iz < 0 || iy < 0 || ix < 0 || iz >= n || iy >= n || ix >= n {
                                            continue;
                                        }
                                        let xi = ((ci as isize * n + iz) * n + iy) * n + ix;
                                        s += w[((co * g.cin + ci) * k + kz) * k * k + ky * k + kx] * x[xi as usize];
                                    }
                                }
                            }
                        }
                        out[((co * m + oz) * m + oy) * m + ox] = s;
                    }
                }
            }
        }
        out
    }

    #[test]
    fn hand_worked_2cube() {
        // 2^3 input 1..8 (x fastest), 2^3 kernel of ones except w(0,0,0) = 2, bias 0.5
        let g = geom(1, 1, 2, 1, 0, 2);
        let x: Vec<f64> = (1..=8).map(|v| v as f64).collect();
        let mut w = vec![1.0; 8];
        w[0] = 2.0;
        let mut out = vec![0.0; 1];
        forward(&g, &w, &[0.5], &x, &mut out);
        // 2*1 + (2+3+...+8) + 0.5 = 2 + 35 + 0.5
        assert_eq!(out[0], 37.5);
    }

    #[test]
    fn impulse_kernel_shifts_input() {
        let g = geom(1, 1, 3, 1, 1, 4);
        let x: Vec<f64> = (0..64).map(|v| v as f64).collect();
        let mut w = vec![0.0; 27];
        w[(2 * 3 + 1) * 3 + 1] = 1.0; // kz = 2, ky = 1, kx = 1 -> reads z + 1
        let mut out = vec![0.0; 64];
        forward(&g, &w, &[0.0], &x, &mut out);
        for z in 0..4 {
            for yx in 0..16 {
                let expect = if z < 3 { x[(z + 1) * 16 + yx] } else { 0.0 };
                assert_eq!(out[z * 16 + yx], expect);
            }
        }
    }

    #[test]
    fn matches_reference_for_all_strides() {
        let mut seed = 1u64;
        let mut rnd = move || {
            seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((seed >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        for &(cin, cout, k, s, p, n) in &[(2, 3, 3, 1, 1, 5), (2, 2, 3, 2, 1, 6), (3, 2, 3, 2, 1, 5), (2, 4, 4, 1, 0, 4), (1, 2, 1, 2, 0, 5)] {
            let g = geom(cin, cout, k, s, p, n);
            let w: Vec<f64> = (0..cout * cin * k * k * k).map(|_| rnd()).collect();
            let b: Vec<f64> = (0..cout).map(|_| rnd()).collect();
            let x: Vec<f64> = (0..cin * n * n * n).map(|_| rnd()).collect();
            let mut out = vec![0.0; cout * g.n_out.pow(3)];
            forward(&g, &w, &b, &x, &mut out);
            let r = reference(&g, &w, &b, &x);
            for (a, b) in out.iter().zip(&r) {
                assert!((a - b).abs() < 1e-12);
            }

            // backward against the adjoint identity <dout, conv(x)> linear in w and x
            let dout: Vec<f64> = (0..out.len()).map(|_| rnd()).collect();
            let mut dw = vec![0.0; w.len()];
            let mut db = vec![0.0; b.len()];
            let mut dx = vec![0.0; x.len()];
            backward(&g, &w, &x, &dout, &mut dw, &mut db, Some(&mut dx));
            let f = |w: &[f64], b: &[f64], x: &[f64]| -> f64 {
                reference(&g, w, b, x).iter().zip(&dout).map(|(a, d)| a * d).sum()
            };
            let base = f(&w, &b, &x);
            for i in 0..w.len() {
                let mut w2 = w.clone();
                w2[i] += 1.0;
                assert!((f(&w2, &b, &x) - base - dw[i]).abs() < 1e-9);
            }
            for i in 0..x.len() {
                let mut x2 = x.clone();
                x2[i] += 1.0;
                assert!((f(&w, &b, &x2) - base - dx[i]).abs() < 1e-9);
            }
            let mut b2 = b.clone();
            b2[0] += 1.0;
            assert!((f(&w, &b2, &x) - base - db[0]).abs() < 1e-9);
        }
    }
}
