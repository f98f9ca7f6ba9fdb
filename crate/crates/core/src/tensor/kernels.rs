//! Raw numeric kernels on flat buffers.

/// `c = a·b` (or `c += a·b` when `accumulate`), `a` logically `m×k`, `b`
/// logically `k×n`, `c` row-major `m×n`.
///
/// `a_trans` means `a` is stored row-major as `k×m`; `b_trans` means `b` is
/// stored row-major as `n×k`.
#[allow(clippy::too_many_arguments)]
pub fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_trans: bool,
    b: &[f64],
    b_trans: bool,
    c: &mut [f64],
    accumulate: bool,
) {
    assert!(a.len() >= m * k, "gemm: lhs buffer too short");
    assert!(b.len() >= k * n, "gemm: rhs buffer too short");
    assert!(c.len() >= m * n, "gemm: output buffer too short");
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        if !accumulate {
            c[..m * n].iter_mut().for_each(|v| *v = 0.0);
        }
        return;
    }
    let (rsa, csa) = if a_trans { (1, m) } else { (k, 1) };
    let (rsb, csb) = if b_trans { (1, k) } else { (n, 1) };
    let beta = if accumulate { 1.0 } else { 0.0 };
    // SAFETY: the asserts above guarantee every strided access stays within
    // the slices: max index of a is (m-1)*rsa + (k-1)*csa < m*k, likewise b, c.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}
/// Range of source offsets along one axis: `start, start+1, .., start+len-1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct Window {
    pub start: isize,
    pub len: usize,
}

impl Window {
    pub fn same(k: usize) -> Self {
        Window {
            start: -((k / 2) as isize),
            len: k,
        }
    }
}

/// Unfolds one `channels×h×w` image into a `(channels·wy.len·wx.len)×(h·w)`
/// matrix; row `(c, iy, ix)` holds the plane shifted by
/// `(wy.start+iy, wx.start+ix)` with zeros outside.
pub(crate) fn im2col_window(x: &[f64], channels: usize, h: usize, w: usize, wy: Window, wx: Window, col: &mut [f64]) {
    let hw = h * w;
    for c in 0..channels {
        let plane = &x[c * hw..(c + 1) * hw];
        for iy in 0..wy.len {
            for ix in 0..wx.len {
                let row = (c * wy.len + iy) * wx.len + ix;
                let dst = &mut col[row * hw..(row + 1) * hw];
                let dy = wy.start + iy as isize;
                let dx = wx.start + ix as isize;
                for y in 0..h {
                    let sy = y as isize + dy;
                    let out = &mut dst[y * w..(y + 1) * w];
                    if sy < 0 || sy >= h as isize {
                        out.iter_mut().for_each(|v| *v = 0.0);
                        continue;
                    }
                    let src = &plane[sy as usize * w..(sy as usize + 1) * w];
                    for (x_, o) in out.iter_mut().enumerate() {
                        let sx = x_ as isize + dx;
                        *o = if sx < 0 || sx >= w as isize {
                            0.0
                        } else {
                            src[sx as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col_window`]: scatter-adds `col` back into `dx`.
pub(crate) fn col2im_window(col: &[f64], channels: usize, h: usize, w: usize, wy: Window, wx: Window, dx: &mut [f64]) {
    let hw = h * w;
    for c in 0..channels {
        let plane = &mut dx[c * hw..(c + 1) * hw];
        for iy in 0..wy.len {
            for ix in 0..wx.len {
                let row = (c * wy.len + iy) * wx.len + ix;
                let src = &col[row * hw..(row + 1) * hw];
                let dy = wy.start + iy as isize;
                let dxo = wx.start + ix as isize;
                for y in 0..h {
                    let sy = y as isize + dy;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let dst = &mut plane[sy as usize * w..(sy as usize + 1) * w];
                    for x_ in 0..w {
                        let sx = x_ as isize + dxo;
                        if sx >= 0 && sx < w as isize {
                            dst[sx as usize] += src[y * w + x_];
                        }
                    }
                }
            }
        }
    }
}

/// Unfolds one `channels×h×w` image into a `(channels·k·k)×(h·w)` matrix for
/// a stride-1 convolution with zero padding `k/2`.
pub(crate) fn im2col(x: &[f64], channels: usize, h: usize, w: usize, k: usize, col: &mut [f64]) {
    im2col_window(x, channels, h, w, Window::same(k), Window::same(k), col);
}

/// Adjoint of [`im2col`].
pub(crate) fn col2im(col: &[f64], channels: usize, h: usize, w: usize, k: usize, dx: &mut [f64]) {
    col2im_window(col, channels, h, w, Window::same(k), Window::same(k), dx);
}

/// One output phase of a nearest ×2 upsampling followed by a same `k×k`
/// convolution. Output row `2i+p` reads upsampled rows `2i+p+t-k/2`, which
/// are source rows `i + floor((p+t-k/2)/2)`; `tap[t]` is that offset
/// relative to `window.start`.
pub(crate) struct UpPhase {
    pub window: Window,
    pub tap: Vec<usize>,
}

impl UpPhase {
    pub fn new(p: usize, k: usize) -> Self {
        let pad = (k / 2) as isize;
        let off: Vec<isize> = (0..k).map(|t| (p as isize + t as isize - pad).div_euclid(2)).collect();
        let start = off[0];
        let len = (off[k - 1] - start) as usize + 1;
        UpPhase {
            window: Window { start, len },
            tap: off.iter().map(|o| (o - start) as usize).collect(),
        }
    }
}

/// Sums the `k×k` taps of `w` (`c_out×c_in×k×k`) that land on the same
/// source pixel for phase `(py, px)`: a `c_out×(c_in·ny·nx)` matrix.
pub(crate) fn fold_taps(w: &[f64], c_out: usize, c_in: usize, k: usize, py: &UpPhase, px: &UpPhase) -> Vec<f64> {
    let (ny, nx) = (py.window.len, px.window.len);
    let mut out = vec![0.0; c_out * c_in * ny * nx];
    for oc in 0..c_out * c_in {
        let src = &w[oc * k * k..(oc + 1) * k * k];
        let dst = &mut out[oc * ny * nx..(oc + 1) * ny * nx];
        for ty in 0..k {
            for tx in 0..k {
                dst[py.tap[ty] * nx + px.tap[tx]] += src[ty * k + tx];
            }
        }
    }
    out
}

/// Adjoint of [`fold_taps`]: adds the folded gradient back to every tap.
pub(crate) fn unfold_taps(g: &[f64], c_out: usize, c_in: usize, k: usize, py: &UpPhase, px: &UpPhase, gw: &mut [f64]) {
    let (ny, nx) = (py.window.len, px.window.len);
    for oc in 0..c_out * c_in {
        let src = &g[oc * ny * nx..(oc + 1) * ny * nx];
        let dst = &mut gw[oc * k * k..(oc + 1) * k * k];
        for ty in 0..k {
            for tx in 0..k {
                dst[ty * k + tx] += src[py.tap[ty] * nx + px.tap[tx]];
            }
        }
    }
}
/// Nearest-neighbour ×2 upsampling of `planes` stacked `h×w` planes.
pub(crate) fn upsample2(x: &[f64], planes: usize, h: usize, w: usize) -> Vec<f64> {
    let (oh, ow) = (2 * h, 2 * w);
    let mut out = vec![0.0; planes * oh * ow];
    for p in 0..planes {
        let src = &x[p * h * w..(p + 1) * h * w];
        let dst = &mut out[p * oh * ow..(p + 1) * oh * ow];
        for y in 0..oh {
            let srow = &src[(y / 2) * w..(y / 2 + 1) * w];
            let drow = &mut dst[y * ow..(y + 1) * ow];
            for (x_, d) in drow.iter_mut().enumerate() {
                *d = srow[x_ / 2];
            }
        }
    }
    out
}

/// Adjoint of [`upsample2`]: sums each 2×2 block of `g`.
pub(crate) fn upsample2_adjoint(g: &[f64], planes: usize, h: usize, w: usize, dx: &mut [f64]) {
    let (oh, ow) = (2 * h, 2 * w);
    for p in 0..planes {
        let src = &g[p * oh * ow..(p + 1) * oh * ow];
        let dst = &mut dx[p * h * w..(p + 1) * h * w];
        for y in 0..oh {
            for x_ in 0..ow {
                dst[(y / 2) * w + x_ / 2] += src[y * ow + x_];
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(m: usize, k: usize, n: usize, a: &[f64], b: &[f64]) -> Vec<f64> {
        let mut c = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                for p in 0..k {
                    c[i * n + j] += a[i * k + p] * b[p * n + j];
                }
            }
        }
        c
    }

    #[test]
    fn gemm_transposes() {
        let (m, k, n) = (3, 4, 2);
        let a: Vec<f64> = (0..m * k).map(|v| v as f64 * 0.5 - 1.0).collect();
        let b: Vec<f64> = (0..k * n).map(|v| (v as f64).sin()).collect();
        let want = naive(m, k, n, &a, &b);
        let mut c = vec![0.0; m * n];
        gemm(m, k, n, &a, false, &b, false, &mut c, false);
        assert_eq!(c, want);

        let mut at = vec![0.0; m * k];
        for i in 0..m {
            for p in 0..k {
                at[p * m + i] = a[i * k + p];
            }
        }
        let mut bt = vec![0.0; k * n];
        for p in 0..k {
            for j in 0..n {
                bt[j * k + p] = b[p * n + j];
            }
        }
        let mut c2 = vec![1.0; m * n];
        gemm(m, k, n, &at, true, &bt, true, &mut c2, true);
        for (x, y) in c2.iter().zip(&want) {
            assert!((x - (y + 1.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn im2col_col2im_are_adjoint() {
        let (c, h, w, k) = (2, 4, 5, 3);
        let x: Vec<f64> = (0..c * h * w).map(|v| (v as f64 * 0.37).cos()).collect();
        let y: Vec<f64> = (0..c * k * k * h * w).map(|v| (v as f64 * 0.11).sin()).collect();
        let mut col = vec![0.0; c * k * k * h * w];
        im2col(&x, c, h, w, k, &mut col);
        let mut back = vec![0.0; c * h * w];
        col2im(&y, c, h, w, k, &mut back);
        let lhs: f64 = col.iter().zip(&y).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(&back).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10);
    }
}
