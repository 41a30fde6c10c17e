//! Single-sample layer kernels with hand-written backward passes.
//!
//! Feature maps are channel-major `C x H x W`. Backward functions add into
//! the supplied weight and bias gradient buffers.

use crate::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct Act<T> {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<T>,
}

impl<T: Real> Act<T> {
    pub fn zeros(c: usize, h: usize, w: usize) -> Self {
        Act {
            c,
            h,
            w,
            data: vec![T::zero(); c * h * w],
        }
    }

    pub fn from_data(c: usize, h: usize, w: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), c * h * w);
        Act { c, h, w, data }
    }

    pub fn plane(&self, c: usize) -> &[T] {
        let n = self.h * self.w;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn zeros_like(&self) -> Self {
        Act::zeros(self.c, self.h, self.w)
    }

    pub fn add_assign(&mut self, other: &Act<T>) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += *b;
        }
    }

    /// Stack single-channel or multi-channel maps of equal size.
    pub fn concat(parts: &[&Act<T>]) -> Self {
        let (h, w) = (parts[0].h, parts[0].w);
        let c = parts.iter().map(|p| p.c).sum();
        let mut data = Vec::with_capacity(c * h * w);
        for p in parts {
            assert_eq!((p.h, p.w), (h, w));
            data.extend_from_slice(&p.data);
        }
        Act { c, h, w, data }
    }
}

/// Range of output coordinates `o` for which `o + shift` lies in `0..len`.
fn valid_range(shift: isize, len: usize, out_len: usize) -> std::ops::Range<usize> {
    let lo = (-shift).max(0) as usize;
    let hi = ((len as isize - shift).max(0) as usize).min(out_len);
    lo..hi.max(lo)
}

/// Stride-one convolution with `k x k` kernels and zero padding `k / 2`.
/// Weights are `[out_c, in_c, k, k]`.
pub fn conv2d_forward<T: Real>(x: &Act<T>, w: &[T], b: &[T], out_c: usize, k: usize) -> Act<T> {
    let pad = (k / 2) as isize;
    let (h, wd) = (x.h, x.w);
    let mut y = Act::zeros(out_c, h, wd);
    for oc in 0..out_c {
        let out = &mut y.data[oc * h * wd..(oc + 1) * h * wd];
        out.iter_mut().for_each(|v| *v = b[oc]);
        for ic in 0..x.c {
            let inp = x.plane(ic);
            for ky in 0..k {
                let dy = ky as isize - pad;
                for kx in 0..k {
                    let dx = kx as isize - pad;
                    let wv = w[((oc * x.c + ic) * k + ky) * k + kx];
                    let xs = valid_range(dx, wd, wd);
                    for oy in valid_range(dy, h, h) {
                        let iy = (oy as isize + dy) as usize;
                        let orow = &mut out[oy * wd..(oy + 1) * wd];
                        let irow = &inp[iy * wd..(iy + 1) * wd];
                        for ox in xs.clone() {
                            orow[ox] += wv * irow[(ox as isize + dx) as usize];
                        }
                    }
                }
            }
        }
    }
    y
}

/// Returns the input gradient; accumulates into `dw` and `db`.
pub fn conv2d_backward<T: Real>(x: &Act<T>, w: &[T], dy: &Act<T>, k: usize, dw: &mut [T], db: &mut [T]) -> Act<T> {
    let pad = (k / 2) as isize;
    let (h, wd) = (x.h, x.w);
    let out_c = dy.c;
    let mut dx = x.zeros_like();
    for oc in 0..out_c {
        let g = dy.plane(oc);
        db[oc] += g.iter().copied().sum::<T>();
        for ic in 0..x.c {
            let inp = x.plane(ic);
            let dplane = &mut dx.data[ic * h * wd..(ic + 1) * h * wd];
            for ky in 0..k {
                let sy = ky as isize - pad;
                for kx in 0..k {
                    let sx = kx as isize - pad;
                    let wi = ((oc * x.c + ic) * k + ky) * k + kx;
                    let wv = w[wi];
                    let mut acc = T::zero();
                    let xs = valid_range(sx, wd, wd);
                    for oy in valid_range(sy, h, h) {
                        let iy = (oy as isize + sy) as usize;
                        let grow = &g[oy * wd..(oy + 1) * wd];
                        let irow = &inp[iy * wd..(iy + 1) * wd];
                        let drow = &mut dplane[iy * wd..(iy + 1) * wd];
                        for ox in xs.clone() {
                            let ix = (ox as isize + sx) as usize;
                            acc += grow[ox] * irow[ix];
                            drow[ix] += wv * grow[ox];
                        }
                    }
                    dw[wi] += acc;
                }
            }
        }
    }
    dx
}

pub const TCONV_K: usize = 4;

/// Transposed convolution, kernel 4, stride 2, padding 1: doubles both
/// spatial sides. Weights are `[in_c, out_c, 4, 4]`.
pub fn tconv_forward<T: Real>(x: &Act<T>, w: &[T], b: &[T], out_c: usize) -> Act<T> {
    let (oh, ow) = (2 * x.h, 2 * x.w);
    let mut y = Act::zeros(out_c, oh, ow);
    for oc in 0..out_c {
        y.data[oc * oh * ow..(oc + 1) * oh * ow].iter_mut().for_each(|v| *v = b[oc]);
    }
    for ic in 0..x.c {
        let inp = x.plane(ic);
        for oc in 0..out_c {
            let out = &mut y.data[oc * oh * ow..(oc + 1) * oh * ow];
            for ky in 0..TCONV_K {
                for kx in 0..TCONV_K {
                    let wv = w[((ic * out_c + oc) * TCONV_K + ky) * TCONV_K + kx];
                    for iy in 0..x.h {
                        let oy = 2 * iy as isize - 1 + ky as isize;
                        if oy < 0 || oy >= oh as isize {
                            continue;
                        }
                        let orow = &mut out[oy as usize * ow..(oy as usize + 1) * ow];
                        let irow = &inp[iy * x.w..(iy + 1) * x.w];
                        for ix in 0..x.w {
                            let ox = 2 * ix as isize - 1 + kx as isize;
                            if ox >= 0 && ox < ow as isize {
                                orow[ox as usize] += wv * irow[ix];
                            }
                        }
                    }
                }
            }
        }
    }
    y
}

pub fn tconv_backward<T: Real>(x: &Act<T>, w: &[T], dy: &Act<T>, dw: &mut [T], db: &mut [T]) -> Act<T> {
    let out_c = dy.c;
    let (oh, ow) = (dy.h, dy.w);
    for oc in 0..out_c {
        db[oc] += dy.plane(oc).iter().copied().sum::<T>();
    }
    let mut dx = x.zeros_like();
    for ic in 0..x.c {
        let inp = x.plane(ic);
        let dplane = &mut dx.data[ic * x.h * x.w..(ic + 1) * x.h * x.w];
        for oc in 0..out_c {
            let g = dy.plane(oc);
            for ky in 0..TCONV_K {
                for kx in 0..TCONV_K {
                    let wi = ((ic * out_c + oc) * TCONV_K + ky) * TCONV_K + kx;
                    let wv = w[wi];
                    let mut acc = T::zero();
                    for iy in 0..x.h {
                        let oy = 2 * iy as isize - 1 + ky as isize;
                        if oy < 0 || oy >= oh as isize {
                            continue;
                        }
                        let grow = &g[oy as usize * ow..(oy as usize + 1) * ow];
                        let irow = &inp[iy * x.w..(iy + 1) * x.w];
                        let drow = &mut dplane[iy * x.w..(iy + 1) * x.w];
                        for ix in 0..x.w {
                            let ox = 2 * ix as isize - 1 + kx as isize;
                            if ox >= 0 && ox < ow as isize {
                                let gv = grow[ox as usize];
                                acc += gv * irow[ix];
                                drow[ix] += wv * gv;
                            }
                        }
                    }
                    dw[wi] += acc;
                }
            }
        }
    }
    dx
}

pub fn relu_inplace<T: Real>(x: &mut Act<T>) {
    for v in &mut x.data {
        if *v < T::zero() {
            *v = T::zero();
        }
    }
}

/// Zero the gradient wherever the rectified output was not positive.
pub fn relu_backward_inplace<T: Real>(y: &Act<T>, dy: &mut Act<T>) {
    for (g, &v) in dy.data.iter_mut().zip(&y.data) {
        if v <= T::zero() {
            *g = T::zero();
        }
    }
}

/// 2x2 max-pool, stride 2. The returned indices point into `x.data`; the
/// first maximum in scan order wins ties.
pub fn maxpool2_forward<T: Real>(x: &Act<T>) -> (Act<T>, Vec<u32>) {
    let (oh, ow) = (x.h / 2, x.w / 2);
    let mut y = Act::zeros(x.c, oh, ow);
    let mut arg = vec![0u32; x.c * oh * ow];
    for c in 0..x.c {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = c * x.h * x.w + 2 * oy * x.w + 2 * ox;
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let i = c * x.h * x.w + (2 * oy + dy) * x.w + 2 * ox + dx;
                    if x.data[i] > x.data[best] {
                        best = i;
                    }
                }
                let o = (c * oh + oy) * ow + ox;
                y.data[o] = x.data[best];
                arg[o] = best as u32;
            }
        }
    }
    (y, arg)
}

pub fn maxpool2_backward<T: Real>(x_shape: (usize, usize, usize), arg: &[u32], dy: &Act<T>) -> Act<T> {
    let mut dx = Act::zeros(x_shape.0, x_shape.1, x_shape.2);
    for (g, &i) in dy.data.iter().zip(arg) {
        dx.data[i as usize] += *g;
    }
    dx
}
