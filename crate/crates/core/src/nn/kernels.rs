//! Inner loops shared by the convolution layers. Every reduction runs in a
//! fixed order so results are bit-reproducible.

/// Output positions `t` for which `t * stride + tap - pad` lands inside `[0, input_len)`.
#[inline]
pub fn valid_range(out_len: usize, input_len: usize, tap: usize, stride: usize, pad: usize) -> (usize, usize) {
    let lo = if pad > tap { (pad - tap).div_ceil(stride) } else { 0 };
    let limit = input_len + pad;
    let hi = if limit > tap {
        ((limit - tap - 1) / stride + 1).min(out_len)
    } else {
        0
    };
    (lo, hi.max(lo))
}

/// `out[t] += w * input[t * stride + tap - pad]` over the valid range.
#[inline]
pub fn gather_axpy(out: &mut [f64], input: &[f64], w: f64, tap: usize, stride: usize, pad: usize) {
    let (lo, hi) = valid_range(out.len(), input.len(), tap, stride, pad);
    if lo >= hi {
        return;
    }
    let off = lo * stride + tap - pad;
    if stride == 1 {
        let src = &input[off..off + (hi - lo)];
        for (o, x) in out[lo..hi].iter_mut().zip(src) {
            *o += w * x;
        }
    } else {
        for (k, o) in out[lo..hi].iter_mut().enumerate() {
            *o += w * input[off + k * stride];
        }
    }
}

/// `dst[t * stride + tap - pad] += w * src[t]` over the valid range.
#[inline]
pub fn scatter_axpy(dst: &mut [f64], src: &[f64], w: f64, tap: usize, stride: usize, pad: usize) {
    let (lo, hi) = valid_range(src.len(), dst.len(), tap, stride, pad);
    if lo >= hi {
        return;
    }
    let off = lo * stride + tap - pad;
    if stride == 1 {
        let d = &mut dst[off..off + (hi - lo)];
        for (o, x) in d.iter_mut().zip(&src[lo..hi]) {
            *o += w * x;
        }
    } else {
        for (k, x) in src[lo..hi].iter().enumerate() {
            dst[off + k * stride] += w * x;
        }
    }
}

/// `sum_t a[t] * b[t * stride + tap - pad]` over the valid range.
#[inline]
pub fn gather_dot(a: &[f64], b: &[f64], tap: usize, stride: usize, pad: usize) -> f64 {
    let (lo, hi) = valid_range(a.len(), b.len(), tap, stride, pad);
    if lo >= hi {
        return 0.0;
    }
    let off = lo * stride + tap - pad;
    if stride == 1 {
        dot(&a[lo..hi], &b[off..off + (hi - lo)])
    } else {
        a[lo..hi].iter().enumerate().map(|(k, x)| x * b[off + k * stride]).sum()
    }
}

/// Dot product with four interleaved accumulators.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
pub fn axpy(out: &mut [f64], x: &[f64], w: f64) {
    for (o, v) in out.iter_mut().zip(x) {
        *o += w * v;
    }
}
