//! Fixed-order 8-lane reductions. Every lane accumulates the same terms in the
//! same order on every target, and lanes combine through a fixed tree, so the
//! vectorized builds return exactly what the portable one does.

const LANES: usize = 8;

#[inline(always)]
fn dot_generic(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; LANES];
    let body = n - n % LANES;
    for (x, y) in a[..body]
        .chunks_exact(LANES)
        .zip(b[..body].chunks_exact(LANES))
    {
        for l in 0..LANES {
            acc[l] += x[l] * y[l];
        }
    }
    for (l, (x, y)) in a[body..].iter().zip(&b[body..]).enumerate() {
        acc[l] += x * y;
    }
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]))
}

#[inline(always)]
fn convolve_generic(kernel: &[f64], x: &[f64], out: &mut [f64]) {
    let k = kernel.len();
    for (t, o) in out.iter_mut().enumerate() {
        *o = dot_generic(kernel, &x[t..t + k]);
    }
}

#[inline(always)]
fn lagged_generic(x: &[f64], max_lag: usize, out: &mut [f64]) {
    for (j, o) in out.iter_mut().enumerate().take(max_lag + 1) {
        *o = dot_generic(&x[..x.len() - j], &x[j..]);
    }
}

#[cfg(target_arch = "x86_64")]
mod x86 {
    #[target_feature(enable = "avx512f")]
    pub unsafe fn dot_avx512(a: &[f64], b: &[f64]) -> f64 {
        super::dot_generic(a, b)
    }

    #[target_feature(enable = "avx2")]
    pub unsafe fn dot_avx2(a: &[f64], b: &[f64]) -> f64 {
        super::dot_generic(a, b)
    }

    #[target_feature(enable = "avx512f")]
    pub unsafe fn convolve_avx512(kernel: &[f64], x: &[f64], out: &mut [f64]) {
        super::convolve_generic(kernel, x, out)
    }

    #[target_feature(enable = "avx2")]
    pub unsafe fn convolve_avx2(kernel: &[f64], x: &[f64], out: &mut [f64]) {
        super::convolve_generic(kernel, x, out)
    }

    #[target_feature(enable = "avx512f")]
    pub unsafe fn lagged_avx512(x: &[f64], max_lag: usize, out: &mut [f64]) {
        super::lagged_generic(x, max_lag, out)
    }

    #[target_feature(enable = "avx2")]
    pub unsafe fn lagged_avx2(x: &[f64], max_lag: usize, out: &mut [f64]) {
        super::lagged_generic(x, max_lag, out)
    }
}

/// `Σ a_i b_i` over the common prefix.
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    #[cfg(target_arch = "x86_64")]
    {
        if std::arch::is_x86_feature_detected!("avx512f") {
            // SAFETY: the feature was detected at runtime.
            return unsafe { x86::dot_avx512(a, b) };
        }
        if std::arch::is_x86_feature_detected!("avx2") {
            // SAFETY: the feature was detected at runtime.
            return unsafe { x86::dot_avx2(a, b) };
        }
    }
    dot_generic(a, b)
}

/// `out[t] = Σ_k kernel[k] x[t + k]`; `x` must hold `out.len() + kernel.len() − 1` values.
pub(crate) fn convolve(kernel: &[f64], x: &[f64], out: &mut [f64]) {
    assert!(x.len() + 1 >= out.len() + kernel.len());
    #[cfg(target_arch = "x86_64")]
    {
        if std::arch::is_x86_feature_detected!("avx512f") {
            // SAFETY: the feature was detected at runtime.
            return unsafe { x86::convolve_avx512(kernel, x, out) };
        }
        if std::arch::is_x86_feature_detected!("avx2") {
            // SAFETY: the feature was detected at runtime.
            return unsafe { x86::convolve_avx2(kernel, x, out) };
        }
    }
    convolve_generic(kernel, x, out)
}

/// `out[j] = Σ_t x[t] x[t + j]` for `j = 0..=max_lag`.
pub(crate) fn lagged_products(x: &[f64], max_lag: usize) -> Vec<f64> {
    let mut out = vec![0.0; max_lag + 1];
    assert!(max_lag < x.len());
    #[cfg(target_arch = "x86_64")]
    {
        if std::arch::is_x86_feature_detected!("avx512f") {
            // SAFETY: the feature was detected at runtime.
            unsafe { x86::lagged_avx512(x, max_lag, &mut out) };
            return out;
        }
        if std::arch::is_x86_feature_detected!("avx2") {
            // SAFETY: the feature was detected at runtime.
            unsafe { x86::lagged_avx2(x, max_lag, &mut out) };
            return out;
        }
    }
    lagged_generic(x, max_lag, &mut out);
    out
}
