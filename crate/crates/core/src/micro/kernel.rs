//! Hot loop of the microscopic ensemble.
//!
//! The ensemble is stored as three parallel slices. Every function here sums
//! into `LANES` fixed accumulators and combines them in a fixed tree, so the
//! result does not depend on which instruction set the dispatcher picks.

use super::ObservableKind;

const LANES: usize = 8;

// Observables take `x` and its logistic image `f = a x (1 − x)`, which the
// step computes anyway.
#[inline(always)]
fn phi_mzq(x: f64, f: f64) -> f64 {
    x * x - f * f
}

#[inline(always)]
fn phi_square(x: f64, _f: f64) -> f64 {
    x * x
}

// Eight-wide forms of the same expressions, one array pass per operation so
// that each pass maps onto a single vector instruction.
#[inline(always)]
fn lanes_mzq(x: &[f64; LANES], f: &[f64; LANES]) -> [f64; LANES] {
    let mut xx = [0.0; LANES];
    let mut ff = [0.0; LANES];
    let mut out = [0.0; LANES];
    for l in 0..LANES {
        xx[l] = x[l] * x[l];
    }
    for l in 0..LANES {
        ff[l] = f[l] * f[l];
    }
    for l in 0..LANES {
        out[l] = xx[l] - ff[l];
    }
    out
}

#[inline(always)]
fn lanes_square(x: &[f64; LANES], _f: &[f64; LANES]) -> [f64; LANES] {
    let mut out = [0.0; LANES];
    for l in 0..LANES {
        out[l] = x[l] * x[l];
    }
    out
}

/// `if take { a } else { b }` without a branch: the choice is a coin flip
/// per unit, which a predictor cannot learn.
#[inline(always)]
fn select(take: bool, a: f64, b: f64) -> f64 {
    let mask = (take as u64).wrapping_neg();
    f64::from_bits((a.to_bits() & mask) | (b.to_bits() & !mask))
}

#[inline(always)]
fn combine(acc: [f64; LANES]) -> f64 {
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]))
}

/// Sums `phi` over the current state, then advances every unit one step.
#[inline(always)]
fn advance_with<F, G>(q: &mut [f64], r: &mut [f64], a: &[f64], phi: F, lanes_phi: G) -> f64
where
    F: Fn(f64, f64) -> f64,
    G: Fn(&[f64; LANES], &[f64; LANES]) -> [f64; LANES],
{
    let n = q.len();
    debug_assert!(r.len() == n && a.len() == n);
    let body = n - n % LANES;
    let mut acc = [0.0f64; LANES];
    let (q_body, q_tail) = q.split_at_mut(body);
    let (r_body, r_tail) = r.split_at_mut(body);
    let (a_body, a_tail) = a.split_at(body);
    for ((qs, rs), al) in q_body
        .chunks_exact_mut(LANES)
        .zip(r_body.chunks_exact_mut(LANES))
        .zip(a_body.chunks_exact(LANES))
    {
        // Whole-array passes keep every statement a single 8-wide operation.
        let qs: &mut [f64; LANES] = qs.try_into().expect("chunk of LANES");
        let rs: &mut [f64; LANES] = rs.try_into().expect("chunk of LANES");
        let al: &[f64; LANES] = al.try_into().expect("chunk of LANES");
        let x = *qs;
        let mut fx = [0.0f64; LANES];
        for l in 0..LANES {
            fx[l] = al[l] * x[l] * (1.0 - x[l]);
        }
        let terms = lanes_phi(&x, &fx);
        for l in 0..LANES {
            acc[l] += terms[l];
        }
        for l in 0..LANES {
            let advance = rs[l] >= 0.5;
            qs[l] = select(advance, fx[l], x[l]);
            // 2r − 1 and 2r are both exact, so subtracting the flag is too.
            rs[l] = 2.0 * rs[l] - (advance as u8 as f64);
        }
    }
    advance_tail(q_tail, r_tail, a_tail, &mut acc, phi);
    combine(acc)
}

/// Scalar step for the fewer-than-`LANES` units left after the vector body.
#[inline(always)]
fn advance_tail<F: Fn(f64, f64) -> f64>(
    q: &mut [f64],
    r: &mut [f64],
    a: &[f64],
    acc: &mut [f64; LANES],
    phi: F,
) {
    for (l, ((x, ri), &al)) in q.iter_mut().zip(r.iter_mut()).zip(a).enumerate() {
        let fx = al * *x * (1.0 - *x);
        acc[l] += phi(*x, fx);
        if *ri >= 0.5 {
            *x = fx;
            *ri = 2.0 * *ri - 1.0;
        } else {
            *ri *= 2.0;
        }
    }
}

#[inline(always)]
fn sum_with<F: Fn(f64, f64) -> f64>(q: &[f64], a: &[f64], phi: F) -> f64 {
    let mut acc = [0.0f64; LANES];
    let body = q.len() - q.len() % LANES;
    for (qs, al) in q[..body]
        .chunks_exact(LANES)
        .zip(a[..body].chunks_exact(LANES))
    {
        for l in 0..LANES {
            let x = qs[l];
            acc[l] += phi(x, al[l] * x * (1.0 - x));
        }
    }
    for (l, (&x, &al)) in q[body..].iter().zip(&a[body..]).enumerate() {
        acc[l] += phi(x, al * x * (1.0 - x));
    }
    combine(acc)
}

#[inline(always)]
fn advance_generic(q: &mut [f64], r: &mut [f64], a: &[f64], obs: ObservableKind) -> f64 {
    match obs {
        ObservableKind::MeanZeroQuadratic => advance_with(q, r, a, phi_mzq, lanes_mzq),
        ObservableKind::Square => advance_with(q, r, a, phi_square, lanes_square),
    }
}

// Explicit vector bodies. They perform exactly the operations of
// `advance_with`, in the same order and without fused multiply-adds, and
// keep the same eight accumulators, so all paths agree bit for bit.
#[cfg(target_arch = "x86_64")]
mod x86 {
    use super::{advance_tail, combine, phi_mzq, phi_square, LANES};
    use crate::micro::ObservableKind;
    use std::arch::x86_64::*;

    #[target_feature(enable = "avx512f")]
    unsafe fn body_avx512<const MZQ: bool>(q: &mut [f64], r: &mut [f64], a: &[f64]) -> f64 {
        let n = q.len();
        let body = n - n % LANES;
        let one = _mm512_set1_pd(1.0);
        let two = _mm512_set1_pd(2.0);
        let half = _mm512_set1_pd(0.5);
        let mut acc = _mm512_setzero_pd();
        let (qp, rp, ap) = (q.as_mut_ptr(), r.as_mut_ptr(), a.as_ptr());
        let mut i = 0;
        while i < body {
            // SAFETY: i + LANES <= body <= n for all three slices.
            let (x, rv, av) = unsafe {
                (
                    _mm512_loadu_pd(qp.add(i)),
                    _mm512_loadu_pd(rp.add(i)),
                    _mm512_loadu_pd(ap.add(i)),
                )
            };
            let fx = _mm512_mul_pd(_mm512_mul_pd(av, x), _mm512_sub_pd(one, x));
            let xx = _mm512_mul_pd(x, x);
            let term = if MZQ {
                _mm512_sub_pd(xx, _mm512_mul_pd(fx, fx))
            } else {
                xx
            };
            acc = _mm512_add_pd(acc, term);
            let take = _mm512_cmp_pd_mask::<_CMP_GE_OQ>(rv, half);
            let flag = _mm512_maskz_mov_pd(take, one);
            // SAFETY: as above.
            unsafe {
                _mm512_storeu_pd(qp.add(i), _mm512_mask_blend_pd(take, x, fx));
                _mm512_storeu_pd(rp.add(i), _mm512_sub_pd(_mm512_mul_pd(two, rv), flag));
            }
            i += LANES;
        }
        let mut lanes = [0.0f64; LANES];
        // SAFETY: `lanes` holds exactly eight doubles.
        unsafe { _mm512_storeu_pd(lanes.as_mut_ptr(), acc) };
        let (q_tail, r_tail, a_tail) = (&mut q[body..], &mut r[body..], &a[body..]);
        if MZQ {
            advance_tail(q_tail, r_tail, a_tail, &mut lanes, phi_mzq);
        } else {
            advance_tail(q_tail, r_tail, a_tail, &mut lanes, phi_square);
        }
        combine(lanes)
    }

    /// Two four-wide halves stand in for the eight accumulators.
    #[target_feature(enable = "avx2")]
    unsafe fn body_avx2<const MZQ: bool>(q: &mut [f64], r: &mut [f64], a: &[f64]) -> f64 {
        let n = q.len();
        let body = n - n % LANES;
        let one = _mm256_set1_pd(1.0);
        let two = _mm256_set1_pd(2.0);
        let half = _mm256_set1_pd(0.5);
        let mut acc = [_mm256_setzero_pd(); 2];
        let (qp, rp, ap) = (q.as_mut_ptr(), r.as_mut_ptr(), a.as_ptr());
        let mut i = 0;
        while i < body {
            for (h, acc_h) in acc.iter_mut().enumerate() {
                let k = i + 4 * h;
                // SAFETY: k + 4 <= body <= n for all three slices.
                let (x, rv, av) = unsafe {
                    (
                        _mm256_loadu_pd(qp.add(k)),
                        _mm256_loadu_pd(rp.add(k)),
                        _mm256_loadu_pd(ap.add(k)),
                    )
                };
                let fx = _mm256_mul_pd(_mm256_mul_pd(av, x), _mm256_sub_pd(one, x));
                let xx = _mm256_mul_pd(x, x);
                let term = if MZQ {
                    _mm256_sub_pd(xx, _mm256_mul_pd(fx, fx))
                } else {
                    xx
                };
                *acc_h = _mm256_add_pd(*acc_h, term);
                let take = _mm256_cmp_pd::<_CMP_GE_OQ>(rv, half);
                let flag = _mm256_and_pd(take, one);
                // SAFETY: as above.
                unsafe {
                    _mm256_storeu_pd(qp.add(k), _mm256_blendv_pd(x, fx, take));
                    _mm256_storeu_pd(rp.add(k), _mm256_sub_pd(_mm256_mul_pd(two, rv), flag));
                }
            }
            i += LANES;
        }
        let mut lanes = [0.0f64; LANES];
        // SAFETY: `lanes` holds exactly eight doubles.
        unsafe {
            _mm256_storeu_pd(lanes.as_mut_ptr(), acc[0]);
            _mm256_storeu_pd(lanes.as_mut_ptr().add(4), acc[1]);
        }
        let (q_tail, r_tail, a_tail) = (&mut q[body..], &mut r[body..], &a[body..]);
        if MZQ {
            advance_tail(q_tail, r_tail, a_tail, &mut lanes, phi_mzq);
        } else {
            advance_tail(q_tail, r_tail, a_tail, &mut lanes, phi_square);
        }
        combine(lanes)
    }

    #[target_feature(enable = "avx512f")]
    pub(super) unsafe fn advance_avx512(
        q: &mut [f64],
        r: &mut [f64],
        a: &[f64],
        obs: ObservableKind,
    ) -> f64 {
        match obs {
            ObservableKind::MeanZeroQuadratic => body_avx512::<true>(q, r, a),
            ObservableKind::Square => body_avx512::<false>(q, r, a),
        }
    }

    #[target_feature(enable = "avx2")]
    pub(super) unsafe fn advance_avx2(
        q: &mut [f64],
        r: &mut [f64],
        a: &[f64],
        obs: ObservableKind,
    ) -> f64 {
        match obs {
            ObservableKind::MeanZeroQuadratic => body_avx2::<true>(q, r, a),
            ObservableKind::Square => body_avx2::<false>(q, r, a),
        }
    }
}

pub(crate) fn advance(q: &mut [f64], r: &mut [f64], a: &[f64], obs: ObservableKind) -> f64 {
    // The vector bodies index all three slices by the length of `q`.
    assert!(
        r.len() == q.len() && a.len() == q.len(),
        "ensemble slices differ in length"
    );
    #[cfg(target_arch = "x86_64")]
    {
        if std::arch::is_x86_feature_detected!("avx512f") {
            // SAFETY: the required CPU feature was detected at runtime.
            return unsafe { x86::advance_avx512(q, r, a, obs) };
        }
        if std::arch::is_x86_feature_detected!("avx2") {
            // SAFETY: as above.
            return unsafe { x86::advance_avx2(q, r, a, obs) };
        }
    }
    advance_generic(q, r, a, obs)
}

pub(crate) fn sum_phi(q: &[f64], a: &[f64], obs: ObservableKind) -> f64 {
    match obs {
        ObservableKind::MeanZeroQuadratic => sum_with(q, a, phi_mzq),
        ObservableKind::Square => sum_with(q, a, phi_square),
    }
}
