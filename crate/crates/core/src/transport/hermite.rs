//! Cubic Hermite pieces on a single interval, parametrised by s ∈ [0, 1].

#[inline]
pub(crate) fn hermite(h: f64, y0: f64, y1: f64, d0: f64, d1: f64, s: f64) -> f64 {
    let s2 = s * s;
    let s3 = s2 * s;
    let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
    let h10 = s3 - 2.0 * s2 + s;
    let h01 = -2.0 * s3 + 3.0 * s2;
    let h11 = s3 - s2;
    h00 * y0 + h10 * h * d0 + h01 * y1 + h11 * h * d1
}

#[inline]
pub(crate) fn hermite_slope(h: f64, y0: f64, y1: f64, d0: f64, d1: f64, s: f64) -> f64 {
    let s2 = s * s;
    let dh00 = 6.0 * s2 - 6.0 * s;
    let dh10 = 3.0 * s2 - 4.0 * s + 1.0;
    let dh01 = -6.0 * s2 + 6.0 * s;
    let dh11 = 3.0 * s2 - 2.0 * s;
    (dh00 * y0 + dh01 * y1) / h + dh10 * d0 + dh11 * d1
}

/// Solves hermite(s) = target for s ∈ [0, 1], assuming y0 ≤ target ≤ y1 and
/// positive end slopes. Safeguarded Newton.
pub(crate) fn invert_hermite(h: f64, y0: f64, y1: f64, d0: f64, d1: f64, target: f64) -> f64 {
    if target <= y0 {
        return 0.0;
    }
    if target >= y1 {
        return 1.0;
    }
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    let mut s = (target - y0) / (y1 - y0);
    for _ in 0..60 {
        let f = hermite(h, y0, y1, d0, d1, s) - target;
        if f > 0.0 {
            hi = s;
        } else {
            lo = s;
        }
        if f.abs() <= 1e-15 * target.abs().max(1.0) {
            return s;
        }
        let df = hermite_slope(h, y0, y1, d0, d1, s) * h;
        let mut next = if df > 0.0 { s - f / df } else { f64::NAN };
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - s).abs() <= 1e-16 {
            return next;
        }
        s = next;
    }
    s
}
