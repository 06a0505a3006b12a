//! Probabilists' Hermite polynomials, orthogonal for the weight `e^{−x²/2}`.
//!
//! The physicists' family satisfies `H^phys_n(x) = 2^{n/2} H_n(√2 x)`.

/// `H_n(x)` from `H_{n+1} = x H_n − n H_{n−1}`.
pub fn hermite_eval(n: usize, x: f64) -> f64 {
    let mut prev = 0.0;
    let mut cur = 1.0;
    for k in 0..n {
        let next = x * cur - k as f64 * prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// Normalized values `H̄_k(x) = H_k(x)/√(k!)` for `k = 0..=kmax`.
pub fn hermite_normalized(kmax: usize, x: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(kmax + 1);
    out.push(1.0);
    if kmax == 0 {
        return out;
    }
    out.push(x);
    for k in 1..kmax {
        let kf = k as f64;
        let next = (x * out[k] - kf.sqrt() * out[k - 1]) / (kf + 1.0).sqrt();
        out.push(next);
    }
    out
}
