//! One-dimensional quadrature.

/// Composite Simpson rule with `intervals` subintervals (rounded up to even).
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, intervals: usize) -> f64 {
    let n = (intervals.max(2) + 1) & !1;
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for j in 1..n {
        let w = if j % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + j as f64 * h);
    }
    acc * h / 3.0
}

/// Simpson integration refined by doubling until the relative change drops
/// below `rel_tol`, starting from at least `min_nodes` nodes.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, min_nodes: usize, rel_tol: f64) -> f64 {
    let mut n = min_nodes.max(4);
    let mut prev = simpson(&f, a, b, n);
    for _ in 0..12 {
        n *= 2;
        let next = simpson(&f, a, b, n);
        if (next - prev).abs() <= rel_tol * next.abs().max(f64::MIN_POSITIVE) {
            return next;
        }
        prev = next;
    }
    prev
}
