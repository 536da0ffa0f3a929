//! Row-major matrix-vector kernels. All of them accumulate into `out`.

/// `out += W x` where `W` is `rows × cols`.
#[inline]
pub fn gemv_acc(w: &[f64], rows: usize, cols: usize, x: &[f64], out: &mut [f64]) {
    debug_assert_eq!(w.len(), rows * cols);
    debug_assert_eq!(x.len(), cols);
    debug_assert_eq!(out.len(), rows);
    for (o, row) in out.iter_mut().zip(w.chunks_exact(cols)) {
        *o += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// `out += Wᵀ g` where `W` is `rows × cols`.
#[inline]
pub fn gemv_t_acc(w: &[f64], rows: usize, cols: usize, g: &[f64], out: &mut [f64]) {
    debug_assert_eq!(w.len(), rows * cols);
    debug_assert_eq!(g.len(), rows);
    debug_assert_eq!(out.len(), cols);
    for (&gi, row) in g.iter().zip(w.chunks_exact(cols)) {
        if gi == 0.0 {
            continue;
        }
        for (o, a) in out.iter_mut().zip(row) {
            *o += gi * a;
        }
    }
}

/// `gw += g xᵀ` (rank-one update of a `rows × cols` gradient).
#[inline]
pub fn ger_acc(gw: &mut [f64], rows: usize, cols: usize, g: &[f64], x: &[f64]) {
    debug_assert_eq!(gw.len(), rows * cols);
    debug_assert_eq!(g.len(), rows);
    debug_assert_eq!(x.len(), cols);
    for (&gi, row) in g.iter().zip(gw.chunks_exact_mut(cols)) {
        if gi == 0.0 {
            continue;
        }
        for (o, a) in row.iter_mut().zip(x) {
            *o += gi * a;
        }
    }
}
