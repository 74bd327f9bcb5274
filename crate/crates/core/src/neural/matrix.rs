//! Row-major dense helpers over `f64` slices.

/// `c = a·b + beta·c` where `a` is `m×k`, `b` is `k×n`, both possibly stored transposed.
///
/// `a_t` means `a` is stored as `k×m`; `b_t` means `b` is stored as `n×k`.
#[allow(clippy::too_many_arguments)]
pub fn gemm(m: usize, k: usize, n: usize, a: &[f64], a_t: bool, b: &[f64], b_t: bool, beta: f64, c: &mut [f64]) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c[..m * n].iter_mut().for_each(|x| *x *= beta);
        return;
    }
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the asserts above bound every index the strides can reach.
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

/// `a·b` for row-major `a` (`m×k`) and `b` (`k×n`).
pub fn matmul(m: usize, k: usize, n: usize, a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    gemm(m, k, n, a, false, b, false, 0.0, &mut c);
    c
}

pub fn add_into(dst: &mut [f64], src: &[f64]) {
    dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
}

/// Adds `bias` to every row of the `rows×bias.len()` matrix `m`.
pub fn add_row_bias(m: &mut [f64], bias: &[f64]) {
    for row in m.chunks_exact_mut(bias.len()) {
        add_into(row, bias);
    }
}

/// Sums the rows of `m` into `dst`.
pub fn sum_rows_into(dst: &mut [f64], m: &[f64]) {
    for row in m.chunks_exact(dst.len()) {
        add_into(dst, row);
    }
}

/// Columns `[start, start+width)` of a `rows×cols` matrix, as a contiguous matrix.
pub fn take_cols(m: &[f64], cols: usize, start: usize, width: usize) -> Vec<f64> {
    m.chunks_exact(cols).flat_map(|r| r[start..start + width].iter().copied()).collect()
}

/// Writes a contiguous `rows×width` block into columns `[start, start+width)` of `m`.
pub fn put_cols(m: &mut [f64], cols: usize, start: usize, block: &[f64]) {
    let width = block.len() / (m.len() / cols).max(1);
    for (row, b) in m.chunks_exact_mut(cols).zip(block.chunks_exact(width)) {
        row[start..start + width].copy_from_slice(b);
    }
}

/// In-place numerically stable softmax of one row.
pub fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in row.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    row.iter_mut().for_each(|x| *x /= sum);
}

pub fn log_sum_exp(row: &[f64]) -> f64 {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in row.iter().enumerate() {
        if x > row[best] {
            best = i;
        }
    }
    best
}
