/// Panics unless every strided access of a `(m×k)·(k×n) → (m×n)` product stays in bounds.
#[allow(clippy::too_many_arguments)]
pub(super) fn check_extents(
    m: usize,
    k: usize,
    n: usize,
    a_len: usize,
    rsa: isize,
    csa: isize,
    b_len: usize,
    rsb: isize,
    csb: isize,
    c_len: usize,
) {
    assert!(rsa >= 0 && csa >= 0 && rsb >= 0 && csb >= 0, "gemm: negative strides unsupported");
    assert!(c_len >= m * n, "gemm: output buffer too small");
    if m == 0 || n == 0 || k == 0 {
        return;
    }
    let last = |rows: usize, cols: usize, rs: isize, cs: isize| (rows - 1) * rs as usize + (cols - 1) * cs as usize;
    assert!(last(m, k, rsa, csa) < a_len, "gemm: lhs out of bounds");
    assert!(last(k, n, rsb, csb) < b_len, "gemm: rhs out of bounds");
}
