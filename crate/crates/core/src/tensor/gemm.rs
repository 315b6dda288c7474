/// Highest element offset touched by an `rows x cols` strided view, plus one.
fn span(rows: usize, cols: usize, rs: isize, cs: isize) -> usize {
    if rows == 0 || cols == 0 {
        return 0;
    }
    assert!(rs >= 0 && cs >= 0, "negative strides are not supported");
    (rows - 1) * rs as usize + (cols - 1) * cs as usize + 1
}

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
    rsc: isize,
    csc: isize,
) {
    assert!(span(m, k, rsa, csa) <= a_len, "gemm: lhs view out of bounds");
    assert!(span(k, n, rsb, csb) <= b_len, "gemm: rhs view out of bounds");
    assert!(span(m, n, rsc, csc) <= c_len, "gemm: output view out of bounds");
}
