use super::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Trans {
    N,
    T,
}

/// `c[m×n] = op(a)·op(b)`, all buffers row-major.
///
/// With `Trans::N`, `a` is stored as `m×k`; with `Trans::T` it is stored as
/// `k×m` and used transposed. Same for `b` with `k×n` / `n×k`.
#[allow(clippy::too_many_arguments)]
pub fn matmul<F: Real>(
    m: usize,
    k: usize,
    n: usize,
    a: &[F],
    ta: Trans,
    b: &[F],
    tb: Trans,
    c: &mut [F],
) {
    matmul_acc(m, k, n, a, ta, b, tb, F::ZERO, c)
}

/// `c[m×n] = op(a)·op(b) + beta·c`.
#[allow(clippy::too_many_arguments)]
pub fn matmul_acc<F: Real>(
    m: usize,
    k: usize,
    n: usize,
    a: &[F],
    ta: Trans,
    b: &[F],
    tb: Trans,
    beta: F,
    c: &mut [F],
) {
    assert!(a.len() >= m * k, "gemm: lhs buffer too small");
    assert!(b.len() >= k * n, "gemm: rhs buffer too small");
    assert!(c.len() >= m * n, "gemm: output buffer too small");
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        for x in &mut c[..m * n] {
            *x *= beta;
        }
        return;
    }
    let (rsa, csa) = match ta {
        Trans::N => (k as isize, 1),
        Trans::T => (1, m as isize),
    };
    let (rsb, csb) = match tb {
        Trans::N => (n as isize, 1),
        Trans::T => (1, k as isize),
    };
    // SAFETY: the asserts above guarantee every index the kernel touches
    // (i·rs + j·cs for i < rows, j < cols) is inside the slices.
    unsafe {
        F::gemm_raw(
            m,
            k,
            n,
            F::ONE,
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

/// `c = op·op + beta·c` over strided views: element `(i, j)` of the left
/// operand is `a[i·rsa + j·csa]`, of the right `b[i·rsb + j·csb]`, and of the
/// output `c[i·rsc + j]`.
#[allow(clippy::too_many_arguments)]
pub fn matmul_strided<F: Real>(
    m: usize,
    k: usize,
    n: usize,
    a: &[F],
    (rsa, csa): (usize, usize),
    b: &[F],
    (rsb, csb): (usize, usize),
    beta: F,
    c: &mut [F],
    rsc: usize,
) {
    if m == 0 || n == 0 {
        return;
    }
    assert!(rsc >= n && c.len() >= (m - 1) * rsc + n, "gemm: output view out of bounds");
    if k == 0 {
        for i in 0..m {
            for x in &mut c[i * rsc..i * rsc + n] {
                *x *= beta;
            }
        }
        return;
    }
    assert!(a.len() > (m - 1) * rsa + (k - 1) * csa, "gemm: lhs view out of bounds");
    assert!(b.len() > (k - 1) * rsb + (n - 1) * csb, "gemm: rhs view out of bounds");
    // SAFETY: bounds asserted above for the largest index of every view.
    unsafe {
        F::gemm_raw(
            m,
            k,
            n,
            F::ONE,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            1,
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(m: usize, k: usize, n: usize, a: &[f64], b: &[f64]) -> Vec<f64> {
        let mut c = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                for p in 0..k {
                    c[i * n + j] += a[i * k + p] * b[p * n + j];
                }
            }
        }
        c
    }

    fn transpose(rows: usize, cols: usize, x: &[f64]) -> Vec<f64> {
        let mut t = vec![0.0; rows * cols];
        for i in 0..rows {
            for j in 0..cols {
                t[j * rows + i] = x[i * cols + j];
            }
        }
        t
    }

    #[test]
    fn all_transpose_combinations_match_naive() {
        let (m, k, n) = (3, 5, 4);
        let a: Vec<f64> = (0..m * k).map(|i| (i as f64 * 0.37).sin()).collect();
        let b: Vec<f64> = (0..k * n).map(|i| (i as f64 * 0.11).cos()).collect();
        let expect = naive(m, k, n, &a, &b);
        let at = transpose(m, k, &a);
        let bt = transpose(k, n, &b);
        for (aa, ta) in [(&a, Trans::N), (&at, Trans::T)] {
            for (bb, tb) in [(&b, Trans::N), (&bt, Trans::T)] {
                let mut c = vec![0.0; m * n];
                matmul(m, k, n, aa, ta, bb, tb, &mut c);
                for (x, y) in c.iter().zip(&expect) {
                    assert!((x - y).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn strided_sub_block() {
        // Right operand = columns 1..3 of a 2x4 matrix.
        let a = [1.0, 2.0];
        let b = [9.0, 1.0, 2.0, 9.0, 9.0, 3.0, 4.0, 9.0];
        let mut c = [0.0, 0.0];
        matmul_strided(1, 2, 2, &a, (2, 1), &b[1..], (4, 1), 0.0, &mut c, 2);
        assert_eq!(c, [7.0, 10.0]);
    }

    #[test]
    fn accumulate_adds_to_existing() {
        let a = [1.0, 2.0];
        let b = [3.0, 4.0];
        let mut c = [10.0];
        matmul_acc(1, 2, 1, &a, Trans::N, &b, Trans::N, 1.0, &mut c);
        assert_eq!(c[0], 21.0);
    }
}
