//! Dense symmetric kernels for the Schur-complement systems: a blocked,
//! partially parallel Cholesky and multi-RHS triangular solves. Matrices are
//! row-major full-storage; the lower triangle is authoritative.

use rayon::prelude::*;

pub const NB: usize = 96;

/// Dot product with four independent accumulators; the explicit unroll
/// breaks the serial FP-add chain so the loop vectorizes.
#[inline]
pub fn dot_unrolled(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let chunks = n / 4;
    let (mut s0, mut s1, mut s2, mut s3) = (0.0, 0.0, 0.0, 0.0);
    for c in 0..chunks {
        let i = 4 * c;
        s0 += a[i] * b[i];
        s1 += a[i + 1] * b[i + 1];
        s2 += a[i + 2] * b[i + 2];
        s3 += a[i + 3] * b[i + 3];
    }
    let mut tail = 0.0;
    for i in 4 * chunks..n {
        tail += a[i] * b[i];
    }
    (s0 + s1) + (s2 + s3) + tail
}

/// In-place Cholesky A = L Lᵀ on the lower triangle of an n×n row-major
/// matrix; `reg` is added to the diagonal before factoring. Returns the
/// pivot column on breakdown.
pub fn cholesky_in_place(a: &mut [f64], n: usize, reg: f64) -> Result<(), usize> {
    assert_eq!(a.len(), n * n);
    if reg != 0.0 {
        for i in 0..n {
            a[i * n + i] += reg;
        }
    }
    let mut k0 = 0usize;
    while k0 < n {
        let nb = NB.min(n - k0);
        let k1 = k0 + nb;
        // unblocked factorization of the diagonal block
        for j in k0..k1 {
            let mut d = a[j * n + j];
            for p in k0..j {
                d -= a[j * n + p] * a[j * n + p];
            }
            if d <= 0.0 || !d.is_finite() {
                return Err(j);
            }
            let dj = d.sqrt();
            a[j * n + j] = dj;
            for i in (j + 1)..k1 {
                let mut s = a[i * n + j];
                for p in k0..j {
                    s -= a[i * n + p] * a[j * n + p];
                }
                a[i * n + j] = s / dj;
            }
        }
        if k1 == n {
            break;
        }
        // panel solve: rows k1..n, columns k0..k1 ← A21 L11⁻ᵀ
        let (head, tail) = a.split_at_mut(k1 * n);
        let l11 = &head[k0 * n..];
        tail.par_chunks_mut(n).for_each(|row| {
            for j in 0..nb {
                let mut s = row[k0 + j];
                let ljrow = &l11[j * n + k0..j * n + k0 + j];
                for (p, &ljp) in ljrow.iter().enumerate() {
                    s -= row[k0 + p] * ljp;
                }
                row[k0 + j] = s / l11[j * n + k0 + j];
            }
        });
        // trailing update: A22 −= L21 L21ᵀ, lower triangle only. The panel
        // is copied out first so the parallel row updates read stable data.
        let rows_below = n - k1;
        let mut panel = vec![0.0f64; rows_below * nb];
        for r in 0..rows_below {
            let src = (k1 + r) * n + k0;
            panel[r * nb..(r + 1) * nb].copy_from_slice(&a[src..src + nb]);
        }
        a[k1 * n..].par_chunks_mut(n).enumerate().for_each(|(ri, row)| {
            let pi = &panel[ri * nb..(ri + 1) * nb];
            for rj in 0..=ri {
                let pj = &panel[rj * nb..(rj + 1) * nb];
                row[k1 + rj] -= dot_unrolled(pi, pj);
            }
        });
        k0 = k1;
    }
    // mirror to the upper triangle so later reads can use either side
    for i in 0..n {
        for j in (i + 1)..n {
            a[i * n + j] = a[j * n + i];
        }
    }
    Ok(())
}

/// Solve L y = r in place given the Cholesky factor (lower triangle).
pub fn solve_lower(l: &[f64], n: usize, r: &mut [f64]) {
    for i in 0..n {
        let mut s = r[i];
        let row = &l[i * n..i * n + i];
        for (p, &lip) in row.iter().enumerate() {
            s -= lip * r[p];
        }
        r[i] = s / l[i * n + i];
    }
}

/// Solve Lᵀ x = r in place.
pub fn solve_lower_t(l: &[f64], n: usize, r: &mut [f64]) {
    for i in (0..n).rev() {
        let mut s = r[i];
        for p in (i + 1)..n {
            s -= l[p * n + i] * r[p];
        }
        r[i] = s / l[i * n + i];
    }
}

/// Full solve (L Lᵀ) x = r in place.
pub fn solve_cholesky(l: &[f64], n: usize, r: &mut [f64]) {
    solve_lower(l, n, r);
    solve_lower_t(l, n, r);
}

/// Solve L Y = R for many right-hand sides stored as columns of an
/// n×k column-major buffer, in parallel over columns.
pub fn solve_lower_multi(l: &[f64], n: usize, rhs: &mut [f64], k: usize) {
    assert_eq!(rhs.len(), n * k);
    rhs.par_chunks_mut(n).take(k).for_each(|col| solve_lower(l, n, col));
}
