//! Nesterov–Todd scaling for PSD blocks.
//!
//! For X, S ≻ 0 the NT scaling point W satisfies W S W = X. With Cholesky
//! factors X = L₁L₁ᵀ, S = L₂L₂ᵀ and the SVD L₂ᵀL₁ = UΣVᵀ, the factor
//! R = L₁VΣ^{−1/2} gives W = RRᵀ, and both scaled variables coincide with
//! the diagonal Σ: R⁻¹XR⁻ᵀ = RᵀSR = Σ.

use nalgebra::{DMatrix, DVector};

/// Per-block scaling state for one interior-point iteration.
pub struct NtBlock {
    pub n: usize,
    pub r: DMatrix<f64>,
    pub r_inv: DMatrix<f64>,
    /// W = R Rᵀ as a dense matrix (row-major access via nalgebra).
    pub w: DMatrix<f64>,
    /// Scaled point λ = diag(Σ).
    pub lambda: DVector<f64>,
}

pub struct NtError(pub String);

impl NtBlock {
    pub fn compute(x: &DMatrix<f64>, s: &DMatrix<f64>) -> Result<NtBlock, NtError> {
        let n = x.nrows();
        let l1 = x
            .clone()
            .cholesky()
            .ok_or_else(|| NtError("primal block not PD".into()))?
            .l();
        let l2 = s
            .clone()
            .cholesky()
            .ok_or_else(|| NtError("dual block not PD".into()))?
            .l();
        let m = l2.transpose() * &l1;
        let svd = m.svd(true, true);
        let u = svd.u.as_ref().ok_or_else(|| NtError("svd u".into()))?;
        let vt = svd.v_t.as_ref().ok_or_else(|| NtError("svd vt".into()))?;
        let sigma = &svd.singular_values;
        if sigma.iter().any(|&s| s <= 0.0 || !s.is_finite()) {
            return Err(NtError("singular scaling".into()));
        }
        let _ = u;
        let v = vt.transpose();
        // R = L1 V Σ^{-1/2}
        let mut r = &l1 * v;
        for j in 0..n {
            let f = 1.0 / sigma[j].sqrt();
            for i in 0..n {
                r[(i, j)] *= f;
            }
        }
        // R⁻¹ = Σ^{1/2} Vᵀ L1⁻¹ ; form L1⁻¹ by triangular solves
        let mut l1_inv = DMatrix::identity(n, n);
        l1.solve_lower_triangular_mut(&mut l1_inv);
        let mut r_inv = vt.clone() * l1_inv;
        for i in 0..n {
            let f = sigma[i].sqrt();
            for j in 0..n {
                r_inv[(i, j)] *= f;
            }
        }
        let w = &r * r.transpose();
        Ok(NtBlock { n, r, r_inv, w, lambda: sigma.clone() })
    }

    /// Scale a primal-side direction: R⁻¹ M R⁻ᵀ, symmetrized.
    pub fn scale_primal(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        let out = &self.r_inv * m * self.r_inv.transpose();
        symmetrize(out)
    }

    /// Scale a dual-side direction: Rᵀ M R, symmetrized.
    pub fn scale_dual(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        let out = self.r.transpose() * m * &self.r;
        symmetrize(out)
    }

    /// Unscale a primal-side scaled matrix: R M Rᵀ.
    pub fn unscale_primal(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        symmetrize(&self.r * m * self.r.transpose())
    }

    /// Apply the inverse of the operator L_λ(M) = (ΛM + MΛ)/2 entrywise.
    pub fn lambda_op_inv(&self, m: &mut DMatrix<f64>) {
        for i in 0..self.n {
            for j in 0..self.n {
                m[(i, j)] *= 2.0 / (self.lambda[i] + self.lambda[j]);
            }
        }
    }
}

pub fn symmetrize(mut m: DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_pd(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        let b = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        &b * b.transpose() + DMatrix::identity(n, n) * 0.3
    }

    #[test]
    fn nt_identities_hold() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for &n in &[1usize, 2, 6, 20] {
            let x = random_pd(n, &mut rng);
            let s = random_pd(n, &mut rng);
            let nt = NtBlock::compute(&x, &s).map_err(|e| e.0).unwrap();
            // W S W = X
            let wsw = &nt.w * &s * &nt.w;
            assert!((&wsw - &x).amax() < 1e-9 * (1.0 + x.amax()));
            // scaled variables coincide: R⁻¹XR⁻ᵀ = RᵀSR = Λ
            let xs = nt.scale_primal(&x);
            let ss = nt.scale_dual(&s);
            assert!((&xs - &ss).amax() < 1e-9 * (1.0 + xs.amax()));
            for i in 0..n {
                assert!((xs[(i, i)] - nt.lambda[i]).abs() < 1e-9 * (1.0 + nt.lambda[i]));
            }
            // R R⁻¹ = I
            let id = &nt.r * &nt.r_inv;
            assert!((id - DMatrix::<f64>::identity(n, n)).amax() < 1e-9);
        }
    }
}
