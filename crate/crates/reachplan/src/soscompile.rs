//! Compilation of truncated quadratic-module membership constraints into
//! standard-form SDP data.
//!
//! A constraint asserts that a target polynomial p (whose coefficients may
//! depend affinely on scalar decision variables) lies in
//! Q_2l(h_1, …, h_n) = { s_0 + Σ s_i h_i : s_i SOS, every product of degree
//! ≤ 2l }. Each multiplier s_i becomes a PSD Gram block over the monomial
//! basis of degree ≤ ⌊(2l − deg h_i)/2⌋, and one equality row per monomial
//! of degree ≤ 2l matches coefficients of Σ s_i h_i against the target.
//! Membership certifies non-negativity of the target on {z : h_i(z) ≥ 0}.

use std::collections::BTreeMap;
use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::polyalg::{monomials_up_to, BoxDomain, MultiIndex, PolyError, Polynomial, VariableSpace};
use crate::sdpsolve::{SdpProblem, SdpProblemBuilder, SdpSolution};

#[derive(Debug, Error)]
pub enum CompileError {
    #[error("constraint {name}: target degree {got} exceeds bound 2l = {bound}")]
    DegreeOverflow { name: String, got: u32, bound: u32 },
    #[error("constraint {name}: generator degree {got} exceeds bound 2l = {bound}")]
    GeneratorDegree { name: String, got: u32, bound: u32 },
    #[error("constraint {name}: zero generator")]
    ZeroGenerator { name: String },
    #[error(transparent)]
    Poly(#[from] PolyError),
}

/// A set {z : h_i(z) ≥ 0 for all i} described by polynomial generators.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SemialgebraicSet {
    pub space: VariableSpace,
    pub generators: Vec<Polynomial>,
}

impl SemialgebraicSet {
    pub fn new(space: &VariableSpace, generators: Vec<Polynomial>) -> Self {
        SemialgebraicSet { space: space.clone(), generators }
    }

    /// One quadratic generator (hi − z)(z − lo) per box variable, embedded
    /// into `space`.
    pub fn from_box(domain: &BoxDomain, space: &VariableSpace) -> Result<Self, PolyError> {
        let mut gens = Vec::with_capacity(domain.dim());
        for i in 0..domain.dim() {
            let name = &domain.space().names()[i];
            let z = Polynomial::var_named(space, name)?;
            let hi = Polynomial::constant(space, domain.high(i));
            let lo = Polynomial::constant(space, domain.low(i));
            gens.push(hi.sub(&z)?.mul(&z.sub(&lo)?)?);
        }
        Ok(SemialgebraicSet { space: space.clone(), generators: gens })
    }

    /// Membership by sampling: all generators ≥ −tol at the point.
    pub fn contains(&self, point: &[f64], tol: f64) -> bool {
        self.generators
            .iter()
            .all(|h| h.eval(point).map(|v| v >= -tol).unwrap_or(false))
    }
}

/// The time-interval generator t(T − t).
pub fn time_generator(space: &VariableSpace, horizon: f64) -> Result<Polynomial, PolyError> {
    let t = Polynomial::var_named(space, "t")?;
    let tt = Polynomial::constant(space, horizon);
    t.mul(&tt.sub(&t)?)
}

/// A named polynomial whose coefficients are scalar decision variables, one
/// per monomial of degree ≤ `degree` over `space` (graded-lex order).
#[derive(Debug, Clone)]
pub struct DecisionPoly {
    pub name: String,
    pub space: VariableSpace,
    pub degree: u32,
    pub monomials: Vec<MultiIndex>,
    /// Global index of the first coefficient variable.
    pub first_var: usize,
}

impl DecisionPoly {
    pub fn num_coeffs(&self) -> usize {
        self.monomials.len()
    }

    /// Realize the polynomial from a solved coefficient vector.
    pub fn realize(&self, free_values: &[f64]) -> Polynomial {
        Polynomial::from_terms(
            &self.space,
            self.monomials
                .iter()
                .cloned()
                .zip(free_values[self.first_var..self.first_var + self.monomials.len()].iter().copied()),
        )
    }
}

/// Affine coefficient: constant + Σ weight·decision_var.
#[derive(Debug, Clone, Default)]
pub struct LinCoef {
    pub constant: f64,
    pub terms: Vec<(usize, f64)>,
}

impl LinCoef {
    fn add_constant(&mut self, c: f64) {
        self.constant += c;
    }

    fn add_var(&mut self, var: usize, w: f64) {
        for (v, existing) in &mut self.terms {
            if *v == var {
                *existing += w;
                return;
            }
        }
        self.terms.push((var, w));
    }

    pub fn eval(&self, free_values: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|&(v, w)| w * free_values[v]).sum::<f64>()
    }
}

/// Polynomial with affine-in-decision-variable coefficients.
#[derive(Debug, Clone)]
pub struct LinearPoly {
    pub space: VariableSpace,
    pub terms: BTreeMap<MultiIndex, LinCoef>,
}

impl LinearPoly {
    pub fn zero(space: &VariableSpace) -> Self {
        LinearPoly { space: space.clone(), terms: BTreeMap::new() }
    }

    pub fn from_poly(p: &Polynomial) -> Self {
        let mut terms = BTreeMap::new();
        for (a, c) in p.terms() {
            terms.insert(a.clone(), LinCoef { constant: c, terms: vec![] });
        }
        LinearPoly { space: p.space().clone(), terms }
    }

    /// The decision polynomial itself, mapped through `op` applied to each
    /// basis monomial (must be a linear operation on polynomials). The
    /// resulting terms live in the space produced by `op`.
    pub fn from_decision_mapped(
        dp: &DecisionPoly,
        mut op: impl FnMut(&Polynomial) -> Result<Polynomial, PolyError>,
    ) -> Result<Self, PolyError> {
        let mut out: Option<LinearPoly> = None;
        for (mi, mono) in dp.monomials.iter().enumerate() {
            let basis = Polynomial::from_terms(&dp.space, [(mono.clone(), 1.0)]);
            let image = op(&basis)?;
            let target = out.get_or_insert_with(|| LinearPoly::zero(image.space()));
            for (a, c) in image.terms() {
                target
                    .terms
                    .entry(a.clone())
                    .or_default()
                    .add_var(dp.first_var + mi, c);
            }
        }
        Ok(out.expect("decision polynomial has at least the constant monomial"))
    }

    pub fn from_decision(dp: &DecisionPoly) -> Self {
        Self::from_decision_mapped(dp, |p| Ok(p.clone())).expect("identity map")
    }

    pub fn add(&self, other: &LinearPoly) -> LinearPoly {
        assert_eq!(self.space, other.space, "linear poly space mismatch");
        let mut out = self.clone();
        for (a, c) in &other.terms {
            let e = out.terms.entry(a.clone()).or_default();
            e.add_constant(c.constant);
            for &(v, w) in &c.terms {
                e.add_var(v, w);
            }
        }
        out
    }

    pub fn scale(&self, f: f64) -> LinearPoly {
        let mut out = self.clone();
        for c in out.terms.values_mut() {
            c.constant *= f;
            for (_, w) in &mut c.terms {
                *w *= f;
            }
        }
        out
    }

    pub fn add_poly(&self, p: &Polynomial) -> LinearPoly {
        self.add(&LinearPoly::from_poly(p))
    }

    pub fn degree(&self) -> u32 {
        self.terms.keys().map(MultiIndex::degree).max().unwrap_or(0)
    }

    /// Realize as a concrete polynomial at a given decision-variable vector.
    pub fn realize(&self, free_values: &[f64]) -> Polynomial {
        Polynomial::from_terms(
            &self.space,
            self.terms.iter().map(|(a, c)| (a.clone(), c.eval(free_values))),
        )
    }
}

/// One membership constraint: target ∈ Q_2l(generators of `set`).
#[derive(Debug, Clone)]
pub struct SosConstraint {
    pub name: String,
    pub set: SemialgebraicSet,
    pub target: LinearPoly,
    pub degree_2l: u32,
}

/// Where a multiplier's Gram block landed in the compiled SDP.
#[derive(Debug, Clone)]
pub struct MultiplierLayout {
    pub block: usize,
    pub basis: Vec<MultiIndex>,
    /// Index into the constraint's generators; `None` is the plain SOS term.
    pub generator: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct ConstraintLayout {
    pub name: String,
    pub row_start: usize,
    pub row_monomials: Vec<MultiIndex>,
    pub multipliers: Vec<MultiplierLayout>,
}

/// Mapping from the compiled SDP back to polynomial data.
#[derive(Debug, Clone)]
pub struct SosLayout {
    pub constraints: Vec<ConstraintLayout>,
    pub n_free: usize,
}

/// A full SOS program: decision polynomials, membership constraints, and a
/// linear objective over decision coefficients (minimized).
#[derive(Debug, Clone, Default)]
pub struct SosProgram {
    pub decisions: Vec<DecisionPoly>,
    pub constraints: Vec<SosConstraint>,
    /// Minimized linear objective: Σ coef · decision_var.
    pub objective: Vec<(usize, f64)>,
    n_vars: usize,
}

impl SosProgram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_decision(&mut self, name: &str, space: &VariableSpace, degree: u32) -> usize {
        let monomials = monomials_up_to(space.count(), degree);
        let dp = DecisionPoly {
            name: name.to_string(),
            space: space.clone(),
            degree,
            first_var: self.n_vars,
            monomials,
        };
        self.n_vars += dp.num_coeffs();
        self.decisions.push(dp);
        self.decisions.len() - 1
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn add_constraint(&mut self, c: SosConstraint) {
        self.constraints.push(c);
    }

    /// Set the objective to the moment functional of one decision
    /// polynomial: Σ_α y_α · coeff_α, scaled by `sign`.
    pub fn set_moment_objective(
        &mut self,
        decision: usize,
        moments: &crate::polyalg::MomentVector,
        sign: f64,
    ) {
        let dp = &self.decisions[decision];
        self.objective = dp
            .monomials
            .iter()
            .enumerate()
            .map(|(i, a)| (dp.first_var + i, sign * moments.get(a)))
            .collect();
    }

    pub fn compile(&self) -> Result<(SdpProblem, SosLayout), CompileError> {
        let mut block_dims: Vec<usize> = Vec::new();
        let mut layouts: Vec<ConstraintLayout> = Vec::new();
        let mut total_rows = 0usize;

        // first pass: block and row bookkeeping
        for c in &self.constraints {
            let two_l = c.degree_2l;
            if c.target.degree() > two_l {
                return Err(CompileError::DegreeOverflow {
                    name: c.name.clone(),
                    got: c.target.degree(),
                    bound: two_l,
                });
            }
            let mut multipliers = Vec::new();
            // s_0 block
            let basis0 = monomials_up_to(c.set.space.count(), two_l / 2);
            multipliers.push(MultiplierLayout {
                block: block_dims.len(),
                basis: basis0,
                generator: None,
            });
            block_dims.push(multipliers[0].basis.len());
            for (gi, h) in c.set.generators.iter().enumerate() {
                if h.is_zero() {
                    return Err(CompileError::ZeroGenerator { name: c.name.clone() });
                }
                let dh = h.total_degree();
                if dh > two_l {
                    return Err(CompileError::GeneratorDegree {
                        name: c.name.clone(),
                        got: dh,
                        bound: two_l,
                    });
                }
                let basis = monomials_up_to(c.set.space.count(), (two_l - dh) / 2);
                block_dims.push(basis.len());
                multipliers.push(MultiplierLayout {
                    block: block_dims.len() - 1,
                    basis,
                    generator: Some(gi),
                });
            }
            let row_monomials = monomials_up_to(c.set.space.count(), two_l);
            layouts.push(ConstraintLayout {
                name: c.name.clone(),
                row_start: total_rows,
                row_monomials,
                multipliers,
            });
            total_rows += layouts.last().unwrap().row_monomials.len();
        }

        let mut builder = SdpProblemBuilder::new(block_dims, self.n_vars, total_rows);

        // second pass: entries
        for (c, layout) in self.constraints.iter().zip(&layouts) {
            let row_index: HashMap<&MultiIndex, usize> = layout
                .row_monomials
                .iter()
                .enumerate()
                .map(|(i, a)| (a, layout.row_start + i))
                .collect();
            for ml in &layout.multipliers {
                let gen_terms: Vec<(MultiIndex, f64)> = match ml.generator {
                    None => vec![(MultiIndex::zeros(c.set.space.count()), 1.0)],
                    Some(gi) => c.set.generators[gi]
                        .terms()
                        .map(|(a, v)| (a.clone(), v))
                        .collect(),
                };
                for (i, bi) in ml.basis.iter().enumerate() {
                    for (j, bj) in ml.basis.iter().enumerate().skip(i) {
                        let pair = bi.add(bj);
                        for (ga, gv) in &gen_terms {
                            let row = row_index[&pair.add(ga)];
                            builder.add_entry(row, ml.block, i as u32, j as u32, *gv);
                        }
                    }
                }
            }
            // target: Σ s_i h_i − (linear part) = constant
            for (a, coef) in &c.target.terms {
                let row = row_index[a];
                builder.b[row] += coef.constant;
                for &(var, w) in &coef.terms {
                    builder.add_free(row, var, -w);
                }
            }
        }

        for &(var, coef) in &self.objective {
            builder.obj_free[var] += coef;
        }

        let problem = builder.finish();
        Ok((problem, SosLayout { constraints: layouts, n_free: self.n_vars }))
    }
}

/// All monomials of degree ≤ ⌊d/2⌋ — the Gram basis used for an SOS
/// multiplier of degree bound d.
pub fn gram_basis(space: &VariableSpace, degree: u32) -> Vec<MultiIndex> {
    monomials_up_to(space.count(), degree / 2)
}

// --- certificate recovery ------------------------------------------------------

/// Multiplier polynomials and realized decision polynomials recovered from a
/// solved SDP, with the coefficient-identity residual.
#[derive(Debug, Clone)]
pub struct RecoveredCertificate {
    /// Per constraint: the multipliers s_0, s_1, … (aligned with layout).
    pub multipliers: Vec<Vec<Polynomial>>,
    /// Realized decision polynomials, aligned with `SosProgram::decisions`.
    pub decisions: Vec<Polynomial>,
    /// max over constraints and monomials of |target − Σ s_i h_i|.
    pub residual: f64,
}

#[derive(Debug, Error)]
#[error("certificate residual {residual} exceeds threshold {threshold}")]
pub struct CertificateRejected {
    pub residual: f64,
    pub threshold: f64,
}

/// Map Gram blocks back to multiplier polynomials and verify the
/// coefficient identity target = Σ s_i h_i within `threshold`.
pub fn recover_certificate(
    program: &SosProgram,
    layout: &SosLayout,
    solution: &SdpSolution,
    threshold: f64,
) -> Result<RecoveredCertificate, CertificateRejected> {
    let decisions: Vec<Polynomial> = program
        .decisions
        .iter()
        .map(|dp| dp.realize(&solution.free_values))
        .collect();
    let mut multipliers = Vec::with_capacity(layout.constraints.len());
    let mut residual: f64 = 0.0;
    for (c, cl) in program.constraints.iter().zip(&layout.constraints) {
        let mut ms = Vec::with_capacity(cl.multipliers.len());
        let mut reconstructed = Polynomial::zero(&c.set.space);
        for ml in &cl.multipliers {
            let gram = &solution.primal_blocks[ml.block];
            let n = ml.basis.len();
            let mut terms: BTreeMap<MultiIndex, f64> = BTreeMap::new();
            for i in 0..n {
                for j in 0..n {
                    let idx = ml.basis[i].add(&ml.basis[j]);
                    *terms.entry(idx).or_insert(0.0) += gram[(i, j)];
                }
            }
            let s = Polynomial::from_terms(&c.set.space, terms);
            let contrib = match ml.generator {
                None => s.clone(),
                Some(gi) => s.mul(&c.set.generators[gi]).expect("same space"),
            };
            reconstructed = reconstructed.add(&contrib).expect("same space");
            ms.push(s);
        }
        let target = c.target.realize(&solution.free_values);
        let diff = target.sub(&reconstructed).expect("same space");
        residual = residual.max(diff.max_abs_coefficient());
        multipliers.push(ms);
    }
    if residual > threshold {
        return Err(CertificateRejected { residual, threshold });
    }
    Ok(RecoveredCertificate { multipliers, decisions, residual })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sdpsolve::{solve, SdpStatus, SolveOptions};

    fn x_space() -> VariableSpace {
        VariableSpace::new(vec!["x"])
    }

    #[test]
    fn gram_basis_counts() {
        let s1 = x_space();
        assert_eq!(gram_basis(&s1, 2).len(), 2); // {1, x}
        let s2 = VariableSpace::new(vec!["x", "y"]);
        assert_eq!(gram_basis(&s2, 4).len(), 6); // C(2+2,2)
        let s6 = VariableSpace::new(vec!["a", "b", "c", "d", "e", "f"]);
        assert_eq!(gram_basis(&s6, 6).len(), 84); // C(6+3,3)
    }

    #[test]
    fn x_squared_plus_one_is_sos_with_identity_gram() {
        let s = x_space();
        let x = Polynomial::var(&s, 0);
        let target = x.mul(&x).unwrap().add(&Polynomial::constant(&s, 1.0)).unwrap();
        let mut prog = SosProgram::new();
        prog.add_constraint(SosConstraint {
            name: "x2p1".into(),
            set: SemialgebraicSet::new(&s, vec![]),
            target: LinearPoly::from_poly(&target),
            degree_2l: 2,
        });
        let (sdp, layout) = prog.compile().unwrap();
        let sol = solve(&sdp, &SolveOptions::default());
        assert_eq!(sol.status, SdpStatus::Optimal);
        let cert = recover_certificate(&prog, &layout, &sol, 1e-7).unwrap();
        assert!(cert.residual <= 1e-7);
        // Gram is forced to the identity on basis {1, x}
        let g = &sol.primal_blocks[layout.constraints[0].multipliers[0].block];
        assert!((g[(0, 0)] - 1.0).abs() < 1e-6);
        assert!((g[(1, 1)] - 1.0).abs() < 1e-6);
        assert!(g[(0, 1)].abs() < 1e-6);
    }

    #[test]
    fn x_is_not_sos() {
        let s = x_space();
        let mut prog = SosProgram::new();
        prog.add_constraint(SosConstraint {
            name: "x".into(),
            set: SemialgebraicSet::new(&s, vec![]),
            target: LinearPoly::from_poly(&Polynomial::var(&s, 0)),
            degree_2l: 2,
        });
        let (sdp, _) = prog.compile().unwrap();
        let sol = solve(&sdp, &SolveOptions::default());
        assert_eq!(sol.status, SdpStatus::InfeasibleCertificate);
    }

    #[test]
    fn interval_nonnegativity_certificate() {
        // 1 − x² ≥ 0 on {(1−x)(1+x) ≥ 0} at 2l = 2: s_1 = 1, s_0 = 0
        let s = x_space();
        let x = Polynomial::var(&s, 0);
        let one = Polynomial::constant(&s, 1.0);
        let h = one.sub(&x.mul(&x).unwrap()).unwrap();
        let mut prog = SosProgram::new();
        prog.add_constraint(SosConstraint {
            name: "interval".into(),
            set: SemialgebraicSet::new(&s, vec![h.clone()]),
            target: LinearPoly::from_poly(&h),
            degree_2l: 2,
        });
        let (sdp, layout) = prog.compile().unwrap();
        let sol = solve(&sdp, &SolveOptions::default());
        assert_eq!(sol.status, SdpStatus::Optimal);
        let cert = recover_certificate(&prog, &layout, &sol, 1e-6).unwrap();
        // identity reproduced within tolerance
        assert!(cert.residual <= 1e-6);
        // membership soundness: target ≥ −1e−6 on sampled set points
        for i in 0..100 {
            let z = -1.0 + 2.0 * i as f64 / 99.0;
            assert!(h.eval(&[z]).unwrap() >= -1e-6);
        }
    }

    #[test]
    fn degree_overflow_rejected() {
        let s = x_space();
        let x = Polynomial::var(&s, 0);
        let x4 = x.mul(&x).unwrap().mul(&x).unwrap().mul(&x).unwrap();
        let mut prog = SosProgram::new();
        prog.add_constraint(SosConstraint {
            name: "overflow".into(),
            set: SemialgebraicSet::new(&s, vec![]),
            target: LinearPoly::from_poly(&x4),
            degree_2l: 2,
        });
        assert!(matches!(
            prog.compile(),
            Err(CompileError::DegreeOverflow { .. })
        ));
    }

    #[test]
    fn decision_polynomial_lower_bound() {
        // maximize γ s.t. x² − γ SOS → γ* = 0 (minimize −γ)
        let s = x_space();
        let x = Polynomial::var(&s, 0);
        let x2 = x.mul(&x).unwrap();
        let mut prog = SosProgram::new();
        let gamma = prog.add_decision("gamma", &s, 0);
        let g_lin = LinearPoly::from_decision(&prog.decisions[gamma]);
        let target = LinearPoly::from_poly(&x2).add(&g_lin.scale(-1.0));
        prog.add_constraint(SosConstraint {
            name: "lb".into(),
            set: SemialgebraicSet::new(&s, vec![]),
            target,
            degree_2l: 2,
        });
        prog.objective = vec![(0, -1.0)];
        let (sdp, layout) = prog.compile().unwrap();
        let sol = solve(&sdp, &SolveOptions::default());
        assert_eq!(sol.status, SdpStatus::Optimal);
        assert!(sol.free_values[0].abs() < 1e-6, "gamma {}", sol.free_values[0]);
        let cert = recover_certificate(&prog, &layout, &sol, 1e-6).unwrap();
        assert_eq!(cert.decisions.len(), 1);
    }

    #[test]
    fn perturbed_gram_rejected() {
        let s = x_space();
        let x = Polynomial::var(&s, 0);
        let target = x.mul(&x).unwrap().add(&Polynomial::constant(&s, 1.0)).unwrap();
        let mut prog = SosProgram::new();
        prog.add_constraint(SosConstraint {
            name: "x2p1".into(),
            set: SemialgebraicSet::new(&s, vec![]),
            target: LinearPoly::from_poly(&target),
            degree_2l: 2,
        });
        let (sdp, layout) = prog.compile().unwrap();
        let mut sol = solve(&sdp, &SolveOptions::default());
        sol.primal_blocks[0][(0, 0)] += 1e-3;
        let err = recover_certificate(&prog, &layout, &sol, 1e-7).unwrap_err();
        assert!(err.residual > 1e-4);
    }
}
