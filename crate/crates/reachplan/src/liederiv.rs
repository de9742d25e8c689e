//! Linear operators describing how polynomial test functions evolve along
//! the low-fidelity flow: the drift operator ∂v/∂t + Σ ∂v/∂x_i · f_{s,i}
//! and the disturbance-coupling operator Σ ∂v/∂x_i · g_i.
//!
//! Operators return fully expanded polynomials; the SOS compiler needs
//! explicit coefficients.

use crate::polyalg::{PolyError, Polynomial, VariableSpace};

/// Names of the shared-state coordinates, in evolution order.
pub const SHARED_VARS: [&str; 3] = ["x", "y", "th"];

fn state_indices(space: &VariableSpace, states: &[String]) -> Result<Vec<usize>, PolyError> {
    states
        .iter()
        .map(|name| {
            space
                .index_of(name)
                .ok_or_else(|| PolyError::UnknownVariable(name.to_string()))
        })
        .collect()
}

/// Drift operator over an explicit state list:
/// time_weight·∂v/∂t + Σ_i ∂v/∂x_i · field_i. The `time_weight` carries the
/// dz_t/dt factor when working in affinely rescaled coordinates.
pub fn lie_drift(
    v: &Polynomial,
    field: &[Polynomial],
    states: &[String],
    time_weight: f64,
) -> Result<Polynomial, PolyError> {
    assert_eq!(field.len(), states.len());
    let space = v.space();
    let t_idx = space
        .index_of("t")
        .ok_or_else(|| PolyError::UnknownVariable("t".to_string()))?;
    let idx = state_indices(space, states)?;
    let mut out = v.partial_derivative(t_idx).scale(time_weight);
    for (i, f) in field.iter().enumerate() {
        let f = f.embed(space)?;
        out = out.add(&v.partial_derivative(idx[i]).mul(&f)?)?;
    }
    Ok(out)
}

/// Disturbance-coupling operator over an explicit state list:
/// Σ_i ∂v/∂x_i · g_i (no time derivative).
pub fn lie_coupling(
    v: &Polynomial,
    g: &[Polynomial],
    states: &[String],
) -> Result<Polynomial, PolyError> {
    assert_eq!(g.len(), states.len());
    let space = v.space();
    let idx = state_indices(space, states)?;
    let mut out = Polynomial::zero(space);
    for (i, gi) in g.iter().enumerate() {
        let gi = gi.embed(space)?;
        out = out.add(&v.partial_derivative(idx[i]).mul(&gi)?)?;
    }
    Ok(out)
}

fn shared_names() -> Vec<String> {
    SHARED_VARS.iter().map(|s| s.to_string()).collect()
}

/// Drift operator ∂v/∂t + Σ ∂v/∂x_i · f_{s,i} for the planar vehicle's
/// shared states (x, y, th).
pub fn lie_f(v: &Polynomial, f_s: &[Polynomial; 3]) -> Result<Polynomial, PolyError> {
    lie_drift(v, f_s, &shared_names(), 1.0)
}

/// Disturbance-coupling operator Σ ∂v/∂x_i · g_i for (x, y, th).
pub fn lie_g(v: &Polynomial, g: &[Polynomial; 3]) -> Result<Polynomial, PolyError> {
    lie_coupling(v, g, &shared_names())
}

/// Per-component products ∂v/∂x_i · g_i, before summation. Used by sampling
/// checks that need the componentwise disturbance coupling.
pub fn lie_g_components(
    v: &Polynomial,
    g: &[Polynomial; 3],
) -> Result<[Polynomial; 3], PolyError> {
    let space = v.space();
    let idx = state_indices(space, &shared_names())?;
    let mut parts = Vec::with_capacity(3);
    for (i, gi) in g.iter().enumerate() {
        let gi = gi.embed(space)?;
        parts.push(v.partial_derivative(idx[i]).mul(&gi)?);
    }
    Ok([parts.remove(0), parts.remove(0), parts.remove(0)])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polyalg::MultiIndex;
    use crate::vehicle::{
        self, dubins_poly, error_envelope_default, SharedState, TrajParams, VehicleParams,
    };
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn space() -> VariableSpace {
        VehicleParams::full_space()
    }

    #[test]
    fn lie_f_examples() {
        let s = space();
        let f_s = dubins_poly(&s);
        // v = t → 1
        let t = Polynomial::var_named(&s, "t").unwrap();
        assert_eq!(lie_f(&t, &f_s).unwrap(), Polynomial::constant(&s, 1.0));
        // v = x → k2(1 − th²/2)
        let x = Polynomial::var_named(&s, "x").unwrap();
        assert_eq!(lie_f(&x, &f_s).unwrap(), f_s[0]);
        // v = th² → 2 th k1
        let th = Polynomial::var_named(&s, "th").unwrap();
        let v = th.mul(&th).unwrap();
        let k1 = Polynomial::var_named(&s, "k1").unwrap();
        assert_eq!(lie_f(&v, &f_s).unwrap(), th.mul(&k1).unwrap().scale(2.0));
    }

    #[test]
    fn lie_g_examples() {
        let s = space();
        let p = VehicleParams::default();
        let env = error_envelope_default(1.0, &p);
        let g = env.g.clone();
        // v = t → 0
        let t = Polynomial::var_named(&s, "t").unwrap();
        assert!(lie_g(&t, &g).unwrap().is_zero());
        // v = th → (t−1)^4
        let th = Polynomial::var_named(&s, "th").unwrap();
        let got = lie_g(&th, &g).unwrap();
        assert_eq!(got, g[2].embed(&s).unwrap());
        // v = x → (t−1)²(1 − th²/2)
        let x = Polynomial::var_named(&s, "x").unwrap();
        assert_eq!(lie_g(&x, &g).unwrap(), g[0].embed(&s).unwrap());
    }

    fn random_poly(s: &VariableSpace, deg: u32, rng: &mut ChaCha8Rng) -> Polynomial {
        let monos = crate::polyalg::monomials_up_to(s.count(), deg);
        let mut terms: Vec<(MultiIndex, f64)> = Vec::new();
        for m in monos {
            if rng.gen_bool(0.4) {
                terms.push((m, rng.gen_range(-1.0..1.0)));
            }
        }
        Polynomial::from_terms(s, terms)
    }

    #[test]
    fn lie_f_is_linear() {
        let s = space();
        let f_s = dubins_poly(&s);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let v1 = random_poly(&s, 4, &mut rng);
            let v2 = random_poly(&s, 4, &mut rng);
            let (a, b) = (rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
            let lhs = lie_f(&v1.scale(a).add(&v2.scale(b)).unwrap(), &f_s).unwrap();
            let rhs = lie_f(&v1, &f_s)
                .unwrap()
                .scale(a)
                .add(&lie_f(&v2, &f_s).unwrap().scale(b))
                .unwrap();
            let diff = lhs.sub(&rhs).unwrap();
            assert!(diff.max_abs_coefficient() <= 1e-12);
        }
    }

    #[test]
    fn lie_f_matches_chain_rule_along_flow() {
        // d/dt v(t, x(t), k) along the undisturbed polynomial Dubins flow,
        // by central differences on an RK4 trajectory, must equal lie_f(v).
        let s = space();
        let f_s = dubins_poly(&s);
        // fine step so the central-difference truncation error sits below
        // the 1e−5 comparison tolerance
        let p = VehicleParams { dt: 1e-3, ..VehicleParams::default() };
        let env = error_envelope_default(1.0, &p);
        let zero_d = vehicle::DisturbanceSignal::constant([0.0; 3]);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..5 {
            let v = random_poly(&s, 4, &mut rng);
            let k = TrajParams {
                k1: rng.gen_range(-0.5..0.5),
                k2: rng.gen_range(0.0..1.0),
            };
            let init = SharedState {
                x: rng.gen_range(-0.8..-0.6),
                y: rng.gen_range(-0.05..0.05),
                th: 0.0,
            };
            let trace = vehicle::disturbed_trace(init, k, &env, &zero_d, &p, 1.0);
            let dt = p.dt;
            let val = |i: usize| {
                let st = trace[i];
                v.eval(&[i as f64 * dt, st.x, st.y, st.th, k.k1, k.k2]).unwrap()
            };
            for i in (100..900).step_by(170) {
                let fd = (val(i + 1) - val(i - 1)) / (2.0 * dt);
                let st = trace[i];
                let an = lie_f(&v, &f_s)
                    .unwrap()
                    .eval(&[i as f64 * dt, st.x, st.y, st.th, k.k1, k.k2])
                    .unwrap();
                assert!(
                    (fd - an).abs() <= 1e-5 * (1.0 + an.abs()),
                    "fd {fd} vs lie {an}"
                );
            }
        }
    }

    #[test]
    fn space_without_time_is_rejected() {
        let s = VariableSpace::new(vec!["x", "y", "th"]);
        let f_s = dubins_poly(&space());
        let v = Polynomial::var_named(&s, "x").unwrap();
        assert!(lie_f(&v, &f_s).is_err());
    }
}
