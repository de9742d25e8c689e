//! Forward-reachable-set certificates.
//!
//! Builds the degree-truncated relaxation of the reachability linear
//! program for a disturbed polynomial system: find (v, w, q) minimizing
//! ∫ w over the state-parameter box subject to seven quadratic-module
//! membership constraints. Any feasible w over-approximates the forward
//! reachable set through its 1-superlevel set: along every admissible
//! trajectory v cannot increase, v starts non-positive on the initial set,
//! and w ≥ 1 − v everywhere, so reached points satisfy w ≥ 1.
//!
//! All compilation happens in affinely rescaled coordinates (every box
//! mapped onto [−1, 1]) for interior-point conditioning; certificates store
//! the maps so online modules work in physical units.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::liederiv::{lie_coupling, lie_drift};
use crate::polyalg::{
    box_moments, AffineMap1, BoxDomain, PolyError, Polynomial, VariableSpace,
};
use crate::sdpsolve::{self, SdpStatus, SolveOptions};
use crate::soscompile::{
    recover_certificate, CompileError, LinearPoly, SemialgebraicSet, SosConstraint, SosProgram,
};
use crate::vehicle::{
    self, closed_loop_trace, dubins_poly, error_envelope_default, DisturbanceSignal, SharedState,
    TrajParams, UnicycleState, VehicleParams,
};

#[derive(Debug, Error)]
pub enum FrsError {
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error(transparent)]
    Compile(#[from] CompileError),
    #[error("solver returned {status:?}; refusing to emit a certificate")]
    NotOptimal { status: SdpStatus },
    #[error("recovered certificate rejected: {0}")]
    BadCertificate(String),
    #[error("degree bound {given} below required minimum {required}")]
    DegreeTooSmall { given: u32, required: u32 },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization: {0}")]
    Serde(#[from] serde_json::Error),
}

/// A disturbed polynomial system ẋ = f(t, x, k) + g(t, x) ⊙ d(t) over box
/// domains, in physical coordinates. `full_space` orders variables as
/// (t, states…, params…).
#[derive(Debug, Clone)]
pub struct FrsSystem {
    pub full_space: VariableSpace,
    pub state_names: Vec<String>,
    pub param_names: Vec<String>,
    pub field: Vec<Polynomial>,
    pub envelope: Vec<Polynomial>,
    pub horizon: f64,
    pub xs_box: BoxDomain,
    pub x0_box: BoxDomain,
    pub k_box: BoxDomain,
}

impl FrsSystem {
    /// The planar vehicle: Taylor Dubins field and the reference envelope.
    pub fn unicycle(p: &VehicleParams, horizon: f64) -> Self {
        let full_space = VehicleParams::full_space();
        let field = dubins_poly(&full_space).to_vec();
        let env = error_envelope_default(horizon, p);
        FrsSystem {
            full_space,
            state_names: vec!["x".into(), "y".into(), "th".into()],
            param_names: vec!["k1".into(), "k2".into()],
            field,
            envelope: env.g.to_vec(),
            horizon,
            xs_box: p.xs_box(),
            x0_box: p.x0_box(),
            k_box: p.k_box(),
        }
    }

    pub fn n_states(&self) -> usize {
        self.state_names.len()
    }
}

/// Affine maps (physical = scale·z + offset), one per full-space variable.
fn scaling_maps(sys: &FrsSystem) -> Vec<AffineMap1> {
    let mut maps = vec![AffineMap1::unit_to_interval(0.0, sys.horizon)];
    for i in 0..sys.n_states() {
        maps.push(AffineMap1::unit_to_interval(sys.xs_box.low(i), sys.xs_box.high(i)));
    }
    for i in 0..sys.param_names.len() {
        maps.push(AffineMap1::unit_to_interval(sys.k_box.low(i), sys.k_box.high(i)));
    }
    maps
}

fn normalized(h: Polynomial) -> Polynomial {
    let m = h.max_abs_coefficient();
    if m > 0.0 {
        h.scale(1.0 / m)
    } else {
        h
    }
}

/// The compiled program together with handles needed for recovery.
pub struct FrsProgram {
    pub program: SosProgram,
    pub v_index: usize,
    pub w_index: usize,
    pub q_index: usize,
    /// Space of (states…, params…) used by w and the initial-set constraint.
    pub reduced_space: VariableSpace,
    pub maps: Vec<AffineMap1>,
    pub degree_2l: u32,
}

/// Assemble the seven membership constraints of the degree-`degree`
/// relaxation in scaled coordinates:
/// (i) −Lv − q, (ii) L_g v + q, (iii) −L_g v + q, (iv) q on the full
/// time-state-parameter box; (v) −v(0,·) on the initial box × params;
/// (vi) w on states × params; (vii) w + v − 1 on the full box. Objective:
/// minimize the Lebesgue-moment functional of w.
pub fn build_program(sys: &FrsSystem, degree: u32) -> Result<FrsProgram, FrsError> {
    let n_s = sys.n_states();
    let n_k = sys.param_names.len();
    let full = &sys.full_space;
    let maps = scaling_maps(sys);

    // scaled dynamics: F_i(z) = f_i(phys(z)) / scale_i, likewise for g
    let subst: Vec<AffineMap1> = maps.clone();
    let mut field_scaled = Vec::with_capacity(n_s);
    let mut env_scaled = Vec::with_capacity(n_s);
    for i in 0..n_s {
        let fi = sys.field[i].embed(full)?.affine_substitute(&subst)?;
        field_scaled.push(fi.scale(1.0 / maps[1 + i].scale));
        let gi = sys.envelope[i].embed(full)?.affine_substitute(&subst)?;
        env_scaled.push(gi.scale(1.0 / maps[1 + i].scale));
    }
    let time_weight = 1.0 / maps[0].scale; // dz_t/dt

    // degree audit: the drift and coupling images of a degree-`degree` test
    // function fix the minimum even truncation degree
    let probe = {
        let monos = crate::polyalg::monomials_up_to(full.count(), degree);
        Polynomial::from_terms(full, monos.into_iter().map(|m| (m, 1.0)))
    };
    let d_drift = lie_drift(&probe, &field_scaled, &sys.state_names, time_weight)?
        .total_degree();
    let d_coupling = lie_coupling(&probe, &env_scaled, &sys.state_names)?.total_degree();
    let required = d_drift.max(d_coupling).max(degree);
    let degree_2l = required + (required & 1);

    // scaled domain sets
    let one = |name: &str| -> Result<Polynomial, PolyError> {
        let z = Polynomial::var_named(full, name)?;
        Polynomial::constant(full, 1.0).sub(&z.mul(&z)?)
    };
    let mut full_gens = vec![one("t")?];
    for name in sys.state_names.iter().chain(&sys.param_names) {
        full_gens.push(one(name)?);
    }
    let full_set = SemialgebraicSet::new(full, full_gens.clone());

    let reduced_names: Vec<String> = sys
        .state_names
        .iter()
        .chain(&sys.param_names)
        .cloned()
        .collect();
    let reduced_space = VariableSpace::new(reduced_names.clone());
    let reduced_set = SemialgebraicSet::new(
        &reduced_space,
        reduced_names
            .iter()
            .map(|n| {
                let z = Polynomial::var_named(&reduced_space, n).unwrap();
                Polynomial::constant(&reduced_space, 1.0)
                    .sub(&z.mul(&z).unwrap())
                    .unwrap()
            })
            .collect(),
    );
    // initial set: X_0 as a sub-box in scaled state coordinates, params full
    let mut init_gens = Vec::with_capacity(n_s + n_k);
    for i in 0..n_s {
        let inv = maps[1 + i].inverse();
        let z_lo = inv.apply(sys.x0_box.low(i));
        let z_hi = inv.apply(sys.x0_box.high(i));
        let z = Polynomial::var_named(&reduced_space, &sys.state_names[i])?;
        let hi = Polynomial::constant(&reduced_space, z_hi);
        let lo = Polynomial::constant(&reduced_space, z_lo);
        init_gens.push(normalized(hi.sub(&z)?.mul(&z.sub(&lo)?)?));
    }
    for name in &sys.param_names {
        let z = Polynomial::var_named(&reduced_space, name)?;
        init_gens.push(Polynomial::constant(&reduced_space, 1.0).sub(&z.mul(&z)?)?);
    }
    let init_set = SemialgebraicSet::new(&reduced_space, init_gens);

    // decision polynomials
    let mut program = SosProgram::new();
    let v_index = program.add_decision("v", full, degree);
    let w_index = program.add_decision("w", &reduced_space, degree);
    let q_index = program.add_decision("q", full, degree);

    let v_dp = program.decisions[v_index].clone();
    let w_dp = program.decisions[w_index].clone();
    let q_dp = program.decisions[q_index].clone();

    let lv = LinearPoly::from_decision_mapped(&v_dp, |m| {
        lie_drift(m, &field_scaled, &sys.state_names, time_weight)
    })?;
    let lgv = LinearPoly::from_decision_mapped(&v_dp, |m| {
        lie_coupling(m, &env_scaled, &sys.state_names)
    })?;
    let q_lin = LinearPoly::from_decision(&q_dp);
    let v_lin = LinearPoly::from_decision(&v_dp);
    let w_lin = LinearPoly::from_decision(&w_dp);
    let w_in_full = LinearPoly::from_decision_mapped(&w_dp, |m| m.embed(full))?;

    let t_idx = full.index_of("t").expect("t");
    // v at the initial instant: t_phys = 0 is z_t = −1
    let v_at_zero = LinearPoly::from_decision_mapped(&v_dp, |m| {
        m.substitute_value(t_idx, -1.0).embed(&reduced_space)
    })?;

    let c = |name: &str, target: LinearPoly, set: &SemialgebraicSet| SosConstraint {
        name: name.into(),
        set: set.clone(),
        target,
        degree_2l,
    };
    program.add_constraint(c(
        "drift",
        lv.scale(-1.0).add(&q_lin.scale(-1.0)),
        &full_set,
    ));
    program.add_constraint(c("coupling_plus", lgv.add(&q_lin), &full_set));
    program.add_constraint(c("coupling_minus", lgv.scale(-1.0).add(&q_lin), &full_set));
    program.add_constraint(c("q_nonneg", q_lin.clone(), &full_set));
    program.add_constraint(c("initial", v_at_zero.scale(-1.0), &init_set));
    program.add_constraint(c("w_nonneg", w_lin.clone(), &reduced_set));
    program.add_constraint(c(
        "w_dominates",
        w_in_full
            .add(&v_lin)
            .add_poly(&Polynomial::constant(full, -1.0)),
        &full_set,
    ));

    // objective: ∫ w over the scaled state-parameter box
    let unit_reduced = BoxDomain::new(
        &reduced_space,
        &vec![(-1.0, 1.0); reduced_space.count()],
    )
    .expect("unit box");
    let moments = box_moments(&unit_reduced, degree);
    program.set_moment_objective(w_index, &moments, 1.0);

    Ok(FrsProgram {
        program,
        v_index,
        w_index,
        q_index,
        reduced_space,
        maps,
        degree_2l,
    })
}

/// Solver diagnostics embedded in the certificate file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveDiagnostics {
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub duality_gap: f64,
    pub objective: f64,
    pub certificate_residual: f64,
    pub solve_seconds: f64,
}

/// The offline→online artifact: (v, w, q) in scaled coordinates plus the
/// domains, degrees, and affine maps needed to use them in physical units.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrsCertificate {
    pub schema_version: u32,
    pub tool_version: String,
    pub config_hash: String,
    pub horizon: f64,
    pub decision_degree: u32,
    pub degree_2l: u32,
    pub variables: Vec<String>,
    pub state_names: Vec<String>,
    pub param_names: Vec<String>,
    /// physical = scale·z + offset, aligned with `variables`.
    pub scaling: Vec<AffineMap1>,
    pub xs_box: BoxDomain,
    pub x0_box: BoxDomain,
    pub k_box: BoxDomain,
    pub envelope_id: String,
    /// Certificate polynomials over scaled coordinates.
    pub v: Polynomial,
    pub w: Polynomial,
    pub q: Polynomial,
    pub diagnostics: SolveDiagnostics,
}

impl FrsCertificate {
    /// Scale a physical (state, param) point into w's coordinates.
    pub fn scale_reduced(&self, states: &[f64], params: &[f64]) -> Vec<f64> {
        let n_s = self.state_names.len();
        let mut z = Vec::with_capacity(n_s + params.len());
        for (i, &s) in states.iter().enumerate() {
            z.push(self.scaling[1 + i].inverse().apply(s));
        }
        for (j, &k) in params.iter().enumerate() {
            z.push(self.scaling[1 + n_s + j].inverse().apply(k));
        }
        z
    }

    pub fn eval_w(&self, states: &[f64], params: &[f64]) -> f64 {
        self.w
            .eval(&self.scale_reduced(states, params))
            .expect("w arity")
    }

    pub fn eval_v(&self, t: f64, states: &[f64], params: &[f64]) -> f64 {
        let mut z = vec![self.scaling[0].inverse().apply(t)];
        z.extend(self.scale_reduced(states, params));
        self.v.eval(&z).expect("v arity")
    }

    /// w restricted to a fixed physical state, as a polynomial over scaled
    /// parameter coordinates.
    pub fn w_at_state(&self, states: &[f64]) -> Polynomial {
        let mut w = self.w.clone();
        for (i, &s) in states.iter().enumerate() {
            let z = self.scaling[1 + i].inverse().apply(s);
            w = w.substitute_value(i, z);
        }
        // drop the now-constant state variables, keeping params
        let param_space = VariableSpace::new(self.param_names.clone());
        w.embed(&param_space).expect("state-free after substitution")
    }

    pub fn save(&self, path: &std::path::Path) -> Result<(), FrsError> {
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self, FrsError> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Solve the relaxation and assemble the certificate. Refuses to emit an
/// artifact unless the solver reports optimality and the recovered
/// coefficient identity is tight.
pub fn compute_frs(
    sys: &FrsSystem,
    degree: u32,
    opts: &SolveOptions,
    envelope_id: &str,
) -> Result<FrsCertificate, FrsError> {
    let built = build_program(sys, degree)?;
    let (sdp, layout) = built.program.compile()?;
    let start = std::time::Instant::now();
    let sol = sdpsolve::solve(&sdp, opts);
    let elapsed = start.elapsed().as_secs_f64();
    if sol.status != SdpStatus::Optimal {
        return Err(FrsError::NotOptimal { status: sol.status });
    }
    let cert = recover_certificate(&built.program, &layout, &sol, 1e-4)
        .map_err(|e| FrsError::BadCertificate(e.to_string()))?;
    let diagnostics = SolveDiagnostics {
        iterations: sol.iterations,
        primal_residual: sol.primal_residual,
        dual_residual: sol.dual_residual,
        duality_gap: sol.duality_gap,
        objective: sol.primal_objective,
        certificate_residual: cert.residual,
        solve_seconds: elapsed,
    };
    Ok(FrsCertificate {
        schema_version: 1,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash: String::new(),
        horizon: sys.horizon,
        decision_degree: degree,
        degree_2l: built.degree_2l,
        variables: sys.full_space.names().to_vec(),
        state_names: sys.state_names.clone(),
        param_names: sys.param_names.clone(),
        scaling: built.maps,
        xs_box: sys.xs_box.clone(),
        x0_box: sys.x0_box.clone(),
        k_box: sys.k_box.clone(),
        envelope_id: envelope_id.to_string(),
        v: cert.decisions[built.v_index].clone(),
        w: cert.decisions[built.w_index].clone(),
        q: cert.decisions[built.q_index].clone(),
        diagnostics,
    })
}

/// Convenience wrapper for the reference vehicle.
pub fn compute_unicycle_frs(
    p: &VehicleParams,
    horizon: f64,
    degree: u32,
    opts: &SolveOptions,
) -> Result<FrsCertificate, FrsError> {
    let sys = FrsSystem::unicycle(p, horizon);
    let id = format!("verr{}-thdoterr{}", p.v_err_power, p.thdot_err_power);
    compute_frs(&sys, degree, opts, &id)
}

// --- validation ----------------------------------------------------------------

/// Deterministic family of piecewise-constant disturbances for validation:
/// the constant extremes, componentwise bang-bang patterns, and random
/// interior values with up to 4 breakpoints.
pub fn disturbance_family(horizon: f64, count: usize, seed: u64) -> Vec<DisturbanceSignal> {
    let mut out = vec![
        DisturbanceSignal::constant([0.0; 3]),
        DisturbanceSignal::constant([1.0; 3]),
        DisturbanceSignal::constant([-1.0; 3]),
        DisturbanceSignal::constant([1.0, -1.0, 1.0]),
        DisturbanceSignal::constant([-1.0, 1.0, -1.0]),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    while out.len() < count {
        let n_breaks = rng.gen_range(0..=4usize);
        let mut breaks: Vec<f64> = (0..n_breaks)
            .map(|_| rng.gen_range(0.05..horizon * 0.95))
            .collect();
        breaks.sort_by(|a, b| a.partial_cmp(b).unwrap());
        breaks.dedup_by(|a, b| (*a - *b).abs() < 1e-6);
        let values: Vec<[f64; 3]> = (0..breaks.len() + 1)
            .map(|_| {
                let mut v = [0.0; 3];
                for c in &mut v {
                    *c = if rng.gen_bool(0.5) {
                        if rng.gen_bool(0.5) {
                            1.0
                        } else {
                            -1.0
                        }
                    } else {
                        rng.gen_range(-1.0..1.0)
                    };
                }
                v
            })
            .collect();
        out.push(DisturbanceSignal::new(breaks, values));
    }
    out.truncate(count);
    out
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidationReport {
    pub disturbed_trajectories: usize,
    pub closed_loop_trajectories: usize,
    pub points_checked: usize,
    pub violations: usize,
    /// Smallest w − (1 − tol) margin observed (negative on violation).
    pub worst_margin: f64,
    /// Trajectories that left the state box before the horizon; points
    /// beyond the exit are outside the certified domain and not asserted.
    pub domain_exits: usize,
    pub tolerance: f64,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// Replays disturbed low-fidelity trajectories and tracked unicycle
/// trajectories, asserting w ≥ 1 − tol at every sample while the
/// trajectory remains inside the state box. Sampling is one-sided:
/// violations disprove the certificate; their absence does not prove it.
pub fn validate_certificate(
    cert: &FrsCertificate,
    p: &VehicleParams,
    n_disturbed: usize,
    n_closed_loop: usize,
    tol: f64,
    seed: u64,
) -> ValidationReport {
    let env = error_envelope_default(cert.horizon, p);
    let family = disturbance_family(cert.horizon, 16.max(n_disturbed / 16), seed ^ 0xd157);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    struct Task {
        init: SharedState,
        k: TrajParams,
        d_index: usize,
    }
    let tasks: Vec<Task> = (0..n_disturbed)
        .map(|i| Task {
            init: SharedState {
                x: rng.gen_range(p.x0_x_range.0..=p.x0_x_range.1),
                y: rng.gen_range(p.x0_y_range.0..=p.x0_y_range.1),
                th: rng.gen_range(p.x0_th_range.0..=p.x0_th_range.1),
            },
            k: TrajParams {
                k1: rng.gen_range(p.k1_range.0..=p.k1_range.1),
                k2: rng.gen_range(p.k2_range.0..=p.k2_range.1),
            },
            d_index: i % family.len(),
        })
        .collect();

    let disturbed: Vec<(usize, usize, f64, bool)> = tasks
        .par_iter()
        .map(|task| {
            let trace =
                vehicle::disturbed_trace(task.init, task.k, &env, &family[task.d_index], p, cert.horizon);
            let mut checked = 0usize;
            let mut violations = 0usize;
            let mut worst = f64::INFINITY;
            let mut exited = false;
            for s in &trace {
                if !p.xs_contains(*s) {
                    exited = true;
                    break;
                }
                let w = cert.eval_w(&[s.x, s.y, s.th], &[task.k.k1, task.k.k2]);
                let margin = w - (1.0 - tol);
                worst = worst.min(margin);
                checked += 1;
                if margin < 0.0 {
                    violations += 1;
                }
            }
            (checked, violations, worst, exited)
        })
        .collect();

    // tracked high-fidelity replays: worst-case initial offsets included
    let cl_tasks: Vec<(UnicycleState, TrajParams)> = (0..n_closed_loop)
        .map(|_| {
            let k = TrajParams {
                k1: rng.gen_range(p.k1_range.0..=p.k1_range.1),
                k2: rng.gen_range(p.k2_range.0..=p.k2_range.1),
            };
            let init = UnicycleState {
                x: rng.gen_range(p.x0_x_range.0..=p.x0_x_range.1),
                y: rng.gen_range(p.x0_y_range.0..=p.x0_y_range.1),
                th: rng.gen_range(p.x0_th_range.0..=p.x0_th_range.1),
                thdot: rng.gen_range(p.k1_range.0..=p.k1_range.1),
                v: rng.gen_range(0.0..=p.v_max),
            };
            (init, k)
        })
        .collect();
    let closed: Vec<(usize, usize, f64, bool)> = cl_tasks
        .par_iter()
        .map(|&(init, k)| {
            let trace = closed_loop_trace(init, k, p, cert.horizon);
            let mut checked = 0usize;
            let mut violations = 0usize;
            let mut worst = f64::INFINITY;
            let mut exited = false;
            for s in &trace {
                let shared = s.shared();
                if !p.xs_contains(shared) {
                    exited = true;
                    break;
                }
                let w = cert.eval_w(&[shared.x, shared.y, shared.th], &[k.k1, k.k2]);
                let margin = w - (1.0 - tol);
                worst = worst.min(margin);
                checked += 1;
                if margin < 0.0 {
                    violations += 1;
                }
            }
            (checked, violations, worst, exited)
        })
        .collect();

    let mut report = ValidationReport {
        disturbed_trajectories: n_disturbed,
        closed_loop_trajectories: n_closed_loop,
        points_checked: 0,
        violations: 0,
        worst_margin: f64::INFINITY,
        domain_exits: 0,
        tolerance: tol,
    };
    for (checked, violations, worst, exited) in disturbed.into_iter().chain(closed) {
        report.points_checked += checked;
        report.violations += violations;
        report.worst_margin = report.worst_margin.min(worst);
        report.domain_exits += exited as usize;
    }
    report
}

/// Sampled feasibility identities of a certificate: the constraint targets,
/// realized from (v, w, q), must be non-negative on their domains. Returns
/// the most negative value seen across all constraints (≥ −1e−6 expected).
pub fn sampled_feasibility(sys: &FrsSystem, cert: &FrsCertificate, samples: usize, seed: u64) -> f64 {
    let built = build_program(sys, cert.decision_degree).expect("rebuild");
    let full = &sys.full_space;
    let scaled_field: Vec<Polynomial> = {
        let maps = &built.maps;
        (0..sys.n_states())
            .map(|i| {
                sys.field[i]
                    .embed(full)
                    .unwrap()
                    .affine_substitute(maps)
                    .unwrap()
                    .scale(1.0 / maps[1 + i].scale)
            })
            .collect()
    };
    let scaled_env: Vec<Polynomial> = {
        let maps = &built.maps;
        (0..sys.n_states())
            .map(|i| {
                sys.envelope[i]
                    .embed(full)
                    .unwrap()
                    .affine_substitute(maps)
                    .unwrap()
                    .scale(1.0 / maps[1 + i].scale)
            })
            .collect()
    };
    let time_weight = 1.0 / built.maps[0].scale;
    let v_full = cert.v.clone();
    let lv = lie_drift(&v_full, &scaled_field, &sys.state_names, time_weight).unwrap();
    let lgv = lie_coupling(&v_full, &scaled_env, &sys.state_names).unwrap();
    let n = full.count();
    let t_idx = full.index_of("t").unwrap();
    let v0 = cert.v.substitute_value(t_idx, -1.0).embed(&built.reduced_space).unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::INFINITY;
    let x0_scaled: Vec<(f64, f64)> = (0..sys.n_states())
        .map(|i| {
            let inv = built.maps[1 + i].inverse();
            (inv.apply(sys.x0_box.low(i)), inv.apply(sys.x0_box.high(i)))
        })
        .collect();
    for _ in 0..samples {
        let z: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let zr = &z[1..];
        let w = cert.w.eval(zr).unwrap();
        let v = cert.v.eval(&z).unwrap();
        let q = cert.q.eval(&z).unwrap();
        let lv_v = lv.eval(&z).unwrap();
        let lg_v = lgv.eval(&z).unwrap();
        worst = worst
            .min(-lv_v - q)
            .min(q - lg_v.abs())
            .min(q)
            .min(w)
            .min(w + v - 1.0);
        // initial-set constraint sampled inside the scaled X_0 sub-box
        let mut z0: Vec<f64> = x0_scaled
            .iter()
            .map(|&(lo, hi)| rng.gen_range(lo..=hi))
            .collect();
        for _ in 0..sys.param_names.len() {
            z0.push(rng.gen_range(-1.0..1.0));
        }
        worst = worst.min(-v0.eval(&z0).unwrap());
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    /// 1-D sanity system: ẋ = k + 0.1·d on x ∈ [−1,1], k ∈ [−0.5,0.5],
    /// X_0 = [−0.1, 0.1], T = 1.
    fn one_d_system() -> FrsSystem {
        let full = VariableSpace::new(vec!["t", "x", "k"]);
        let x_space = VariableSpace::new(vec!["x"]);
        let k_space = VariableSpace::new(vec!["k"]);
        FrsSystem {
            full_space: full.clone(),
            state_names: vec!["x".into()],
            param_names: vec!["k".into()],
            field: vec![Polynomial::var_named(&full, "k").unwrap()],
            envelope: vec![Polynomial::constant(&full, 0.1)],
            horizon: 1.0,
            xs_box: BoxDomain::new(&x_space, &[(-1.0, 1.0)]).unwrap(),
            x0_box: BoxDomain::new(&x_space, &[(-0.1, 0.1)]).unwrap(),
            k_box: BoxDomain::new(&k_space, &[(-0.5, 0.5)]).unwrap(),
        }
    }

    /// Interval-arithmetic reachability oracle for the 1-D system: the set
    /// of x reachable at parameter k within t ∈ [0, 1].
    fn one_d_reachable(k: f64) -> (f64, f64) {
        let lo = -0.1 + (k - 0.1).min(0.0);
        let hi = 0.1 + (k + 0.1).max(0.0);
        (lo, hi)
    }

    #[test]
    fn one_d_frs_covers_reachable_interval() {
        let sys = one_d_system();
        let cert = compute_frs(&sys, 4, &SolveOptions::default(), "const-0.1").unwrap();
        assert!(cert.diagnostics.certificate_residual <= 1e-4);
        // every strictly interior reachable point must satisfy w ≥ 1 − 1e−6
        for ki in 0..21 {
            let k = -0.5 + ki as f64 / 20.0;
            let (lo, hi) = one_d_reachable(k);
            for xi in 0..33 {
                let pad = 1e-3;
                let x = (lo + pad) + (hi - lo - 2.0 * pad) * xi as f64 / 32.0;
                let w = cert.eval_w(&[x], &[k]);
                assert!(
                    w >= 1.0 - 1e-6,
                    "w({x:.3}, {k:.3}) = {w} below 1 on reachable set"
                );
            }
        }
        // far outside the reachable set the approximation must dip below 1
        let w_out = cert.eval_w(&[0.95], &[-0.5]);
        assert!(w_out < 1.0, "w at unreachable point = {w_out}");
    }

    #[test]
    fn one_d_degree_increase_tightens_objective() {
        let sys = one_d_system();
        let c4 = compute_frs(&sys, 4, &SolveOptions::default(), "c").unwrap();
        let c6 = compute_frs(&sys, 6, &SolveOptions::default(), "c").unwrap();
        assert!(
            c6.diagnostics.objective <= c4.diagnostics.objective + 1e-7,
            "deg 6 objective {} vs deg 4 {}",
            c6.diagnostics.objective,
            c4.diagnostics.objective
        );
    }

    #[test]
    fn one_d_feasibility_identities_sampled() {
        let sys = one_d_system();
        let cert = compute_frs(&sys, 4, &SolveOptions::default(), "c").unwrap();
        let worst = sampled_feasibility(&sys, &cert, 2000, 11);
        assert!(worst >= -1e-6, "sampled constraint violation {worst}");
    }

    #[test]
    fn certificate_file_round_trip_bitwise() {
        let sys = one_d_system();
        let cert = compute_frs(&sys, 4, &SolveOptions::default(), "c").unwrap();
        let dir = std::env::temp_dir().join("reachplan-test-cert");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("cert.json");
        cert.save(&path).unwrap();
        let loaded = FrsCertificate::load(&path).unwrap();
        assert_eq!(cert.v, loaded.v);
        assert_eq!(cert.w, loaded.w);
        assert_eq!(cert.q, loaded.q);
        let again = dir.join("cert2.json");
        loaded.save(&again).unwrap();
        assert_eq!(
            std::fs::read(&path).unwrap(),
            std::fs::read(&again).unwrap()
        );
    }

    #[test]
    fn unicycle_program_shape() {
        let p = VehicleParams::default();
        let sys = FrsSystem::unicycle(&p, 1.0);
        let built = build_program(&sys, 4).unwrap();
        assert_eq!(built.program.constraints.len(), 7);
        assert_eq!(built.degree_2l, 8);
        // objective pairs w's coefficients with unit-box moments
        let w_dp = &built.program.decisions[built.w_index];
        assert_eq!(built.program.objective.len(), w_dp.num_coeffs());
        let unit = BoxDomain::new(
            &built.reduced_space,
            &vec![(-1.0, 1.0); built.reduced_space.count()],
        )
        .unwrap();
        let moments = box_moments(&unit, 4);
        for (i, (var, coef)) in built.program.objective.iter().enumerate() {
            assert_eq!(*var, w_dp.first_var + i);
            assert_eq!(*coef, moments.get(&w_dp.monomials[i]));
        }
    }

    #[test]
    fn disturbance_family_contains_extremes() {
        let fam = disturbance_family(1.0, 20, 3);
        assert!(fam.iter().all(|d| d.in_range()));
        assert!(fam.contains(&DisturbanceSignal::constant([1.0; 3])));
        assert!(fam.contains(&DisturbanceSignal::constant([-1.0; 3])));
        assert!(fam.contains(&DisturbanceSignal::constant([0.0; 3])));
    }
}
