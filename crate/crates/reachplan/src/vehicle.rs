//! Vehicle models: a dynamic unicycle (high fidelity), the kinematic Dubins
//! car it tracks (low fidelity), the proportional tracking controller, the
//! polynomial tracking-error envelope, and the disturbed low-fidelity
//! dynamics driven by that envelope.
//!
//! Conventions: the planning frame places the vehicle body box centered at
//! (−0.75, 0) with zero heading; trajectory parameters are k = (k1, k2) =
//! (commanded yaw rate, commanded speed), constant over one plan window.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::polyalg::{BoxDomain, Polynomial, VariableSpace};

/// High-fidelity state: position, heading, yaw rate, longitudinal speed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnicycleState {
    pub x: f64,
    pub y: f64,
    pub th: f64,
    pub thdot: f64,
    pub v: f64,
}

impl UnicycleState {
    pub fn shared(&self) -> SharedState {
        SharedState { x: self.x, y: self.y, th: self.th }
    }

    fn from_array(a: [f64; 5]) -> Self {
        UnicycleState { x: a[0], y: a[1], th: a[2], thdot: a[3], v: a[4] }
    }

    fn to_array(self) -> [f64; 5] {
        [self.x, self.y, self.th, self.thdot, self.v]
    }
}

/// Coordinates shared between the high- and low-fidelity models.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SharedState {
    pub x: f64,
    pub y: f64,
    pub th: f64,
}

/// Constant trajectory parameters selecting one low-fidelity trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajParams {
    /// Commanded yaw rate (rad/s).
    pub k1: f64,
    /// Commanded speed (m/s).
    pub k2: f64,
}

/// Model constants and domain boxes. Defaults carry the reference values
/// used throughout: gains 20/10, K = [−0.5, 0.5] × [0, 1],
/// X_s = [−1,1]² × [−0.6, 0.6], X_0 the 0.2 × 0.1 m body box at (−0.75, 0).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VehicleParams {
    pub yaw_gain: f64,
    pub speed_gain: f64,
    /// When set, uses the positive-feedback controller sign as printed in
    /// some references; the default is the stabilizing sign, which is what
    /// makes the closed loop converge to the commanded (k1, k2).
    pub literal_feedback_sign: bool,
    pub v_max: f64,
    pub k1_range: (f64, f64),
    pub k2_range: (f64, f64),
    pub xs_x_range: (f64, f64),
    pub xs_y_range: (f64, f64),
    pub xs_th_range: (f64, f64),
    pub x0_x_range: (f64, f64),
    pub x0_y_range: (f64, f64),
    pub x0_th_range: (f64, f64),
    /// Exponent of the speed-error envelope ((t−T)/T)^p, normalized to 1 at t=0.
    pub v_err_power: u32,
    /// Exponent of the yaw-rate-error envelope.
    pub thdot_err_power: u32,
    /// Fixed RK4 step (s).
    pub dt: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        VehicleParams {
            yaw_gain: 20.0,
            speed_gain: 10.0,
            literal_feedback_sign: false,
            v_max: 1.0,
            k1_range: (-0.5, 0.5),
            k2_range: (0.0, 1.0),
            xs_x_range: (-1.0, 1.0),
            xs_y_range: (-1.0, 1.0),
            xs_th_range: (-0.6, 0.6),
            x0_x_range: (-0.85, -0.65),
            x0_y_range: (-0.05, 0.05),
            x0_th_range: (-1e-3, 1e-3),
            v_err_power: 2,
            thdot_err_power: 4,
            dt: 0.01,
        }
    }
}

impl VehicleParams {
    /// Variable space of the full FRS problem: (t, x, y, th, k1, k2).
    pub fn full_space() -> VariableSpace {
        VariableSpace::new(vec!["t", "x", "y", "th", "k1", "k2"])
    }

    /// Variable space of the envelope: (t, x, y, th).
    pub fn envelope_space() -> VariableSpace {
        VariableSpace::new(vec!["t", "x", "y", "th"])
    }

    pub fn k_box(&self) -> BoxDomain {
        let space = VariableSpace::new(vec!["k1", "k2"]);
        BoxDomain::new(&space, &[self.k1_range, self.k2_range]).expect("k box")
    }

    pub fn xs_box(&self) -> BoxDomain {
        let space = VariableSpace::new(vec!["x", "y", "th"]);
        BoxDomain::new(&space, &[self.xs_x_range, self.xs_y_range, self.xs_th_range])
            .expect("xs box")
    }

    pub fn x0_box(&self) -> BoxDomain {
        let space = VariableSpace::new(vec!["x", "y", "th"]);
        BoxDomain::new(&space, &[self.x0_x_range, self.x0_y_range, self.x0_th_range])
            .expect("x0 box")
    }

    pub fn k_contains(&self, k: TrajParams) -> bool {
        k.k1 >= self.k1_range.0
            && k.k1 <= self.k1_range.1
            && k.k2 >= self.k2_range.0
            && k.k2 <= self.k2_range.1
    }

    pub fn xs_contains(&self, s: SharedState) -> bool {
        s.x >= self.xs_x_range.0
            && s.x <= self.xs_x_range.1
            && s.y >= self.xs_y_range.0
            && s.y <= self.xs_y_range.1
            && s.th >= self.xs_th_range.0
            && s.th <= self.xs_th_range.1
    }
}

/// Unicycle dynamics: [ẋ, ẏ, θ̇, θ̈, v̇] = [v cos θ, v sin θ, θ̇, u1, u2].
pub fn unicycle_rhs(_t: f64, s: &UnicycleState, u: (f64, f64)) -> [f64; 5] {
    [s.v * s.th.cos(), s.v * s.th.sin(), s.thdot, u.0, u.1]
}

/// Proportional velocity controller for yaw rate and speed. The stabilizing
/// sign drives (θ̇, v) toward (k1, k2) with time constants 1/20 and 1/10.
pub fn tracking_controller(s: &UnicycleState, k: TrajParams, p: &VehicleParams) -> (f64, f64) {
    let sign = if p.literal_feedback_sign { 1.0 } else { -1.0 };
    (
        sign * p.yaw_gain * (s.thdot - k.k1),
        sign * p.speed_gain * (s.v - k.k2),
    )
}

/// Exact Dubins dynamics: [k2 cos θ, k2 sin θ, k1].
pub fn dubins_rhs(_t: f64, s: &SharedState, k: TrajParams) -> [f64; 3] {
    [k.k2 * s.th.cos(), k.k2 * s.th.sin(), k.k1]
}

/// Degree-3 Taylor polynomialization of the Dubins dynamics over
/// (t, x, y, th, k1, k2): cos θ → 1 − θ²/2, sin θ → θ − θ³/6.
pub fn dubins_poly(space: &VariableSpace) -> [Polynomial; 3] {
    let th = Polynomial::var_named(space, "th").expect("th");
    let k1 = Polynomial::var_named(space, "k1").expect("k1");
    let k2 = Polynomial::var_named(space, "k2").expect("k2");
    let one = Polynomial::constant(space, 1.0);
    let th2 = th.mul(&th).unwrap();
    let th3 = th2.mul(&th).unwrap();
    let cos_t = one.sub(&th2.scale(0.5)).unwrap();
    let sin_t = th.sub(&th3.scale(1.0 / 6.0)).unwrap();
    [k2.mul(&cos_t).unwrap(), k2.mul(&sin_t).unwrap(), k1]
}

/// Tracking-error envelope: three polynomials in (t, x, y, th) whose
/// magnitudes bound the per-coordinate gap between the tracked unicycle
/// field and the Dubins field at the same shared state. The second
/// component is signed (it changes sign with θ); only its magnitude is a
/// bound, matching the symmetric disturbance set d ∈ [−1, 1]³.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorEnvelope {
    pub g: [Polynomial; 3],
}

impl ErrorEnvelope {
    pub fn eval(&self, t: f64, s: SharedState) -> [f64; 3] {
        let point = [t, s.x, s.y, s.th];
        [
            self.g[0].eval(&point).expect("g1"),
            self.g[1].eval(&point).expect("g2"),
            self.g[2].eval(&point).expect("g3"),
        ]
    }

    pub fn magnitudes(&self, t: f64, s: SharedState) -> [f64; 3] {
        let v = self.eval(t, s);
        [v[0].abs(), v[1].abs(), v[2].abs()]
    }
}

/// The reference envelope over horizon `T`:
/// g = [v_err(t)·(1 − θ²/2), v_err(t)·(θ − θ³/6), θ̇_err(t)] with
/// v_err(t) = ((t−T)/T)² and θ̇_err(t) = ((t−T)/T)⁴ so both equal 1 at
/// t = 0 (worst initial command switch) and 0 at t = T.
pub fn error_envelope_default(horizon: f64, p: &VehicleParams) -> ErrorEnvelope {
    let space = VehicleParams::envelope_space();
    let t = Polynomial::var_named(&space, "t").expect("t");
    let th = Polynomial::var_named(&space, "th").expect("th");
    let one = Polynomial::constant(&space, 1.0);
    let base = t.scale(1.0 / horizon).sub(&one).unwrap();
    let pow = |b: &Polynomial, e: u32| {
        let mut acc = Polynomial::constant(&space, 1.0);
        for _ in 0..e {
            acc = acc.mul(b).unwrap();
        }
        acc
    };
    let v_err = pow(&base, p.v_err_power);
    let thdot_err = pow(&base, p.thdot_err_power);
    let th2 = th.mul(&th).unwrap();
    let th3 = th2.mul(&th).unwrap();
    let g1 = v_err.mul(&one.sub(&th2.scale(0.5)).unwrap()).unwrap();
    let g2 = v_err.mul(&th.sub(&th3.scale(1.0 / 6.0)).unwrap()).unwrap();
    ErrorEnvelope { g: [g1, g2, thdot_err] }
}

/// Piecewise-constant disturbance signal on [0, T] with values in [−1, 1]³.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisturbanceSignal {
    /// Interior breakpoints, strictly increasing.
    pub breakpoints: Vec<f64>,
    /// Segment values; one more than breakpoints.
    pub values: Vec<[f64; 3]>,
}

impl DisturbanceSignal {
    pub fn constant(d: [f64; 3]) -> Self {
        DisturbanceSignal { breakpoints: vec![], values: vec![d] }
    }

    pub fn new(breakpoints: Vec<f64>, values: Vec<[f64; 3]>) -> Self {
        assert_eq!(values.len(), breakpoints.len() + 1);
        assert!(breakpoints.windows(2).all(|w| w[0] < w[1]));
        let sig = DisturbanceSignal { breakpoints, values };
        assert!(sig.in_range(), "disturbance value outside [-1, 1]");
        sig
    }

    pub fn value_at(&self, t: f64) -> [f64; 3] {
        let idx = self.breakpoints.partition_point(|&b| b <= t);
        self.values[idx]
    }

    pub fn in_range(&self) -> bool {
        self.values
            .iter()
            .all(|v| v.iter().all(|&c| (-1.0..=1.0).contains(&c)))
    }
}

/// Disturbed low-fidelity dynamics ẋ_s = f_s + g ⊙ d(t) with the Taylor
/// Dubins f_s; this is the system the FRS certificate covers.
pub fn disturbed_rhs(
    t: f64,
    s: &SharedState,
    k: TrajParams,
    env: &ErrorEnvelope,
    d: &DisturbanceSignal,
) -> [f64; 3] {
    let g = env.eval(t, *s);
    let dv = d.value_at(t);
    let th2 = s.th * s.th;
    let f_s = [
        k.k2 * (1.0 - 0.5 * th2),
        k.k2 * (s.th - th2 * s.th / 6.0),
        k.k1,
    ];
    [
        f_s[0] + g[0] * dv[0],
        f_s[1] + g[1] * dv[1],
        f_s[2] + g[2] * dv[2],
    ]
}

// --- fixed-step RK4 ---------------------------------------------------------

/// One classic RK4 step for an N-dimensional first-order system.
pub fn rk4_step<const N: usize>(
    f: &impl Fn(f64, &[f64; N]) -> [f64; N],
    t: f64,
    y: &[f64; N],
    dt: f64,
) -> [f64; N] {
    let add = |a: &[f64; N], b: &[f64; N], s: f64| {
        let mut out = *a;
        for i in 0..N {
            out[i] += s * b[i];
        }
        out
    };
    let k1 = f(t, y);
    let k2 = f(t + 0.5 * dt, &add(y, &k1, 0.5 * dt));
    let k3 = f(t + 0.5 * dt, &add(y, &k2, 0.5 * dt));
    let k4 = f(t + dt, &add(y, &k3, dt));
    let mut out = *y;
    for i in 0..N {
        out[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    out
}

/// Integrate with a fixed step from t0, returning every state including the
/// initial one (n_steps + 1 samples).
pub fn rk4_trace<const N: usize>(
    f: &impl Fn(f64, &[f64; N]) -> [f64; N],
    t0: f64,
    y0: [f64; N],
    dt: f64,
    n_steps: usize,
) -> Vec<[f64; N]> {
    let mut out = Vec::with_capacity(n_steps + 1);
    let mut y = y0;
    out.push(y);
    for i in 0..n_steps {
        y = rk4_step(f, t0 + i as f64 * dt, &y, dt);
        out.push(y);
    }
    out
}

/// Closed-loop unicycle trace under the tracking controller for constant k.
pub fn closed_loop_trace(
    init: UnicycleState,
    k: TrajParams,
    p: &VehicleParams,
    horizon: f64,
) -> Vec<UnicycleState> {
    let n_steps = (horizon / p.dt).round() as usize;
    let f = |t: f64, y: &[f64; 5]| {
        let s = UnicycleState::from_array(*y);
        unicycle_rhs(t, &s, tracking_controller(&s, k, p))
    };
    rk4_trace(&f, 0.0, init.to_array(), p.dt, n_steps)
        .into_iter()
        .map(UnicycleState::from_array)
        .collect()
}

/// Trace of the disturbed low-fidelity system from a shared-state start.
pub fn disturbed_trace(
    init: SharedState,
    k: TrajParams,
    env: &ErrorEnvelope,
    d: &DisturbanceSignal,
    p: &VehicleParams,
    horizon: f64,
) -> Vec<SharedState> {
    let n_steps = (horizon / p.dt).round() as usize;
    let f = |t: f64, y: &[f64; 3]| {
        let s = SharedState { x: y[0], y: y[1], th: y[2] };
        disturbed_rhs(t, &s, k, env, d)
    };
    rk4_trace(&f, 0.0, [init.x, init.y, init.th], p.dt, n_steps)
        .into_iter()
        .map(|y| SharedState { x: y[0], y: y[1], th: y[2] })
        .collect()
}

// --- error-bound validation --------------------------------------------------

/// Result of replaying one closed-loop trajectory against the envelope.
#[derive(Debug, Clone, Copy)]
pub struct ErrorBoundReport {
    /// max over sampled t of |f_i − f_{s,i}| − |g_i|, per shared coordinate.
    /// Non-positive everywhere means the bound held on this trajectory.
    pub max_violation: [f64; 3],
    /// Whether the trajectory left X_s before the horizon (reported, not fatal).
    pub left_xs: bool,
}

impl ErrorBoundReport {
    pub fn worst(&self) -> f64 {
        self.max_violation[0]
            .max(self.max_violation[1])
            .max(self.max_violation[2])
    }
}

/// Integrates the unicycle under the tracking controller and compares the
/// realized shared-state field against the exact Dubins field at the same
/// shared state, per coordinate, against the envelope magnitude.
///
/// Samples cover the half-open plan window [0, T): the envelope is a
/// per-plan bound and the instant t = T belongs to the successor plan,
/// whose envelope restarts at 1.
pub fn validate_error_bound(
    k: TrajParams,
    init: UnicycleState,
    horizon: f64,
    env: &ErrorEnvelope,
    p: &VehicleParams,
) -> ErrorBoundReport {
    let trace = closed_loop_trace(init, k, p, horizon);
    let n = trace.len() - 1; // exclude the t = T sample
    let mut max_violation = [f64::NEG_INFINITY; 3];
    let mut left_xs = false;
    for (i, s) in trace.iter().take(n).enumerate() {
        let t = i as f64 * p.dt;
        let shared = s.shared();
        if !p.xs_contains(shared) {
            left_xs = true;
        }
        let high = [s.v * s.th.cos(), s.v * s.th.sin(), s.thdot];
        let low = dubins_rhs(t, &shared, k);
        let g = env.magnitudes(t, shared);
        for c in 0..3 {
            let viol = (high[c] - low[c]).abs() - g[c];
            if viol > max_violation[c] {
                max_violation[c] = viol;
            }
        }
    }
    ErrorBoundReport { max_violation, left_xs }
}

/// Worst-case initial tracking offsets for a grid cell: largest admissible
/// speed mismatch and a yaw-rate sign flip.
pub fn worst_case_init(k: TrajParams, p: &VehicleParams) -> UnicycleState {
    let v0 = if k.k2 <= 0.5 * (p.k2_range.0 + p.k2_range.1) {
        p.v_max
    } else {
        0.0
    };
    let thdot0 = if k.k1 >= 0.0 { p.k1_range.0 } else { p.k1_range.1 };
    UnicycleState { x: -0.75, y: 0.0, th: 0.0, thdot: thdot0, v: v0 }
}

/// Runs `validate_error_bound` over an n×n parameter grid with worst-case
/// initial offsets; returns the largest violation seen.
pub fn validate_error_bound_grid(
    n: usize,
    horizon: f64,
    env: &ErrorEnvelope,
    p: &VehicleParams,
) -> f64 {
    let cells: Vec<(usize, usize)> =
        (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).collect();
    cells
        .par_iter()
        .map(|&(i, j)| {
            let k1 = p.k1_range.0 + (p.k1_range.1 - p.k1_range.0) * i as f64 / (n - 1) as f64;
            let k2 = p.k2_range.0 + (p.k2_range.1 - p.k2_range.0) * j as f64 / (n - 1) as f64;
            let k = TrajParams { k1, k2 };
            let init = worst_case_init(k, p);
            validate_error_bound(k, init, horizon, env, p).worst()
        })
        .reduce(|| f64::NEG_INFINITY, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn params() -> VehicleParams {
        VehicleParams::default()
    }

    #[test]
    fn unicycle_rhs_examples() {
        let s = UnicycleState { x: 0.0, y: 0.0, th: 0.0, thdot: 0.0, v: 1.0 };
        assert_eq!(unicycle_rhs(0.0, &s, (0.0, 0.0)), [1.0, 0.0, 0.0, 0.0, 0.0]);

        let s = UnicycleState { th: PI / 2.0, ..s };
        let d = unicycle_rhs(0.0, &s, (0.0, 0.0));
        assert!(d[0].abs() < 1e-15 && (d[1] - 1.0).abs() < 1e-15);

        let s = UnicycleState { x: 0.0, y: 0.0, th: 0.3, thdot: 0.2, v: 0.0 };
        let d = unicycle_rhs(0.0, &s, (0.0, 0.0));
        assert_eq!(&d[..2], &[0.0, 0.0]);
        assert_eq!(d[2], 0.2);
    }

    #[test]
    fn controller_zero_error_zero_input() {
        let p = params();
        let s = UnicycleState { x: 0.0, y: 0.0, th: 0.0, thdot: 0.3, v: 0.7 };
        let u = tracking_controller(&s, TrajParams { k1: 0.3, k2: 0.7 }, &p);
        assert_eq!(u, (0.0, 0.0));
    }

    #[test]
    fn controller_signs_drive_toward_command() {
        let p = params();
        let s = UnicycleState { x: 0.0, y: 0.0, th: 0.0, thdot: 0.0, v: 1.0 };
        let u = tracking_controller(&s, TrajParams { k1: 0.5, k2: 0.0 }, &p);
        assert_eq!(u.0, 10.0); // pushes thdot up toward k1
        assert_eq!(u.1, -10.0); // braking

        // Closed-loop convergence oracle: thdot → k1, v → k2.
        let k = TrajParams { k1: 0.5, k2: 0.0 };
        let trace = closed_loop_trace(s, k, &p, 0.5);
        let end = trace.last().unwrap();
        // RK4 at dt = 0.01 tracks the exact exponential to ~5e−6 relative.
        assert!((end.thdot - k.k1).abs() <= (-5.0f64).exp() * 0.5 * (1.0 + 1e-5));
        assert!((end.v - k.k2).abs() <= (-5.0f64).exp() * 1.0 * (1.0 + 1e-5));

        // The literal (as-printed) sign diverges instead.
        let lit = VehicleParams { literal_feedback_sign: true, ..params() };
        let trace = closed_loop_trace(
            UnicycleState { thdot: 0.1, ..s },
            TrajParams { k1: 0.0, k2: 1.0 },
            &lit,
            0.3,
        );
        assert!(trace.last().unwrap().thdot.abs() > 0.1);
    }

    #[test]
    fn exponential_tracking_rates() {
        let p = params();
        let k = TrajParams { k1: 0.2, k2: 0.6 };
        let init = UnicycleState { x: 0.0, y: 0.0, th: 0.0, thdot: -0.5, v: 0.0 };
        let trace = closed_loop_trace(init, k, &p, 0.5);
        let end = trace.last().unwrap();
        // time constants 1/20 (yaw) and 1/10 (speed)
        assert!((end.v - k.k2).abs() <= (-5.0f64).exp() * (init.v - k.k2).abs() * 1.01);
        assert!((end.thdot - k.k1).abs() <= (-10.0f64).exp() * 0.7 * 1.01 + 1e-12);
    }

    #[test]
    fn dubins_rhs_examples() {
        let s = SharedState { x: 0.0, y: 0.0, th: 0.0 };
        assert_eq!(dubins_rhs(0.0, &s, TrajParams { k1: 0.0, k2: 1.0 }), [1.0, 0.0, 0.0]);
        let d = dubins_rhs(0.0, &s, TrajParams { k1: 0.5, k2: 0.0 });
        assert_eq!(d, [0.0, 0.0, 0.5]);
        let s = SharedState { th: PI, ..s };
        let d = dubins_rhs(0.0, &s, TrajParams { k1: 0.0, k2: 1.0 });
        assert!((d[0] + 1.0).abs() < 1e-15 && d[1].abs() < 1e-12);
    }

    #[test]
    fn dubins_poly_examples() {
        let space = VehicleParams::full_space();
        let f = dubins_poly(&space);
        // third component is exactly k1
        assert_eq!(f[2], Polynomial::var_named(&space, "k1").unwrap());
        // at th = 0: (k2, 0, k1)
        let at = |th: f64, k1: f64, k2: f64| [0.0, 0.0, 0.0, th, k1, k2];
        assert_eq!(f[0].eval(&at(0.0, 0.3, 0.8)).unwrap(), 0.8);
        assert_eq!(f[1].eval(&at(0.0, 0.3, 0.8)).unwrap(), 0.0);
        // Taylor remainder at th = 0.5, k2 = 1
        let v = f[0].eval(&at(0.5, 0.0, 1.0)).unwrap();
        assert_relative_eq!(v, 0.875);
        assert!((v - 0.5f64.cos()).abs() < 3e-3);
    }

    #[test]
    fn taylor_agrees_with_trig_on_xs() {
        // Sup of the gap over |th| ≤ 0.6 is th⁴/24 at the corner, which is
        // 5.34e−3 for k2 = 1; check against that analytic bound.
        let space = VehicleParams::full_space();
        let f = dubins_poly(&space);
        let mut worst: f64 = 0.0;
        for i in 0..=60 {
            let th = -0.6 + 1.2 * i as f64 / 60.0;
            for k2 in [0.0, 0.5, 1.0] {
                for k1 in [-0.5, 0.0, 0.5] {
                    let s = SharedState { x: 0.0, y: 0.0, th };
                    let trig = dubins_rhs(0.0, &s, TrajParams { k1, k2 });
                    let pt = [0.0, 0.0, 0.0, th, k1, k2];
                    for (c, t) in trig.iter().enumerate() {
                        worst = worst.max((f[c].eval(&pt).unwrap() - t).abs());
                    }
                }
            }
        }
        assert!(worst <= 0.6f64.powi(4) / 24.0 + 1e-12, "worst gap {worst}");
    }

    #[test]
    fn envelope_default_examples() {
        let p = params();
        let env = error_envelope_default(1.0, &p);
        let s0 = SharedState { x: 0.0, y: 0.0, th: 0.0 };
        assert_eq!(env.eval(1.0, s0), [0.0, 0.0, 0.0]);
        assert_eq!(env.eval(0.0, s0), [1.0, 0.0, 1.0]);
        assert_eq!(env.eval(0.5, s0), [0.25, 0.0, 0.0625]);
    }

    #[test]
    fn disturbed_rhs_examples() {
        let p = params();
        let env = error_envelope_default(1.0, &p);
        let s = SharedState { x: 0.0, y: 0.0, th: 0.0 };
        let k = TrajParams { k1: 0.0, k2: 1.0 };

        let zero = DisturbanceSignal::constant([0.0; 3]);
        assert_eq!(disturbed_rhs(0.3, &s, k, &env, &zero), [1.0, 0.0, 0.0]);

        let plus = DisturbanceSignal::constant([1.0; 3]);
        assert_eq!(disturbed_rhs(0.0, &s, k, &env, &plus), [2.0, 0.0, 1.0]);

        let minus = DisturbanceSignal::constant([-1.0; 3]);
        assert_eq!(disturbed_rhs(0.0, &s, k, &env, &minus), [0.0, 0.0, -1.0]);
    }

    #[test]
    fn disturbance_signal_lookup() {
        let d = DisturbanceSignal::new(
            vec![0.25, 0.5],
            vec![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
        );
        assert_eq!(d.value_at(0.0), [1.0, 0.0, 0.0]);
        assert_eq!(d.value_at(0.25), [0.0, 1.0, 0.0]);
        assert_eq!(d.value_at(0.9), [0.0, 0.0, 1.0]);
    }

    #[test]
    fn error_bound_holds_when_perfectly_tracking() {
        let p = params();
        let env = error_envelope_default(1.0, &p);
        let k = TrajParams { k1: 0.3, k2: 0.6 };
        let init = UnicycleState { x: -0.75, y: 0.0, th: 0.0, thdot: k.k1, v: k.k2 };
        let rep = validate_error_bound(k, init, 1.0, &env, &p);
        assert!(rep.worst() <= 0.0, "violation {:?}", rep.max_violation);
    }

    #[test]
    fn error_bound_holds_in_two_phase_brake_scenario() {
        // Plan 1: full speed, k1 = +0.5 with the unicycle starting at
        // thdot = 0; plan 2 (the emergency brake at the plan switch):
        // k = (−0.5, 0) starting from the plan-1 terminal state, with the
        // envelope clock restarted and the frame heading re-zeroed.
        let p = params();
        let env = error_envelope_default(1.0, &p);
        let k_a = TrajParams { k1: 0.5, k2: 1.0 };
        let init = UnicycleState { x: -0.75, y: 0.0, th: 0.0, thdot: 0.0, v: 1.0 };
        let rep_a = validate_error_bound(k_a, init, 1.0, &env, &p);
        assert!(rep_a.worst() <= 0.0, "phase 1 violation {:?}", rep_a.max_violation);

        let end = *closed_loop_trace(init, k_a, &p, 1.0).last().unwrap();
        let handoff = UnicycleState { x: -0.75, y: 0.0, th: 0.0, ..end };
        let k_b = TrajParams { k1: -0.5, k2: 0.0 };
        let rep_b = validate_error_bound(k_b, handoff, 1.0, &env, &p);
        assert!(rep_b.worst() <= 0.0, "phase 2 violation {:?}", rep_b.max_violation);
    }

    #[test]
    fn zero_envelope_is_violated() {
        let p = params();
        let space = VehicleParams::envelope_space();
        let zero_env = ErrorEnvelope {
            g: [
                Polynomial::zero(&space),
                Polynomial::zero(&space),
                Polynomial::zero(&space),
            ],
        };
        let k = TrajParams { k1: 0.5, k2: 0.0 };
        let init = UnicycleState { x: -0.75, y: 0.0, th: 0.0, thdot: 0.0, v: 1.0 };
        let rep = validate_error_bound(k, init, 1.0, &zero_env, &p);
        assert!(rep.worst() > 0.0);
    }

    #[test]
    fn error_bound_grid_small() {
        // The acceptance suite runs the full 20×20 grid; keep a 6×6 smoke
        // version in unit tests.
        let p = params();
        let env = error_envelope_default(1.0, &p);
        let worst = validate_error_bound_grid(6, 1.0, &env, &p);
        assert!(worst <= 0.0, "worst grid violation {worst}");
    }

    #[test]
    fn braking_stops_within_tau_stop() {
        let p = params();
        let init = UnicycleState { x: 0.0, y: 0.0, th: 0.0, thdot: 0.0, v: 1.0 };
        let trace = closed_loop_trace(init, TrajParams { k1: 0.0, k2: 0.0 }, &p, 0.5);
        assert!(trace.last().unwrap().v <= 0.01);
    }
}
