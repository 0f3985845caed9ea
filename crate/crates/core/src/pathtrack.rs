//! Path-tracking environment: a linear-tire bicycle model driven by steering
//! and acceleration, with an additive disturbance on lateral velocity, a
//! composite-sine reference path and a quadratic tracking cost.
//!
//! The dynamics, cost and observation features are written once over the
//! [`Arith`] trait so the same code runs on plain `f64` values and on an
//! autodiff [`Tape`], which is what lets policy gradients flow through the
//! model.

use std::f64::consts::PI;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{AdError, Tape, Tensor, Var};
use crate::report::fmt_sig;

/// Magnitude below which a dynamics denominator counts as singular.
pub const SINGULAR_TOL: f64 = 1e-6;
/// Speed the cost drives towards (m/s).
pub const TARGET_SPEED: f64 = 20.0;
/// Period of the reference path (m).
pub const PATH_PERIOD: f64 = 1200.0;
pub const STATE_DIM: usize = 6;
pub const OBS_DIM: usize = 7;
/// Lookahead distance for the second curvature feature (m).
const CURVATURE_LOOKAHEAD: f64 = 20.0;
const CURVATURE_SCALE: f64 = 100.0;
/// Multipliers bringing lateral error, heading error, speed error, lateral
/// velocity and yaw rate to order one near the path.
const FEATURE_SCALE: [f64; 5] = [1.0, 10.0, 0.5, 2.0, 5.0];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PathError {
    #[error("{which} denominator is {value:e}, too close to zero")]
    SingularDenominator { which: &'static str, value: f64 },
    #[error("invalid vehicle parameters: {0}")]
    InvalidParams(String),
    #[error("non-finite state after step {step}")]
    NonFiniteState { step: usize },
    #[error(transparent)]
    Ad(#[from] AdError),
}

/// Chassis constants. Cornering stiffnesses are negative by convention.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleParams {
    pub k_f: f64,
    pub k_r: f64,
    pub l_f: f64,
    pub l_r: f64,
    pub mass: f64,
    pub i_z: f64,
    pub dt: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            k_f: -155_495.0,
            k_r: -155_495.0,
            l_f: 1.19,
            l_r: 1.46,
            mass: 1520.0,
            i_z: 2640.0,
            dt: 0.1,
        }
    }
}

impl VehicleParams {
    pub fn validate(&self) -> Result<(), PathError> {
        let ok = self.mass > 0.0
            && self.i_z > 0.0
            && self.dt > 0.0
            && self.l_f > 0.0
            && self.l_r > 0.0
            && self.k_f < 0.0
            && self.k_r < 0.0;
        if ok {
            Ok(())
        } else {
            Err(PathError::InvalidParams(format!("{self:?}")))
        }
    }

    /// Denominator of the lateral-velocity row at speed `v_x`.
    pub fn lateral_denominator(&self, v_x: f64) -> f64 {
        self.mass * v_x - self.dt * (self.k_f + self.k_r)
    }

    /// Denominator of the yaw-rate row at speed `v_x`.
    pub fn yaw_denominator(&self, v_x: f64) -> f64 {
        self.dt * (self.l_f * self.l_f * self.k_f + self.l_r * self.l_r * self.k_r) - self.i_z * v_x
    }
}

/// `[p_x, delta_y, delta_phi, v_x, v_y, omega]`: position along the path,
/// lateral and heading error to the reference, and body-frame velocities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub p_x: f64,
    pub delta_y: f64,
    pub delta_phi: f64,
    pub v_x: f64,
    pub v_y: f64,
    pub omega: f64,
}

impl VehicleState {
    pub fn to_array(&self) -> [f64; STATE_DIM] {
        [self.p_x, self.delta_y, self.delta_phi, self.v_x, self.v_y, self.omega]
    }

    pub fn from_array(a: [f64; STATE_DIM]) -> Self {
        Self {
            p_x: a[0],
            delta_y: a[1],
            delta_phi: a[2],
            v_x: a[3],
            v_y: a[4],
            omega: a[5],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    /// On the path at target speed.
    pub fn nominal(p_x: f64) -> Self {
        Self {
            p_x,
            delta_y: 0.0,
            delta_phi: 0.0,
            v_x: TARGET_SPEED,
            v_y: 0.0,
            omega: 0.0,
        }
    }
}

/// Protagonist action: front-wheel angle and longitudinal acceleration.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Control {
    pub steer: f64,
    pub accel: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActionBounds {
    pub steer: (f64, f64),
    pub accel: (f64, f64),
    pub dist: (f64, f64),
}

impl Default for ActionBounds {
    fn default() -> Self {
        Self {
            steer: (-0.4, 0.4),
            accel: (-1.5, 3.0),
            dist: (-0.5, 0.5),
        }
    }
}

impl ActionBounds {
    pub fn clamp_control(&self, c: Control) -> Control {
        Control {
            steer: c.steer.clamp(self.steer.0, self.steer.1),
            accel: c.accel.clamp(self.accel.0, self.accel.1),
        }
    }

    pub fn clamp_dist(&self, u: f64) -> f64 {
        u.clamp(self.dist.0, self.dist.1)
    }

    pub fn protagonist_lo(&self) -> Vec<f64> {
        vec![self.steer.0, self.accel.0]
    }

    pub fn protagonist_hi(&self) -> Vec<f64> {
        vec![self.steer.1, self.accel.1]
    }
}

/// How heading and lateral errors evolve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PathMode {
    /// Errors are recomputed from a global pose against the sine reference.
    #[default]
    Sine,
    /// The error rows are integrated directly, which is exact for a straight
    /// reference along the x axis.
    Straight,
}

/// Arithmetic needed by the model, implemented for plain `f64` and for the tape.
pub trait Arith {
    type V: Copy;
    fn constant(&mut self, x: f64) -> Self::V;
    fn add(&mut self, a: Self::V, b: Self::V) -> Result<Self::V, AdError>;
    fn sub(&mut self, a: Self::V, b: Self::V) -> Result<Self::V, AdError>;
    fn mul(&mut self, a: Self::V, b: Self::V) -> Result<Self::V, AdError>;
    fn div(&mut self, a: Self::V, b: Self::V) -> Result<Self::V, AdError>;
    fn sin(&mut self, a: Self::V) -> Self::V;
    fn cos(&mut self, a: Self::V) -> Self::V;
    fn atan(&mut self, a: Self::V) -> Self::V;
    /// `scale * a + shift`.
    fn affine(&mut self, a: Self::V, scale: f64, shift: f64) -> Self::V;
    fn square(&mut self, a: Self::V) -> Self::V;
    /// Lower clamp; the tape version passes adjoints straight through.
    fn floor_at(&mut self, a: Self::V, lo: f64) -> Self::V;
    /// Smallest magnitude held in `a`.
    fn min_abs(&self, a: Self::V) -> f64;
    /// Shifts angles by whole turns into `(-pi, pi]`; the derivative is one.
    fn wrap_angle(&mut self, a: Self::V) -> Result<Self::V, AdError>;
}

fn turns_offset(x: f64) -> f64 {
    let tau = 2.0 * PI;
    let wrapped = x - tau * (x / tau).round();
    if wrapped <= -PI {
        x - wrapped - tau
    } else {
        x - wrapped
    }
}

/// Plain scalar evaluation.
#[derive(Debug, Default, Clone, Copy)]
pub struct Scalar;

impl Arith for Scalar {
    type V = f64;
    fn constant(&mut self, x: f64) -> f64 {
        x
    }
    fn add(&mut self, a: f64, b: f64) -> Result<f64, AdError> {
        Ok(a + b)
    }
    fn sub(&mut self, a: f64, b: f64) -> Result<f64, AdError> {
        Ok(a - b)
    }
    fn mul(&mut self, a: f64, b: f64) -> Result<f64, AdError> {
        Ok(a * b)
    }
    fn div(&mut self, a: f64, b: f64) -> Result<f64, AdError> {
        Ok(a / b)
    }
    fn sin(&mut self, a: f64) -> f64 {
        a.sin()
    }
    fn cos(&mut self, a: f64) -> f64 {
        a.cos()
    }
    fn atan(&mut self, a: f64) -> f64 {
        a.atan()
    }
    fn affine(&mut self, a: f64, scale: f64, shift: f64) -> f64 {
        scale * a + shift
    }
    fn square(&mut self, a: f64) -> f64 {
        a * a
    }
    fn floor_at(&mut self, a: f64, lo: f64) -> f64 {
        a.max(lo)
    }
    fn min_abs(&self, a: f64) -> f64 {
        a.abs()
    }
    fn wrap_angle(&mut self, a: f64) -> Result<f64, AdError> {
        Ok(a - turns_offset(a))
    }
}

/// Recorded evaluation on batched column vectors; constants broadcast.
pub struct TapeArith<'t> {
    pub tape: &'t mut Tape,
}

impl Arith for TapeArith<'_> {
    type V = Var;
    fn constant(&mut self, x: f64) -> Var {
        self.tape.constant(Tensor::scalar(x))
    }
    fn add(&mut self, a: Var, b: Var) -> Result<Var, AdError> {
        self.tape.add(a, b)
    }
    fn sub(&mut self, a: Var, b: Var) -> Result<Var, AdError> {
        self.tape.sub(a, b)
    }
    fn mul(&mut self, a: Var, b: Var) -> Result<Var, AdError> {
        self.tape.mul(a, b)
    }
    fn div(&mut self, a: Var, b: Var) -> Result<Var, AdError> {
        self.tape.div(a, b)
    }
    fn sin(&mut self, a: Var) -> Var {
        self.tape.sin(a)
    }
    fn cos(&mut self, a: Var) -> Var {
        self.tape.cos(a)
    }
    fn atan(&mut self, a: Var) -> Var {
        self.tape.atan(a)
    }
    fn affine(&mut self, a: Var, scale: f64, shift: f64) -> Var {
        self.tape.affine(a, scale, shift)
    }
    fn square(&mut self, a: Var) -> Var {
        self.tape.square(a)
    }
    fn floor_at(&mut self, a: Var, lo: f64) -> Var {
        self.tape.clamp_st(a, lo, f64::INFINITY)
    }
    fn min_abs(&self, a: Var) -> f64 {
        self.tape.value(a).data().iter().fold(f64::INFINITY, |m, v| m.min(v.abs()))
    }
    fn wrap_angle(&mut self, a: Var) -> Result<Var, AdError> {
        let offsets = self.tape.value(a).map(turns_offset);
        if offsets.data().iter().all(|&o| o == 0.0) {
            return Ok(a);
        }
        let c = self.tape.constant(offsets);
        self.tape.sub(a, c)
    }
}

/// The three sine components of the reference path as `(amplitude, wavelength)`.
const REFERENCE_TERMS: [(f64, f64); 3] = [(7.5, 200.0), (2.5, 300.0), (-5.0, 400.0)];

/// Reference lateral offset and heading at longitudinal position `p_x`.
pub fn reference_lateral(p_x: f64) -> (f64, f64) {
    let mut s = Scalar;
    let y = reference_y(&mut s, p_x).expect("scalar arithmetic");
    let phi = reference_phi(&mut s, p_x).expect("scalar arithmetic");
    (y, phi)
}

/// Signed curvature of the reference path at `p_x`.
pub fn reference_curvature(p_x: f64) -> f64 {
    let d1 = reference_slope(&mut Scalar, p_x).expect("scalar arithmetic");
    let d2 = reference_second(&mut Scalar, p_x).expect("scalar arithmetic");
    d2 / (1.0 + d1 * d1).powf(1.5)
}

fn sine_sum<A: Arith>(ar: &mut A, x: A::V, deriv: usize) -> Result<A::V, AdError> {
    let mut acc: Option<A::V> = None;
    for (amp, wl) in REFERENCE_TERMS {
        let k = 2.0 * PI / wl;
        let arg = ar.affine(x, k, 0.0);
        // d^n/dx^n sin(kx) = k^n sin(kx + n pi/2)
        let term = match deriv % 4 {
            0 => ar.sin(arg),
            1 => ar.cos(arg),
            2 => {
                let s = ar.sin(arg);
                ar.affine(s, -1.0, 0.0)
            }
            _ => {
                let c = ar.cos(arg);
                ar.affine(c, -1.0, 0.0)
            }
        };
        let term = ar.affine(term, amp * k.powi(deriv as i32), 0.0);
        acc = Some(match acc {
            None => term,
            Some(a) => ar.add(a, term)?,
        });
    }
    Ok(acc.expect("three terms"))
}

pub fn reference_y<A: Arith>(ar: &mut A, p_x: A::V) -> Result<A::V, AdError> {
    sine_sum(ar, p_x, 0)
}

pub fn reference_slope<A: Arith>(ar: &mut A, p_x: A::V) -> Result<A::V, AdError> {
    sine_sum(ar, p_x, 1)
}

pub fn reference_second<A: Arith>(ar: &mut A, p_x: A::V) -> Result<A::V, AdError> {
    sine_sum(ar, p_x, 2)
}

pub fn reference_phi<A: Arith>(ar: &mut A, p_x: A::V) -> Result<A::V, AdError> {
    let s = reference_slope(ar, p_x)?;
    Ok(ar.atan(s))
}

/// One step of the model on abstract values: `s` is the state, `steer`,
/// `accel` the protagonist action and `dist` the lateral-velocity disturbance.
pub fn dynamics_generic<A: Arith>(
    ar: &mut A,
    p: &VehicleParams,
    mode: PathMode,
    s: [A::V; STATE_DIM],
    steer: A::V,
    accel: A::V,
    dist: A::V,
) -> Result<[A::V; STATE_DIM], PathError> {
    let [px, dy, dphi, vx, vy, w] = s;
    let dt = p.dt;

    // Chassis rows.
    let lat_den = ar.affine(vx, p.mass, -dt * (p.k_f + p.k_r));
    let yaw_den = ar.affine(vx, -p.i_z, dt * (p.l_f * p.l_f * p.k_f + p.l_r * p.l_r * p.k_r));
    let m = ar.min_abs(lat_den);
    if m < SINGULAR_TOL {
        return Err(PathError::SingularDenominator { which: "lateral", value: m });
    }
    let m = ar.min_abs(yaw_den);
    if m < SINGULAR_TOL {
        return Err(PathError::SingularDenominator { which: "yaw", value: m });
    }
    let moment = p.l_f * p.k_f - p.l_r * p.k_r;

    let vy_w = ar.mul(vy, w)?;
    let a_plus = ar.add(accel, vy_w)?;
    let vx_step = ar.affine(a_plus, dt, 0.0);
    let vx_next = ar.add(vx, vx_step)?;
    let vx_next = ar.floor_at(vx_next, 0.0);

    let vx_vy = ar.mul(vx, vy)?;
    let mvv = ar.affine(vx_vy, p.mass, 0.0);
    let steer_vx = ar.mul(steer, vx)?;
    let vx2 = ar.square(vx);
    let vx2_w = ar.mul(vx2, w)?;
    let t1 = ar.affine(w, moment, 0.0);
    let t2 = ar.affine(steer_vx, -p.k_f, 0.0);
    let t3 = ar.affine(vx2_w, -p.mass, 0.0);
    let bracket = ar.add(t1, t2)?;
    let bracket = ar.add(bracket, t3)?;
    let bracket = ar.affine(bracket, dt, 0.0);
    let num = ar.add(mvv, bracket)?;
    let vy_next = ar.div(num, lat_den)?;
    let vy_next = ar.add(vy_next, dist)?;

    let w_vx = ar.mul(w, vx)?;
    let t1 = ar.affine(w_vx, -p.i_z, 0.0);
    let t2 = ar.affine(vy, moment, 0.0);
    let t3 = ar.affine(steer_vx, -p.l_f * p.k_f, 0.0);
    let bracket = ar.add(t2, t3)?;
    let bracket = ar.affine(bracket, -dt, 0.0);
    let num = ar.add(t1, bracket)?;
    let w_next = ar.div(num, yaw_den)?;

    // Kinematic rows.
    let (heading, y) = match mode {
        PathMode::Straight => (dphi, dy),
        PathMode::Sine => {
            let phi_ref = reference_phi(ar, px)?;
            let y_ref = reference_y(ar, px)?;
            (ar.add(phi_ref, dphi)?, ar.add(y_ref, dy)?)
        }
    };
    let c = ar.cos(heading);
    let sn = ar.sin(heading);
    let vx_c = ar.mul(vx, c)?;
    let vy_s = ar.mul(vy, sn)?;
    let fwd = ar.sub(vx_c, vy_s)?;
    let fwd = ar.affine(fwd, dt, 0.0);
    let px_next = ar.add(px, fwd)?;
    let vx_s = ar.mul(vx, sn)?;
    let vy_c = ar.mul(vy, c)?;
    let side = ar.add(vx_s, vy_c)?;
    let side = ar.affine(side, dt, 0.0);
    let y_next = ar.add(y, side)?;
    let w_dt = ar.affine(w, dt, 0.0);
    let heading_next = ar.add(heading, w_dt)?;

    let (dy_next, dphi_next) = match mode {
        PathMode::Straight => (y_next, heading_next),
        PathMode::Sine => {
            let y_ref = reference_y(ar, px_next)?;
            let phi_ref = reference_phi(ar, px_next)?;
            let dphi_next = ar.sub(heading_next, phi_ref)?;
            (ar.sub(y_next, y_ref)?, ar.wrap_angle(dphi_next)?)
        }
    };
    Ok([px_next, dy_next, dphi_next, vx_next, vy_next, w_next])
}

/// Quadratic stage cost, to be minimized by the protagonist.
pub fn cost_generic<A: Arith>(ar: &mut A, s: [A::V; STATE_DIM], steer: A::V, accel: A::V) -> Result<A::V, AdError> {
    let [_, dy, dphi, vx, _, w] = s;
    let ev = ar.affine(vx, 1.0, -TARGET_SPEED);
    let terms = [
        (0.03, ev),
        (0.8, dy),
        (30.0, dphi),
        (0.05, accel),
        (0.02, w),
        (5.0, steer),
    ];
    let mut acc: Option<A::V> = None;
    for (k, v) in terms {
        let sq = ar.square(v);
        let t = ar.affine(sq, k, 0.0);
        acc = Some(match acc {
            None => t,
            Some(a) => ar.add(a, t)?,
        });
    }
    Ok(acc.expect("non-empty"))
}

/// Network input features: the tracking errors, speed error, body rates and
/// reference curvature here and a short distance ahead.
pub fn features_generic<A: Arith>(ar: &mut A, s: [A::V; STATE_DIM]) -> Result<[A::V; OBS_DIM], AdError> {
    let [px, dy, dphi, vx, vy, w] = s;
    let [sy, sphi, sv, svy, sw] = FEATURE_SCALE;
    let ev = ar.affine(vx, sv, -sv * TARGET_SPEED);
    let dy = ar.affine(dy, sy, 0.0);
    let dphi = ar.affine(dphi, sphi, 0.0);
    let vy = ar.affine(vy, svy, 0.0);
    let w = ar.affine(w, sw, 0.0);
    let k0 = reference_second(ar, px)?;
    let k0 = ar.affine(k0, CURVATURE_SCALE, 0.0);
    let ahead = ar.affine(px, 1.0, CURVATURE_LOOKAHEAD);
    let k1 = reference_second(ar, ahead)?;
    let k1 = ar.affine(k1, CURVATURE_SCALE, 0.0);
    Ok([dy, dphi, ev, vy, w, k0, k1])
}

/// Next state for a single vehicle.
pub fn dynamics_step(
    state: &VehicleState,
    control: Control,
    dist: f64,
    params: &VehicleParams,
    mode: PathMode,
) -> Result<VehicleState, PathError> {
    let out = dynamics_generic(&mut Scalar, params, mode, state.to_array(), control.steer, control.accel, dist)?;
    Ok(VehicleState::from_array(out))
}

/// Stage cost of a state-action pair; the disturbance does not enter.
pub fn reward(state: &VehicleState, control: Control) -> f64 {
    cost_generic(&mut Scalar, state.to_array(), control.steer, control.accel).expect("scalar arithmetic")
}

pub fn features(state: &VehicleState) -> [f64; OBS_DIM] {
    features_generic(&mut Scalar, state.to_array()).expect("scalar arithmetic")
}

/// Feature rows for a batch of states.
pub fn features_batch(states: &[VehicleState]) -> Tensor {
    let mut data = Vec::with_capacity(states.len() * OBS_DIM);
    for s in states {
        data.extend_from_slice(&features(s));
    }
    Tensor::from_vec(states.len(), OBS_DIM, data).expect("consistent shape")
}

/// Splits a `batch x n` tape node into `n` column nodes.
pub fn split_columns<const N: usize>(tape: &mut Tape, x: Var) -> Result<[Var; N], AdError> {
    let cols = tape.value(x).cols();
    if cols != N {
        return Err(AdError::ShapeMismatch(format!("{cols} columns, expected {N}")));
    }
    let mut out = [x; N];
    for (i, o) in out.iter_mut().enumerate() {
        *o = tape.slice_cols(x, i, 1)?;
    }
    Ok(out)
}

/// Stacks vehicle states into a `batch x 6` tensor.
pub fn states_tensor(states: &[VehicleState]) -> Tensor {
    let data = states.iter().flat_map(|s| s.to_array()).collect();
    Tensor::from_vec(states.len(), STATE_DIM, data).expect("consistent shape")
}

/// Environment with a seeded initial-state distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct PathTrackEnv {
    pub params: VehicleParams,
    pub bounds: ActionBounds,
    pub mode: PathMode,
}

impl Default for PathTrackEnv {
    fn default() -> Self {
        Self {
            params: VehicleParams::default(),
            bounds: ActionBounds::default(),
            mode: PathMode::Sine,
        }
    }
}

/// One recorded episode.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// `steps + 1` states.
    pub states: Vec<VehicleState>,
    pub controls: Vec<Control>,
    pub disturbances: Vec<f64>,
    pub costs: Vec<f64>,
    pub discounted_cost: f64,
    pub total_cost: f64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.costs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.costs.is_empty()
    }

    /// Mean `|delta_y|` over the states visited after each step.
    pub fn mean_abs_lateral_error(&self) -> f64 {
        mean_abs(self.states[1..].iter().map(|s| s.delta_y))
    }

    /// Mean `|delta_phi|` over the states visited after each step.
    pub fn mean_abs_heading_error(&self) -> f64 {
        mean_abs(self.states[1..].iter().map(|s| s.delta_phi))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,p_x,delta_y,delta_phi,v_x,v_y,omega,delta,accel,dist,reward\n");
        for (i, ((c, u), r)) in self.controls.iter().zip(&self.disturbances).zip(&self.costs).enumerate() {
            let s = &self.states[i];
            let cells: Vec<String> = s
                .to_array()
                .iter()
                .chain([c.steer, c.accel, *u, *r].iter())
                .map(|v| fmt_sig(*v))
                .collect();
            let _ = writeln!(out, "{i},{}", cells.join(","));
        }
        out
    }
}

fn mean_abs(it: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = it.fold((0.0, 0usize), |(s, n), v| (s + v.abs(), n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

impl PathTrackEnv {
    pub fn new(params: VehicleParams, bounds: ActionBounds, mode: PathMode) -> Result<Self, PathError> {
        params.validate()?;
        Ok(Self { params, bounds, mode })
    }

    /// Initial state: a small perturbation of nominal tracking at a random
    /// point along the path.
    pub fn reset<R: Rng + ?Sized>(&self, rng: &mut R) -> VehicleState {
        VehicleState {
            p_x: rng.random_range(0.0..PATH_PERIOD),
            delta_y: rng.random_range(-1.0..=1.0),
            delta_phi: rng.random_range(-0.1..=0.1),
            v_x: rng.random_range(18.0..=22.0),
            v_y: 0.0,
            omega: 0.0,
        }
    }

    pub fn reset_seeded(&self, seed: u64) -> VehicleState {
        self.reset(&mut ChaCha8Rng::seed_from_u64(seed))
    }

    /// Clamps the actions to their bounds and advances one step.
    pub fn step(&self, s: &VehicleState, control: Control, dist: f64) -> Result<(VehicleState, Control, f64, f64), PathError> {
        let c = self.bounds.clamp_control(control);
        let u = self.bounds.clamp_dist(dist);
        let cost = reward(s, c);
        let next = dynamics_step(s, c, u, &self.params, self.mode)?;
        Ok((next, c, u, cost))
    }

    /// Runs `steps` transitions from `start`. Without an adversary the
    /// disturbance is zero.
    pub fn rollout(
        &self,
        start: VehicleState,
        protagonist: &mut dyn FnMut(&VehicleState) -> Control,
        mut adversary: Option<&mut dyn FnMut(&VehicleState) -> f64>,
        steps: usize,
        gamma: f64,
    ) -> Result<Trajectory, PathError> {
        let mut traj = Trajectory {
            states: Vec::with_capacity(steps + 1),
            controls: Vec::with_capacity(steps),
            disturbances: Vec::with_capacity(steps),
            costs: Vec::with_capacity(steps),
            discounted_cost: 0.0,
            total_cost: 0.0,
        };
        traj.states.push(start);
        let mut s = start;
        let mut disc = 1.0;
        for step in 0..steps {
            let c = protagonist(&s);
            let u = adversary.as_mut().map_or(0.0, |adv| adv(&s));
            let (next, c, u, cost) = self.step(&s, c, u)?;
            if !next.is_finite() {
                return Err(PathError::NonFiniteState { step });
            }
            traj.controls.push(c);
            traj.disturbances.push(u);
            traj.costs.push(cost);
            traj.discounted_cost += disc * cost;
            traj.total_cost += cost;
            disc *= gamma;
            traj.states.push(next);
            s = next;
        }
        Ok(traj)
    }
}
