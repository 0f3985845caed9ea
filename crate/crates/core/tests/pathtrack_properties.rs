//! Structural properties of the vehicle model over random states.

use mgsmooth::pathtrack::{
    dynamics_step, reward, ActionBounds, Control, PathMode, PathTrackEnv, VehicleParams, VehicleState,
};
use proptest::prelude::*;

fn state() -> impl Strategy<Value = VehicleState> {
    (0.0f64..600.0, -3.0f64..3.0, -0.5f64..0.5, 5.0f64..30.0, -2.0f64..2.0, -1.0f64..1.0).prop_map(
        |(p_x, delta_y, delta_phi, v_x, v_y, omega)| VehicleState {
            p_x,
            delta_y,
            delta_phi,
            v_x,
            v_y,
            omega,
        },
    )
}

fn control() -> impl Strategy<Value = Control> {
    (-0.4f64..0.4, -1.5f64..3.0).prop_map(|(steer, accel)| Control { steer, accel })
}

fn mode() -> impl Strategy<Value = PathMode> {
    prop_oneof![Just(PathMode::Straight), Just(PathMode::Sine)]
}

fn mirror(s: &VehicleState) -> VehicleState {
    VehicleState {
        delta_y: -s.delta_y,
        delta_phi: -s.delta_phi,
        v_y: -s.v_y,
        omega: -s.omega,
        ..*s
    }
}

fn close(a: [f64; 6], b: [f64; 6], tol: f64) -> bool {
    a.iter().zip(&b).all(|(x, y)| (x - y).abs() <= tol * x.abs().max(1.0))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn disturbance_only_shifts_lateral_velocity(s in state(), c in control(), u in -0.5f64..0.5, m in mode()) {
        let p = VehicleParams::default();
        let with = dynamics_step(&s, c, u, &p, m).unwrap().to_array();
        let without = dynamics_step(&s, c, 0.0, &p, m).unwrap().to_array();
        for i in 0..6 {
            if i == 4 {
                prop_assert!((with[i] - without[i] - u).abs() < 1e-12);
            } else {
                prop_assert_eq!(with[i], without[i]);
            }
        }
    }

    #[test]
    fn cost_is_nonnegative_and_mirror_symmetric(s in state(), c in control()) {
        let r = reward(&s, c);
        prop_assert!(r >= 0.0);
        let flipped = Control { steer: -c.steer, ..c };
        prop_assert_eq!(reward(&mirror(&s), flipped), r);
    }

    #[test]
    fn straight_dynamics_are_mirror_symmetric(s in state(), c in control(), u in -0.5f64..0.5) {
        let p = VehicleParams::default();
        let next = dynamics_step(&s, c, u, &p, PathMode::Straight).unwrap();
        let flipped = Control { steer: -c.steer, ..c };
        let mirrored = dynamics_step(&mirror(&s), flipped, -u, &p, PathMode::Straight).unwrap();
        prop_assert!(close(mirror(&next).to_array(), mirrored.to_array(), 1e-12));
    }

    #[test]
    fn speed_never_goes_negative(s in state(), c in control(), m in mode()) {
        let slow = VehicleState { v_x: 0.05, ..s };
        let next = dynamics_step(&slow, Control { accel: -1.5, ..c }, 0.0, &VehicleParams::default(), m).unwrap();
        prop_assert!(next.v_x >= 0.0);
    }

    #[test]
    fn step_clamps_actions(s in state(), steer in -5.0f64..5.0, accel in -5.0f64..5.0, u in -5.0f64..5.0) {
        let env = PathTrackEnv::default();
        let b = ActionBounds::default();
        let (_, c, d, _) = env.step(&s, Control { steer, accel }, u).unwrap();
        prop_assert!(c.steer >= b.steer.0 && c.steer <= b.steer.1);
        prop_assert!(c.accel >= b.accel.0 && c.accel <= b.accel.1);
        prop_assert!(d >= b.dist.0 && d <= b.dist.1);
    }

    #[test]
    fn sine_heading_error_stays_wrapped(s in state(), c in control(), m in mode()) {
        let next = dynamics_step(&s, c, 0.0, &VehicleParams::default(), m).unwrap();
        prop_assert!(next.is_finite());
        if m == PathMode::Sine {
            prop_assert!(next.delta_phi > -std::f64::consts::PI && next.delta_phi <= std::f64::consts::PI);
        }
    }
}

#[test]
fn nominal_straight_tracking_is_a_fixed_error() {
    let p = VehicleParams::default();
    let mut s = VehicleState::nominal(0.0);
    for k in 1..=100 {
        s = dynamics_step(&s, Control::default(), 0.0, &p, PathMode::Straight).unwrap();
        assert_eq!([s.delta_y, s.delta_phi, s.v_y, s.omega], [0.0; 4]);
        assert!((s.p_x - 2.0 * k as f64).abs() < 1e-9);
    }
}
