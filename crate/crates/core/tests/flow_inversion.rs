use proptest::prelude::*;
use tau_core::flow::{flow_to_foc, warp_to_flow, AffineFlow, AffineWarp};
use tau_core::model::{Timestamp, Vec2, Vec3};

fn draw() -> impl Strategy<Value = (Vec3, Vec3, Vec2)> {
    (
        prop::array::uniform3(-1.0..1.0f64),
        prop::array::uniform2(-0.5..0.5f64),
        0.2..2.0f64,
        prop::array::uniform2(-0.3..0.3f64),
    )
        .prop_map(|(xd, nxy, nz, x)| (Vec3::from(xd), Vec3::new(nxy[0], nxy[1], nz), Vec2::from(x)))
        .prop_filter("a3, a6 well away from zero", |(xd, n, _)| (xd.x * n.z).abs() > 1e-3 && (xd.y * n.z).abs() > 1e-3)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn inversion_reproduces_foc((xdot, n, x) in draw()) {
        let flow = AffineFlow::from_motion(&xdot, &n, Timestamp::ZERO);
        let f = flow_to_foc(&flow, x, 1e-9).unwrap();
        let expected = xdot * n.dot(&Vec3::new(x.x, x.y, 1.0));
        prop_assert!((f.foc - expected).abs().max() <= 1e-9 * expected.abs().max().max(1.0));
    }

    #[test]
    fn eta_forms_agree((xdot, n, _) in draw()) {
        let [a1, a2, a3, a4, a5, a6] = AffineFlow::from_motion(&xdot, &n, Timestamp::ZERO).a;
        let eta_a = a4 * a3 / a6 - a1;
        let eta_b = a2 * a6 / a3 - a5;
        prop_assert!((eta_a - eta_b).abs() <= 1e-9 * eta_a.abs().max(1.0));
        prop_assert!((eta_a - xdot.z * n.z).abs() <= 1e-9 * eta_a.abs().max(1.0));
    }

    #[test]
    fn flow_of_exponential_warp(a in prop::array::uniform6(-0.5..0.5f64)) {
        // W(t) = exp(A t) has Ẇ W⁻¹ = A for all t
        let m = nalgebra::Matrix3::new(a[0], a[1], a[2], a[3], a[4], a[5], 0.0, 0.0, 0.0);
        let dt = 1e-4;
        let w1 = AffineWarp::from_matrix(&(m * 1.0).exp(), Timestamp::from_secs(1.0));
        let w0 = AffineWarp::from_matrix(&(m * (1.0 - dt)).exp(), Timestamp::from_secs(1.0 - dt));
        let flow = warp_to_flow(&w1, &w0, dt).unwrap();
        for (got, want) in flow.a.iter().zip(&a) {
            prop_assert!((got - want).abs() < 1e-3);
        }
    }
}
