mod common;

use common::*;
use igp::KernelFamily;
use proptest::prelude::*;

fn tail_mass(f: KernelFamily) -> f64 {
    midpoint_pieces(&|t| f.phi(t), 0.0, 60.0, &[1.0, 5.0, 20.0])
}

#[test]
fn first_antiderivative_is_integral_of_phi() {
    for f in FAMILIES {
        for &t in &[-7.5, -2.0, -0.3, 0.0, 0.01, 1.0, 4.0, 9.0] {
            let want = f.antiderivative(0.0) + if t >= 0.0 {
                midpoint(&|s| f.phi(s), 0.0, t)
            } else {
                -midpoint(&|s| f.phi(s), t, 0.0)
            };
            assert!((f.antiderivative(t) - want).abs() < 1e-10, "{f:?} {t}");
        }
    }
}

#[test]
fn second_antiderivative_is_integral_of_first() {
    for f in FAMILIES {
        for &t in &[-6.0, -1.0, 0.5, 3.0, 8.0] {
            let (a, b) = if t >= 0.0 { (0.0, t) } else { (t, 0.0) };
            let area = midpoint(&|s| f.antiderivative(s), a, b);
            let want = f.second_antiderivative(0.0) + if t >= 0.0 { area } else { -area };
            assert!((f.second_antiderivative(t) - want).abs() < 1e-9, "{f:?} {t}");
        }
    }
}

#[test]
fn derivatives_by_central_differences() {
    for f in FAMILIES {
        for i in 0..=2000 {
            let t = -10.0 + i as f64 * 0.01;
            if f != KernelFamily::SquaredExponential && t.abs() < 1e-3 {
                continue;
            }
            let d1 = central(&|s| f.antiderivative(s), t, 1e-5);
            assert!((d1 - f.phi(t)).abs() <= 1e-6, "{f:?} dPhi at {t}");
            let h = 1e-3;
            let d2 = (f.second_antiderivative(t + h) - 2.0 * f.second_antiderivative(t) + f.second_antiderivative(t - h)) / (h * h);
            assert!((d2 - f.phi(t)).abs() <= 1e-4, "{f:?} d2Psi at {t}");
            let dp = central(&|s| f.phi(s), t, 1e-6);
            assert!((dp - f.phi_prime(t)).abs() <= 1e-6, "{f:?} phi' at {t}");
        }
    }
}

#[test]
fn phi_is_normalised_and_even() {
    for f in FAMILIES {
        assert_eq!(f.phi(0.0), 1.0);
        for &t in &[0.1, 1.0, 3.3] {
            assert_eq!(f.phi(t), f.phi(-t));
            assert!(f.phi(t) < 1.0 && f.phi(t) > 0.0);
        }
    }
}

#[test]
fn antiderivative_limits_match_half_mass() {
    for f in FAMILIES {
        let m = tail_mass(f);
        assert!((f.antiderivative(60.0) - f.antiderivative(0.0) - m).abs() < 1e-9, "{f:?}");
    }
}

#[test]
fn scaled_forms_agree_with_plain_forms() {
    for f in [KernelFamily::Exponential, KernelFamily::Matern32, KernelFamily::Matern52] {
        let c = f.decay_rate().unwrap();
        let m = tail_mass(f);
        for &t in &[0.5, 2.0, 6.0, -3.0] {
            for &off in &[0.0, 0.7, 2.5] {
                let e = (-c * off).exp();
                let phi = f.phi_scaled(t, off).unwrap() * e;
                assert!(rel_err(phi, f.phi(t), 1e-300) < 1e-13, "{f:?} phi {t} {off}");
                let a = f.antiderivative_scaled(t, off).unwrap() * e;
                let plain = f.antiderivative(t) - t.signum() * m;
                assert!((a - plain).abs() < 1e-9, "{f:?} Phi {t} {off}: {a} vs {plain}");
                // one-sided value at 0 is the limit from the chosen side
                let z = f.antiderivative_scaled_side(0.0, 1.0, off).unwrap();
                let near = f.antiderivative_scaled(1e-12, off).unwrap();
                assert!((z - near).abs() < 1e-9);
            }
        }
    }
}

#[test]
fn scaled_forms_survive_huge_offsets() {
    for f in [KernelFamily::Exponential, KernelFamily::Matern32, KernelFamily::Matern52] {
        let v = f.second_antiderivative_scaled(800.0, 799.0).unwrap();
        assert!(v.is_finite() && v > 0.0, "{f:?}");
    }
}

#[test]
fn names_round_trip() {
    for f in FAMILIES {
        assert_eq!(f.tag().parse::<KernelFamily>().unwrap(), f);
    }
    assert!("rbf9".parse::<KernelFamily>().is_err());
}

proptest! {
    #[test]
    fn antiderivative_is_odd_and_second_is_even(t in -12.0f64..12.0) {
        for f in FAMILIES {
            let a = f.antiderivative(t) - f.antiderivative(0.0);
            let b = f.antiderivative(-t) - f.antiderivative(0.0);
            prop_assert!((a + b).abs() < 1e-13);
            prop_assert!((f.second_antiderivative(t) - f.second_antiderivative(-t)).abs() < 1e-12 * (1.0 + t * t));
        }
    }

    #[test]
    fn phi_is_monotone_in_distance(a in 0.0f64..8.0, b in 0.0f64..8.0) {
        for f in FAMILIES {
            if a < b {
                prop_assert!(f.phi(a) >= f.phi(b));
            }
        }
    }
}
