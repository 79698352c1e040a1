use nsum_core::analytic::{
    bias_scaled, bias_sign_region, expect_general, s1_degree_variances, s1_prevalence_variances, var_general,
    var_scaled, winner_grid, BiasSign, ClosedForm, GridFixed, GridPreset, LinkProbabilities,
};
use proptest::prelude::*;

fn sign_of(x: f64) -> BiasSign {
    if x > 0.0 {
        BiasSign::Positive
    } else if x < 0.0 {
        BiasSign::Negative
    } else {
        BiasSign::Zero
    }
}

proptest! {
    #[test]
    fn scaled_bias_is_general_expectation_minus_r(log_a in -4.0f64..4.0, r in 0.001f64..0.999, p in 0.0001f64..0.5) {
        let a = log_a.exp();
        prop_assume!(a * p <= 1.0);
        let probs = LinkProbabilities::scaled(a, p);
        for kind in ClosedForm::BOTH {
            let general = expect_general(kind, &probs, r).unwrap() - r;
            let scaled = bias_scaled(kind, a, r);
            prop_assert!((general - scaled).abs() <= 1e-9 * (1.0 + scaled.abs()), "{kind}: {general} vs {scaled}");
        }
    }

    #[test]
    fn scaled_variance_is_general_variance(log_a in -3.0f64..3.0, r in 0.01f64..0.99, p in 0.001f64..0.1,
                                          r_k in 0.01f64..0.5, n in 50.0f64..2000.0, big_n in 1e4f64..1e6) {
        let a = log_a.exp();
        prop_assume!(a * p <= 1.0);
        let probs = LinkProbabilities::scaled(a, p);
        for kind in ClosedForm::BOTH {
            let general = var_general(kind, &probs, r, n, big_n, r_k * big_n).unwrap();
            let scaled = var_scaled(kind, a, r, p, r_k, n * big_n).unwrap();
            prop_assert!((general - scaled).abs() <= 1e-9 * scaled, "{kind}: {general} vs {scaled}");
        }
    }

    #[test]
    fn unit_scale_variances_coincide(r in 0.001f64..0.999, p in 0.0001f64..1.0, r_k in 0.001f64..0.999, nn in 1.0f64..1e9) {
        let x = var_scaled(ClosedForm::DRpR, 1.0, r, p, r_k, nn).unwrap();
        let y = var_scaled(ClosedForm::DRpA, 1.0, r, p, r_k, nn).unwrap();
        prop_assert!((x - y).abs() <= 1e-12 * x.abs());
    }

    #[test]
    fn sign_regions_match_bias_sign(log_a in -5.0f64..5.0, r in 0.0001f64..0.9999) {
        let a = log_a.exp();
        for kind in ClosedForm::BOTH {
            prop_assert_eq!(bias_sign_region(kind, a, r), sign_of(bias_scaled(kind, a, r)));
        }
    }

    #[test]
    fn prevalence_ordering(d in prop::collection::vec(1u32..1000, 2..50), r in 0.001f64..0.999) {
        prop_assume!(d.iter().any(|&x| x != d[0]));
        let d: Vec<f64> = d.into_iter().map(f64::from).collect();
        let (roa, aor) = s1_prevalence_variances(&d, r, d.len()).unwrap();
        prop_assert!(roa < aor);
    }

    #[test]
    fn degree_ordering(sizes in prop::collection::vec(1u32..5000, 2..30), scale in 2.0f64..100.0, d_i in 1.0f64..500.0) {
        prop_assume!(sizes.iter().any(|&x| x != sizes[0]));
        let sizes: Vec<f64> = sizes.into_iter().map(f64::from).collect();
        let n = sizes.iter().sum::<f64>() * scale;
        let (roa, aor) = s1_degree_variances(d_i, n, &sizes).unwrap();
        prop_assert!(roa < aor);
    }
}

#[test]
fn boundary_points_are_exact_zeros() {
    for r in [0.1, 0.25, 0.4, 0.6] {
        assert_eq!(bias_scaled(ClosedForm::DRpR, 1.0, r), 0.0);
        assert_eq!(bias_sign_region(ClosedForm::DRpR, 1.0, r), BiasSign::Zero);
    }
    assert_eq!(bias_scaled(ClosedForm::DRpR, 3.0, 0.5), 0.0);
    // a = (1 - R) / R for R with exact binary representations
    for (a, r) in [(3.0, 0.25), (1.0, 0.5), (7.0, 0.125)] {
        assert_eq!(bias_scaled(ClosedForm::DRpA, a, r), 0.0);
        assert_eq!(bias_sign_region(ClosedForm::DRpA, a, r), BiasSign::Zero);
    }
}

#[test]
fn preset_grids_are_finite_with_consistent_rmse() {
    for preset in [GridPreset::Fig1Top, GridPreset::Fig1Bottom] {
        let (la, r) = preset.axes::<f64>();
        let grid = winner_grid(GridFixed::new(0.01, 0.1, 5e5).unwrap(), la, r);
        for c in &grid.cells {
            assert!(c.is_valid(), "{c:?}");
            for v in [c.bias_drpr, c.bias_drpa, c.rmse_drpr, c.rmse_drpa] {
                assert!(v.is_finite());
            }
            assert!(c.var_drpr >= 0.0 && c.var_drpa >= 0.0);
            assert_eq!(c.rmse_drpr, (c.bias_drpr * c.bias_drpr + c.var_drpr).sqrt());
            assert_eq!(c.rmse_drpa, (c.bias_drpa * c.bias_drpa + c.var_drpa).sqrt());
        }
    }
}

#[test]
fn single_precision_tracks_double() {
    let a = 2.0f64;
    for kind in ClosedForm::BOTH {
        let v64 = var_scaled(kind, a, 0.25, 0.01, 0.1, 5e5).unwrap();
        let v32 = var_scaled(kind, a as f32, 0.25, 0.01, 0.1, 5e5).unwrap();
        assert!((v32 as f64 - v64).abs() < 1e-5 * v64);
        let b32 = bias_scaled(kind, a as f32, 0.25f32);
        assert!((b32 as f64 - bias_scaled(kind, a, 0.25)).abs() < 1e-6);
    }
}
