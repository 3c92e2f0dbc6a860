use proptest::prelude::*;
use robin_core::moduli::GridOptions;
use robin_core::verifier::*;
use robin_core::{BallDomain, BallSpec, BoundaryLabel, ChargeConfig, Constants, Cut, DomainSpec, Error, GammaRule, Point};

fn p(v: &[f64]) -> Point {
    Point::new(v.to_vec()).unwrap()
}

fn ball(c: &[f64], r: f64) -> BallSpec {
    BallSpec::new(p(c), r).unwrap()
}

fn three_balls() -> impl Strategy<Value = PointChargeSpec> {
    let one = (
        [-2.0..2.0f64, -2.0..2.0f64, -2.0..2.0f64],
        0.1..0.8f64,
        [-0.9..0.9f64, -0.9..0.9f64, -0.9..0.9f64],
        -2.0..2.0f64,
    );
    [one.clone(), one.clone(), one].prop_filter_map("overlap", |parts| {
        let mut balls = Vec::new();
        let mut points = Vec::new();
        let mut weights = Vec::new();
        for (c, r, off, w) in parts {
            let n = off.iter().map(|a| a * a).sum::<f64>().sqrt().max(1.0);
            let x: Vec<f64> = c.iter().zip(&off).map(|(a, o)| a + r * o / n * 0.99).collect();
            balls.push(ball(&c, r));
            points.push(p(&x));
            weights.push(w);
        }
        let disjoint = (0..3).all(|i| (i + 1..3).all(|j| balls[i].disjoint_from(&balls[j])));
        disjoint.then_some(PointChargeSpec { balls, points, weights })
    })
}

fn moved(spec: &PointChargeSpec, f: impl Fn(&[f64]) -> Vec<f64>, scale: f64) -> PointChargeSpec {
    PointChargeSpec {
        balls: spec
            .balls
            .iter()
            .map(|b| BallSpec::new(p(&f(b.center.coords())), b.radius * scale).unwrap())
            .collect(),
        points: spec.points.iter().map(|q| p(&f(q.coords()))).collect(),
        weights: spec.weights.clone(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn point_charge_slack_invariances(spec in three_balls(), t in [-5.0..5.0f64, -5.0..5.0f64, -5.0..5.0f64], s in 0.2..5.0f64) {
        let r = verify_point_charges(&spec).unwrap();
        prop_assert!(r.holds && r.slack >= -1e-9);
        let shifted = moved(&spec, |x| x.iter().zip(&t).map(|(a, b)| a + b).collect(), 1.0);
        let rt = verify_point_charges(&shifted).unwrap();
        prop_assert!((rt.slack - r.slack).abs() <= 1e-12 * r.lhs.abs().max(r.rhs.abs()).max(1.0));
        let dilated = moved(&spec, |x| x.iter().map(|a| a * s).collect(), s);
        let rd = verify_point_charges(&dilated).unwrap();
        prop_assert!((rd.slack - r.slack / s).abs() <= 1e-12 * (r.lhs.abs().max(r.rhs.abs()) / s).max(1.0));
    }

    #[test]
    fn kufarev_rotation_invariance(
        c1 in [-0.5..0.5f64, -0.5..0.5f64, -0.5..0.5f64],
        c2 in [-0.5..0.5f64, -0.5..0.5f64, -0.5..0.5f64],
        angles in [0.0..6.3f64, 0.0..6.3f64],
    ) {
        let n1 = c1.iter().map(|a| a * a).sum::<f64>().sqrt();
        let n2 = c2.iter().map(|a| a * a).sum::<f64>().sqrt();
        let d = c1.iter().zip(&c2).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        let r = (1.0 - n1.max(n2)).min(d / 2.0) * 0.9;
        prop_assume!(r > 0.02 && n1 > 0.05 && n2 > 0.05);
        let spec = KufarevSpec { balls: [ball(&c1, r), ball(&c2, r)], points: [p(&c1), p(&c2)] };
        let base = verify_kufarev_3d(&spec).unwrap();
        prop_assert!(base.holds);
        let (a, b) = (angles[0], angles[1]);
        let rot = |x: &[f64]| -> Vec<f64> {
            let (x0, x1, x2) = (x[0], x[1] * a.cos() - x[2] * a.sin(), x[1] * a.sin() + x[2] * a.cos());
            vec![x0 * b.cos() - x1 * b.sin(), x0 * b.sin() + x1 * b.cos(), x2]
        };
        let spec_r = KufarevSpec {
            balls: [ball(&rot(&c1), r), ball(&rot(&c2), r)],
            points: [p(&rot(&c1)), p(&rot(&c2))],
        };
        let turned = verify_kufarev_3d(&spec_r).unwrap();
        prop_assert!((turned.slack - base.slack).abs() <= 1e-12 * base.lhs.abs().max(1.0));
    }
}

#[test]
fn single_ball_always_holds() {
    let spec = PointChargeSpec {
        balls: vec![ball(&[1.0, 1.0, 1.0], 0.5)],
        points: vec![p(&[1.1, 1.0, 0.9])],
        weights: vec![3.0],
    };
    let r = verify_point_charges(&spec).unwrap();
    assert_eq!(r.rhs, 0.0);
    assert!(r.lhs < 0.0 && r.holds);
}

#[test]
fn overlapping_balls_are_refused() {
    let spec = PointChargeSpec {
        balls: vec![ball(&[0.0, 0.0, 0.0], 1.0), ball(&[1.5, 0.0, 0.0], 1.0)],
        points: vec![p(&[0.0, 0.0, 0.0]), p(&[1.5, 0.0, 0.0])],
        weights: vec![1.0, 1.0],
    };
    assert!(matches!(verify_point_charges(&spec), Err(Error::Overlap(_))));
}

#[test]
fn point_charges_in_five_dimensions() {
    let spec = PointChargeSpec {
        balls: vec![ball(&[0.0; 5], 1.0), ball(&[3.0, 0.0, 0.0, 0.0, 0.0], 1.0)],
        points: vec![p(&[0.1, 0.2, 0.0, 0.0, 0.0]), p(&[3.0, 0.5, 0.0, 0.0, 0.0])],
        weights: vec![1.0, -2.0],
    };
    let r = verify_point_charges(&spec).unwrap();
    assert!(r.holds);
    assert_eq!(r.details["sweep_monotone"], serde_json::json!(true));
}

#[test]
fn shrinking_kufarev_balls_increase_slack() {
    let mut last = f64::NEG_INFINITY;
    for r in [0.25, 0.1, 0.01, 0.001] {
        let spec = KufarevSpec {
            balls: [ball(&[0.4, 0.0, 0.0], r), ball(&[-0.4, 0.0, 0.0], r)],
            points: [p(&[0.4, 0.0, 0.0]), p(&[-0.4, 0.0, 0.0])],
        };
        let rep = verify_kufarev_3d(&spec).unwrap();
        assert!(rep.slack > last);
        last = rep.slack;
    }
    assert!(last > 100.0);
}

#[test]
fn extension_of_unit_ball() {
    let c = Constants::new(3).unwrap();
    let spec = ExtensionSpec {
        domain: DomainSpec::ball(BallSpec::unit(3), GammaRule::Full),
        extended: DomainSpec::ball(ball(&[0.0; 3], 1.5), GammaRule::Full),
        charges: ChargeConfig::single(Point::origin(3), 1.0),
        direction: ExtensionDirection::AcrossGamma,
    };
    let r = verify_extension_monotonicity(&spec, &VerifyOptions::default()).unwrap();
    assert!((r.slack - c.lambda / 3.0).abs() < 1e-15);

    let same = ExtensionSpec {
        extended: spec.domain.clone(),
        ..spec.clone()
    };
    let r = verify_extension_monotonicity(&same, &VerifyOptions::default()).unwrap();
    assert_eq!(r.slack, 0.0);

    let wrong = ExtensionSpec {
        direction: ExtensionDirection::AcrossFree,
        ..spec
    };
    assert!(matches!(
        verify_extension_monotonicity(&wrong, &VerifyOptions::default()),
        Err(Error::Structural { .. })
    ));
}

#[test]
fn extension_containment_is_checked() {
    let spec = ExtensionSpec {
        domain: DomainSpec::ball(ball(&[0.5, 0.0, 0.0], 1.0), GammaRule::Full),
        extended: DomainSpec::ball(BallSpec::unit(3), GammaRule::Full),
        charges: ChargeConfig::single(p(&[0.5, 0.0, 0.0]), 1.0),
        direction: ExtensionDirection::AcrossGamma,
    };
    assert!(matches!(
        verify_extension_monotonicity(&spec, &VerifyOptions::default()),
        Err(Error::Containment(_))
    ));
}

fn half_ball(face: BoundaryLabel, h: f64) -> DomainSpec {
    let mut b = BallDomain::new(BallSpec::unit(3), GammaRule::Full).with_cut(Cut {
        normal: vec![0.0, 0.0, 1.0],
        offset: 0.0,
        face,
    });
    b.h = Some(h);
    DomainSpec::Ball(b)
}

#[test]
fn half_ball_extension_across_free_face() {
    for h in [1.0 / 16.0, 1.0 / 32.0] {
        let mut capped = BallDomain::new(
            BallSpec::unit(3),
            GammaRule::Cap {
                normal: vec![0.0, 0.0, 1.0],
                offset: 0.0,
            },
        );
        capped.h = Some(h);
        let spec = ExtensionSpec {
            domain: half_ball(BoundaryLabel::Neumann, h),
            extended: DomainSpec::Ball(capped),
            charges: ChargeConfig::single(p(&[0.0, 0.0, 0.5]), 1.0),
            direction: ExtensionDirection::AcrossFree,
        };
        let r = verify_extension_monotonicity(&spec, &VerifyOptions::default()).unwrap();
        assert!(r.holds, "h = {h}: {r:?}");
    }
}

#[test]
fn half_ball_with_dirichlet_face_cannot_extend_across_free() {
    let h = 1.0 / 16.0;
    let mut capped = BallDomain::new(
        BallSpec::unit(3),
        GammaRule::Cap {
            normal: vec![0.0, 0.0, 1.0],
            offset: 0.0,
        },
    );
    capped.h = Some(h);
    let spec = ExtensionSpec {
        domain: half_ball(BoundaryLabel::Dirichlet, h),
        extended: DomainSpec::Ball(capped),
        charges: ChargeConfig::single(p(&[0.0, 0.0, 0.5]), 1.0),
        direction: ExtensionDirection::AcrossFree,
    };
    assert!(matches!(
        verify_extension_monotonicity(&spec, &VerifyOptions::default()),
        Err(Error::Structural { .. })
    ));
}

fn neumann_parent_split() -> DecompositionSpec {
    let z = [p(&[-0.4, 0.0, 0.0]), p(&[0.4, 0.0, 0.0])];
    DecompositionSpec {
        parent: Piece {
            domain: DomainSpec::ball(BallSpec::unit(3), GammaRule::Empty),
            charges: ChargeConfig::new(z.to_vec(), vec![1.0, -1.0]).unwrap(),
        },
        parts: vec![
            Piece {
                domain: DomainSpec::ball(ball(z[0].coords(), 0.3), GammaRule::Full),
                charges: ChargeConfig::single(z[0].clone(), 1.0),
            },
            Piece {
                domain: DomainSpec::ball(ball(z[1].coords(), 0.3), GammaRule::Full),
                charges: ChargeConfig::single(z[1].clone(), -1.0),
            },
        ],
        index_map: None,
    }
}

#[test]
fn corrections_tighten_the_slack() {
    let opts = VerifyOptions {
        corrections: true,
        ..Default::default()
    };
    let r = verify_composition(&neumann_parent_split(), CompositionMode::Superadditive, &opts).unwrap();
    let with = r.slack_with_corrections.unwrap();
    assert!(with <= r.slack);
    assert!(with >= -r.error_bar, "{r:?}");
}

#[test]
fn composition_matches_kufarev() {
    let r = verify_composition(
        &neumann_parent_split(),
        CompositionMode::Superadditive,
        &VerifyOptions::default(),
    )
    .unwrap();
    let k = verify_kufarev_3d(&KufarevSpec {
        balls: [ball(&[-0.4, 0.0, 0.0], 0.3), ball(&[0.4, 0.0, 0.0], 0.3)],
        points: [p(&[-0.4, 0.0, 0.0]), p(&[0.4, 0.0, 0.0])],
    })
    .unwrap();
    assert!((r.slack - k.slack).abs() < 1e-13);
}

#[test]
fn explicit_index_map() {
    let mut s = neumann_parent_split();
    s.index_map = Some(vec![vec![0], vec![1]]);
    assert!(check_decomposition(&s, CompositionMode::Superadditive, 1.0 / 16.0).is_ok());
    s.index_map = Some(vec![vec![1], vec![0]]);
    assert!(matches!(
        check_decomposition(&s, CompositionMode::Superadditive, 1.0 / 16.0),
        Err(Error::Structural { ref condition, .. }) if condition == "charge-map"
    ));
}

#[test]
fn half_ball_tiling_on_the_grid() {
    let z = [p(&[0.0, 0.0, 0.4]), p(&[0.0, 0.0, -0.4])];
    let part = |sign: f64, face| {
        let mut b = BallDomain::new(BallSpec::unit(3), GammaRule::Full).with_cut(Cut {
            normal: vec![0.0, 0.0, sign],
            offset: 0.0,
            face,
        });
        b.h = Some(1.0 / 16.0);
        DomainSpec::Ball(b)
    };
    let build = |face| DecompositionSpec {
        parent: Piece {
            domain: DomainSpec::ball(BallSpec::unit(3), GammaRule::Full),
            charges: ChargeConfig::new(z.to_vec(), vec![1.0, 1.0]).unwrap(),
        },
        parts: vec![
            Piece {
                domain: part(1.0, face),
                charges: ChargeConfig::single(z[0].clone(), 1.0),
            },
            Piece {
                domain: part(-1.0, face),
                charges: ChargeConfig::single(z[1].clone(), 1.0),
            },
        ],
        index_map: None,
    };
    let opts = VerifyOptions::default();
    let r = verify_composition(&build(BoundaryLabel::Dirichlet), CompositionMode::Superadditive, &opts).unwrap();
    assert!(r.holds && r.slack > 0.0);
    assert!(matches!(
        verify_composition(&build(BoundaryLabel::Neumann), CompositionMode::Superadditive, &opts),
        Err(Error::Structural { ref condition, .. }) if condition == "interior-dirichlet"
    ));
}

#[test]
fn hemisphere_subset_on_the_grid() {
    let z = ChargeConfig::single(Point::origin(3), 1.0);
    let dom = |gamma| {
        let mut b = BallDomain::new(BallSpec::unit(3), gamma);
        b.h = Some(1.0 / 16.0);
        DomainSpec::Ball(b)
    };
    let hemi = GammaRule::Cap {
        normal: vec![0.0, 0.0, -1.0],
        offset: 0.0,
    };
    let s = DecompositionSpec {
        parent: Piece {
            domain: dom(GammaRule::Full),
            charges: z.clone(),
        },
        parts: vec![Piece {
            domain: dom(hemi.clone()),
            charges: z.clone(),
        }],
        index_map: None,
    };
    let opts = VerifyOptions {
        grid: GridOptions::default(),
        ..Default::default()
    };
    let r = verify_composition(&s, CompositionMode::Subadditive, &opts).unwrap();
    assert!(r.holds && r.slack > 0.0, "{r:?}");
    // the reverse inclusion is refused
    let rev = DecompositionSpec {
        parent: Piece {
            domain: dom(hemi),
            charges: z.clone(),
        },
        parts: vec![Piece {
            domain: dom(GammaRule::Full),
            charges: z,
        }],
        index_map: None,
    };
    assert!(matches!(
        check_decomposition(&rev, CompositionMode::Subadditive, 1.0 / 16.0),
        Err(Error::Structural { .. })
    ));
}

#[test]
fn batch_matches_sequential() {
    let specs: Vec<PointChargeSpec> = (0..20)
        .map(|i| {
            let d = 1.0 + i as f64 * 0.1;
            PointChargeSpec {
                balls: vec![ball(&[0.0; 3], 0.5), ball(&[d, 0.0, 0.0], 0.5)],
                points: vec![p(&[0.1, 0.0, 0.0]), p(&[d, 0.2, 0.0])],
                weights: vec![1.0, -1.0 + i as f64 * 0.1],
            }
        })
        .collect();
    let batch = verify_point_charges_batch(&specs);
    for (s, b) in specs.iter().zip(batch) {
        assert_eq!(verify_point_charges(s).unwrap(), b.unwrap());
    }
}
