use proptest::prelude::*;
use rnuclei::config::*;
use rnuclei::electrostatics::*;
use rnuclei::geometry::DomainShape;
use rnuclei::spatial::{build_index, window_statistics};
use rnuclei::vec3::Vec3;

fn pc(x: f64, y: f64, z: f64, q: f64) -> PointCharge {
    PointCharge::new(Vec3::new(x, y, z), q)
}

/// Straight double loop over `i < j`.
fn naive_pairs(charges: &[PointCharge], kernel: impl Fn(f64) -> f64) -> f64 {
    let mut e = 0.0;
    for i in 0..charges.len() {
        for j in i + 1..charges.len() {
            let r = (charges[i].position - charges[j].position).norm();
            e += charges[i].charge * charges[j].charge * kernel(r);
        }
    }
    e
}

fn lattice_in_cube8() -> (NuclearConfiguration, DomainShape) {
    let c = sample_configuration(
        &LatticeSpec::cubic(),
        &DisplacementLaw::PointMass,
        &ChargeLaw::Constant { z: 1.0 },
        Aabb::cube(-0.5, 7.5),
        1.5,
        0,
    )
    .unwrap();
    (c, DomainShape::aligned_cube(8).unwrap())
}

fn gaussian_in_cube(l: usize, seed: u64) -> (NuclearConfiguration, DomainShape) {
    let c = sample_configuration(
        &LatticeSpec::cubic(),
        &DisplacementLaw::gaussian(0.5),
        &ChargeLaw::Constant { z: 1.0 },
        Aabb::cube(-0.5, l as f64 - 0.5),
        7.0,
        seed,
    )
    .unwrap();
    (c, DomainShape::aligned_cube(l).unwrap())
}

#[test]
fn coulomb_pair_examples() {
    assert_eq!(coulomb_energy(&[pc(0.0, 0.0, 0.0, 1.0), pc(2.0, 0.0, 0.0, 1.0)]).unwrap(), 0.5);
    assert_eq!(coulomb_energy(&[pc(0.0, 0.0, 0.0, 1.0), pc(0.0, 1.0, 0.0, -1.0)]).unwrap(), -1.0);
    assert_eq!(coulomb_energy(&[]).unwrap(), 0.0);
    assert!(coulomb_energy(&[pc(1.0, 1.0, 1.0, 1.0), pc(1.0, 1.0, 1.0, 2.0)]).is_err());
}

#[test]
fn coulomb_matches_double_loop_oracle() {
    for seed in 0..10 {
        let q = random_charge_system(20, 5.0, 1e-3, seed);
        let fast = coulomb_energy(&q).unwrap();
        let slow = naive_pairs(&q, |r| 1.0 / r);
        assert!((fast - slow).abs() <= 1e-12 * slow.abs().max(1.0), "{fast} vs {slow}");
    }
}

#[test]
fn yukawa_examples() {
    let e = yukawa_energy(&[pc(0.0, 0.0, 0.0, 1.0), pc(1.0, 0.0, 0.0, 1.0)], 1.0).unwrap();
    assert!((e - (-1.0f64).exp()).abs() < 1e-15);
    assert!((e - 0.36788).abs() < 1e-5);
    let far = yukawa_energy(&[pc(0.0, 0.0, 0.0, 1.0), pc(0.0, 0.0, 10.0, 1.0)], 1.0).unwrap();
    assert!((far - (-10.0f64).exp() / 10.0).abs() < 1e-18);
    assert!((far - 4.54e-6).abs() < 1e-8);
    assert!(yukawa_energy(&[], -1.0).is_err());
}

#[test]
fn yukawa_recovers_coulomb_as_mass_vanishes() {
    let q = random_charge_system(10, 4.0, 1e-3, 99);
    let q: Vec<PointCharge> = if q.len() < 2 { random_charge_system(10, 4.0, 1e-3, 100) } else { q };
    let c = coulomb_energy(&q).unwrap();
    let y = yukawa_energy(&q, 1e-6).unwrap();
    assert!((y - c).abs() <= 1e-4 * c.abs().max(1e-3), "{y} vs {c}");
    let oracle = naive_pairs(&q, |r| (-1e-6 * r).exp() / r);
    assert!((y - oracle).abs() <= 1e-12 * oracle.abs().max(1.0));
}

#[test]
fn comparison_deficit_examples() {
    assert!((yukawa_comparison_deficit(&[pc(0.0, 0.0, 0.0, 1.5)]).unwrap() - 2.25).abs() < 1e-15);
    let two = yukawa_comparison_deficit(&[pc(0.0, 0.0, 0.0, 1.0), pc(1.0, 0.0, 0.0, 1.0)]).unwrap();
    assert!((two - (2.0 * (1.0 - (-1.0f64).exp()) + 2.0)).abs() < 1e-14);
    assert!((two - 3.2642).abs() < 1e-4);
    let close = yukawa_comparison_deficit(&[pc(0.0, 0.0, 0.0, 1.0), pc(0.1, 0.0, 0.0, -1.0)]).unwrap();
    assert!((close - (2.0 - 2.0 * (1.0 - (-0.1f64).exp()) / 0.1)).abs() < 1e-14);
    assert!((close - 0.0967).abs() < 1e-4);
    assert!(yukawa_comparison_deficit(&[pc(0.0, 0.0, 0.0, 1.0), pc(0.0, 0.0, 0.0, 1.0)]).is_err());
}

#[test]
fn comparison_deficit_is_nonnegative_on_random_systems() {
    let mut min = f64::INFINITY;
    for seed in 0..2000 {
        let q = random_charge_system(50, 3.0, 1e-3, seed);
        assert!(q.len() <= 50 && !q.is_empty());
        let d = yukawa_comparison_deficit(&q).unwrap();
        assert!(d >= 0.0, "seed {seed}: deficit {d}");
        min = min.min(d);
    }
    assert!(min < 1.0, "min deficit {min}");
}

#[test]
fn dipole_four_term_example() {
    let o = Vec3::splat(0.0);
    let r2 = Vec3::new(4.0, 0.0, 0.0);
    let d = dipole_interaction(o, 1.0, Vec3::new(0.1, 0.0, 0.0), r2, 1.0, Vec3::new(3.9, 0.0, 0.0)).unwrap();
    let direct = 1.0 / 4.0 + 1.0 / 3.8 - 1.0 / 3.9 - 1.0 / 3.9;
    assert!((d - direct).abs() < 1e-15);
    assert!((d - 0.000337381916329149).abs() < 1e-15);
    assert_eq!(dipole_interaction(o, 2.0, o, r2, 3.0, r2).unwrap(), 0.0);
    assert!(dipole_interaction(o, 1.0, Vec3::new(1.5, 0.0, 0.0), r2, 1.0, r2).is_err());
    assert!(dipole_interaction(o, 1.0, o, o, 1.0, o).is_err());
}

#[test]
fn dipole_vanishes_as_offsets_shrink() {
    let (r, r2) = (Vec3::splat(0.0), Vec3::new(1.0, 2.0, -0.5));
    let u = Vec3::new(0.3, -0.4, 0.5).normalized();
    let w = Vec3::new(-0.6, 0.0, 0.8);
    // dipole-dipole coupling is quadratic in the offsets, down to rounding
    let mut last = f64::INFINITY;
    for k in 0..30 {
        let s = 0.5 * 0.5f64.powi(k);
        let d = dipole_interaction(r, 1.0, r + u * s, r2, 1.0, r2 + w * s).unwrap().abs();
        assert!(d <= 2.0 * s * s + 1e-14, "s {s}: {d}");
        last = d;
    }
    assert!(last < 1e-12, "{last}");
}

#[test]
fn dipole_audit_bounds_and_decay() {
    let near = dipole_audit(20_000, 0.1, 5.0, 0.025, 1).unwrap();
    assert_eq!(near.violations, 0);
    let far = dipole_audit(20_000, 2.0, 50.0, 0.25, 2).unwrap();
    assert_eq!(far.violations, 0);
    assert!(far.max_decay_ratio.is_finite() && far.max_decay_ratio <= 1e3, "{far:?}");
    assert!(dipole_audit(10, 1.0, 2.0, 0.3, 0).is_err());
}

fn check_clouds(clouds: &[ScreeningCloud], d: &DomainShape, eps: f64) {
    for c in clouds {
        assert_eq!(c.charge, -c.nucleus.charge);
        assert_eq!(c.radius, c.delta_prime / 8.0);
        assert!(c.delta_prime <= eps);
        assert!(d.contains(c.center));
        match c.placement {
            Placement::OnTop => assert_eq!(c.center, c.nucleus.position),
            Placement::ConeOffset { direction } => {
                assert!(((c.center - c.nucleus.position).norm() - c.delta_prime / 4.0).abs() < 1e-12);
                assert!((direction.norm() - 1.0).abs() < 1e-12);
            }
        }
    }
    for (i, a) in clouds.iter().enumerate() {
        for b in &clouds[i + 1..] {
            assert!((a.center - b.center).norm() > a.radius + b.radius);
        }
    }
}

#[test]
fn deep_nuclei_get_on_top_clouds() {
    let (c, _) = lattice_in_cube8();
    let d = DomainShape::cube(4.0).unwrap().translated(Vec3::splat(3.5)).unwrap();
    let clouds = build_screening(&c, &d, 0.4).unwrap();
    assert_eq!(clouds.len(), 64);
    assert!(clouds.iter().all(|k| k.placement == Placement::OnTop));
    assert_eq!(screened_charge(&clouds), 0.0);
    check_clouds(&clouds, &d, 0.4);
}

#[test]
fn lattice_cloud_radii() {
    let (c, d) = lattice_in_cube8();
    let clouds = build_screening(&c, &d, 0.5).unwrap();
    assert_eq!(clouds.len(), 512);
    assert!(clouds.iter().all(|k| k.radius == 0.0625));
    check_clouds(&clouds, &d, 0.5);
}

#[test]
fn shallow_nucleus_gets_cone_offset_cloud() {
    let pts = [Vec3::new(4.75, 0.0, 0.0), Vec3::new(3.75, 0.0, 0.0)];
    let c = NuclearConfiguration::from_points(&pts, Aabb::cube(-5.0, 5.0), 1.0).unwrap();
    let d = DomainShape::cube(10.0).unwrap();
    let clouds = build_screening(&c, &d, 0.5).unwrap();
    let shallow = clouds.iter().find(|k| k.nucleus.position.x() > 4.0).unwrap();
    assert_eq!(shallow.delta_prime, 0.5);
    match shallow.placement {
        Placement::ConeOffset { direction } => assert!((direction - Vec3::new(-1.0, 0.0, 0.0)).norm() < 1e-12),
        Placement::OnTop => panic!("expected an offset cloud"),
    }
    assert!((shallow.center.x() - 4.625).abs() < 1e-12);
    assert!(d.boundary_distance(shallow.center) >= shallow.radius);
    check_clouds(&clouds, &d, 0.5);
}

#[test]
fn screening_is_neutral_on_gaussian_configurations() {
    for seed in 0..3 {
        let (c, d) = gaussian_in_cube(6, seed);
        let clouds = build_screening(&c, &d, 0.5).unwrap();
        assert_eq!(screened_charge(&clouds), 0.0);
        check_clouds(&clouds, &d, 0.5);
        let ball = DomainShape::ball(2.7).unwrap().translated(Vec3::splat(2.5)).unwrap();
        let clouds = build_screening(&c, &ball, 0.5).unwrap();
        assert_eq!(screened_charge(&clouds), 0.0);
        check_clouds(&clouds, &ball, 0.5);
    }
}

#[test]
fn lattice_trial_energy_matches_brute_force() {
    let (c, d) = lattice_in_cube8();
    let r = trial_energy(&c, &d, 0.5, 1.0).unwrap();
    assert_eq!(r.kinetic, 2048.0);
    assert_eq!(r.nuclei, 512);
    assert_eq!(r.collar_nuclei, 296);
    let collar: Vec<Vec3> = c
        .nuclei
        .iter()
        .map(|n| n.position)
        .filter(|p| d.contains(*p) && p.0.iter().any(|&x| x == 0.0 || x == 7.0))
        .collect();
    assert_eq!(collar.len(), 296);
    let mut oracle = 0.0;
    for (i, a) in collar.iter().enumerate() {
        for (j, b) in collar.iter().enumerate() {
            if i != j {
                let s = (*a - *b).norm();
                oracle += 1.0 / (s * (1.0 + s * s));
            }
        }
    }
    assert!((r.boundary - oracle).abs() < 1e-10 * oracle, "{} vs {oracle}", r.boundary);
    assert_eq!(r.lieb_yau, Some(64.0));
    assert!((r.total() - (2048.0 + r.boundary)).abs() < 1e-12);
}

#[test]
fn energy_breakdown_sums_to_totals() {
    let (c, d) = gaussian_in_cube(6, 4);
    let r = trial_energy(&c, &d, 0.5, 1.3).unwrap();
    let k: f64 = r.cells.iter().map(|e| e.kinetic).sum();
    let b: f64 = r.cells.iter().map(|e| e.boundary).sum();
    let n: usize = r.cells.iter().map(|e| e.nuclei).sum();
    assert!(r.kinetic >= 0.0);
    assert!((k - r.kinetic).abs() <= 1e-10 * r.kinetic);
    assert!((b - r.boundary).abs() <= 1e-10 * r.boundary.abs());
    assert_eq!(n, r.nuclei);
    let mut buf = Vec::new();
    r.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("i,j,k,nuclei,kinetic,boundary,lieb_yau\n"));
    assert_eq!(text.lines().count(), r.cells.len() + 1);
}

#[test]
fn empty_domain_has_zero_energy() {
    let (c, _) = lattice_in_cube8();
    let r = trial_energy(&c, &DomainShape::empty(), 0.5, 1.0).unwrap();
    assert_eq!((r.kinetic, r.boundary, r.nuclei), (0.0, 0.0, 0));
    assert_eq!(r.lieb_yau, Some(0.0));
    assert!(trial_energy(&c, &DomainShape::empty(), 0.0, 1.0).is_err());
}

#[test]
fn doubling_charges_scales_terms() {
    let (c, d) = gaussian_in_cube(5, 6);
    let mut c2 = c.clone();
    for n in &mut c2.nuclei {
        n.charge *= 2.0;
    }
    let a = trial_energy(&c, &d, 0.5, 1.0).unwrap();
    let b = trial_energy(&c2, &d, 0.5, 1.0).unwrap();
    assert!((b.kinetic / a.kinetic - 2f64.powf(5.0 / 3.0)).abs() < 1e-12);
    assert_eq!(b.boundary, 4.0 * a.boundary);
}

#[test]
fn lieb_yau_examples() {
    let (c, d) = lattice_in_cube8();
    assert_eq!(lieb_yau_term(&c, &d, 1.0).unwrap(), 64.0);
    let nuclei = vec![
        Nucleus { position: Vec3::splat(0.0), charge: 2.0, site: [0, 0, 0] },
        Nucleus { position: Vec3::new(0.5, 0.0, 0.0), charge: 2.0, site: [1, 0, 0] },
    ];
    let pair = NuclearConfiguration::from_nuclei(nuclei, Aabb::cube(-0.5, 1.5), 2.0).unwrap();
    assert_eq!(lieb_yau_term(&pair, &DomainShape::ball(2.0).unwrap(), 2.0).unwrap(), 2.0);
    assert!(lieb_yau_term(&pair, &DomainShape::ball(2.0).unwrap(), 1.0).is_err());
}

#[test]
fn lieb_yau_equals_cell_sum_of_x1() {
    let (c, d) = gaussian_in_cube(8, 7);
    let ly = lieb_yau_term(&c, &d, 1.0).unwrap();
    let index = build_index(&c).unwrap();
    let x1: f64 = window_statistics(&index, 0.5, &[1.0]).unwrap().iter().map(|s| s.x1).sum();
    assert!((ly - x1 / 8.0).abs() <= 1e-10 * ly, "{ly} vs {}", x1 / 8.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn trial_energy_is_lattice_translation_invariant(seed in 0u64..1_000_000, k in prop::array::uniform3(-6i64..6)) {
        let (c, d) = gaussian_in_cube(4, seed);
        let a = trial_energy(&c, &d, 0.5, 1.0).unwrap();
        let shift = Vec3::new(k[0] as f64, k[1] as f64, k[2] as f64);
        let b = trial_energy(&c.shift(k), &d.translated(-shift).unwrap(), 0.5, 1.0).unwrap();
        prop_assert_eq!(a.nuclei, b.nuclei);
        prop_assert!((a.kinetic - b.kinetic).abs() <= 1e-12 * a.kinetic);
        prop_assert!((a.boundary - b.boundary).abs() <= 1e-12 * a.boundary.abs().max(1.0));
    }
}
