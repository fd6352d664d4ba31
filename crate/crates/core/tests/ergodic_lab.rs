use proptest::prelude::*;
use rnuclei::config::*;
use rnuclei::ergodic::*;
use rnuclei::geometry::{DomainShape, TilingSpec};
use rnuclei::moments::Statistic;
use rnuclei::rng::derive_seed;
use rnuclei::vec3::Vec3;

fn unit() -> ChargeLaw {
    ChargeLaw::Constant { z: 1.0 }
}

fn point_mass(z: f64) -> ModelSpec {
    ModelSpec::iid(DisplacementLaw::PointMass, ChargeLaw::Constant { z })
}

fn lattice_box(lo: f64, hi: f64) -> NuclearConfiguration {
    sample_configuration(&LatticeSpec::cubic(), &DisplacementLaw::PointMass, &unit(), Aabb::cube(lo, hi), 2.0, 0).unwrap()
}

#[test]
fn sequences_check_volumes_and_containment() {
    assert!(DomainSequence::cubes(&[8, 4]).is_err());
    assert!(DomainSequence::cubes(&[]).is_err());
    let cubes = DomainSequence::cubes(&[2, 4, 8]).unwrap();
    assert!((cubes.containment - 3f64.sqrt()).abs() < 1e-12);
    assert_eq!(cubes.sites(1).len(), 64);
    let balls = DomainSequence::new(ShapeFamily::Ball, &[4.0, 8.0]).unwrap();
    assert!((balls.containment - (6.0 / std::f64::consts::PI).cbrt()).abs() < 1e-12);
    let simplices = DomainSequence::new(ShapeFamily::Simplex, &[4.0, 8.0]).unwrap();
    assert!(simplices.containment.is_finite());
    assert!(!cubes.is_audited());
}

#[test]
fn point_mass_average_is_identically_one() {
    let seq = DomainSequence::cubes(&[2, 5, 9]).unwrap();
    let r = ergodic_average(&point_mass(1.0), &Statistic::X0, &seq, 5, 3).unwrap();
    assert!(r.reference_exact);
    for s in &r.sizes {
        assert_eq!((s.trace, s.mean, s.l1_error, s.stderr), (1.0, 1.0, 0.0, 0.0));
    }
}

#[test]
fn gaussian_x0_l1_error_shrinks() {
    let seq = DomainSequence::cubes(&[8, 16, 32]).unwrap();
    let r = ergodic_average(&ModelSpec::gaussian(0.5), &Statistic::X0, &seq, 100, 4).unwrap();
    assert_eq!(r.reference, 1.0);
    for w in r.sizes.windows(2) {
        let tol = 2.0 * (w[0].l1_stderr.powi(2) + w[1].l1_stderr.powi(2)).sqrt();
        assert!(w[1].l1_error <= w[0].l1_error + tol, "{:?}", r.sizes);
    }
    assert!(r.sizes[2].l1_error <= 0.02, "{:?}", r.sizes[2]);
    assert!(r.sizes[0].l1_error > r.sizes[2].l1_error);
}

#[test]
fn gaussian_x1_traces_fall_in_shrinking_brackets() {
    let seq = DomainSequence::cubes(&[4, 8, 16]).unwrap();
    let r = ergodic_average(&ModelSpec::gaussian(0.5), &Statistic::X1, &seq, 40, 5).unwrap();
    assert!(!r.reference_exact);
    let spread: Vec<f64> = r.sizes.iter().map(|s| s.stderr * (r.replicas as f64).sqrt()).collect();
    assert!(spread.windows(2).all(|w| w[1] < w[0]), "{spread:?}");
    for (s, w) in r.sizes.iter().zip(&spread) {
        assert!((s.trace - r.reference).abs() <= 4.0 * w, "{s:?} ref {}", r.reference);
    }
}

#[test]
fn ergodic_average_rejects_site_statistics() {
    let seq = DomainSequence::cubes(&[2]).unwrap();
    assert!(ergodic_average(&ModelSpec::gaussian(0.5), &Statistic::DeltaAtOrigin, &seq, 2, 0).is_err());
}

#[test]
fn neutrality_of_unit_charges() {
    let seq = DomainSequence::cubes(&[8, 16]).unwrap();
    let r = neutrality_estimate(&ModelSpec::gaussian(0.5), &seq, 60, 6).unwrap();
    assert_eq!(r.z_av, 1.0);
    assert!(r.sizes.iter().all(|s| s.covers), "{:?}", r.sizes);
}

#[test]
fn neutrality_with_vacancies() {
    let m = ModelSpec::iid(DisplacementLaw::gaussian(0.5), ChargeLaw::Vacancy { p_vac: 0.3, z: 2.0 });
    let seq = DomainSequence::cubes(&[8, 16]).unwrap();
    let r = neutrality_estimate(&m, &seq, 60, 7).unwrap();
    assert!((r.z_av - 1.4).abs() < 1e-15);
    assert!(r.sizes.iter().all(|s| s.covers), "{:?}", r.sizes);
    assert!(r.sizes[1].hi - r.sizes[1].lo < r.sizes[0].hi - r.sizes[0].lo);
}

#[test]
fn neutrality_of_point_mass_is_exact() {
    let seq = DomainSequence::cubes(&[3, 6]).unwrap();
    let r = neutrality_estimate(&point_mass(3.0), &seq, 4, 8).unwrap();
    assert!(r.values.iter().flatten().all(|&v| v == 3.0));
}

#[test]
fn neutrality_equals_charge_sum_over_volume() {
    let m = ModelSpec::iid(DisplacementLaw::gaussian(0.5), ChargeLaw::UniformInterval { min: 0.5, max: 3.0 });
    let seq = DomainSequence::new(ShapeFamily::Ball, &[5.0, 9.0]).unwrap();
    let seed = 9;
    let r = neutrality_estimate(&m, &seq, 3, seed).unwrap();
    for (rep, row) in r.values.iter().enumerate() {
        let c = m.sample(seq.window(), m.required_margin() + NEIGHBOR_MARGIN, derive_seed(seed, "neutrality", rep as u64)).unwrap();
        for (n, d) in seq.domains.iter().enumerate() {
            let z: f64 = c.nuclei.iter().filter(|x| d.contains(x.position)).map(|x| x.charge).sum();
            let want = z / d.volume();
            assert!((row[n] - want).abs() <= 1e-12 * want, "{} vs {want}", row[n]);
        }
    }
}

fn audited(sizes: &[usize]) -> DomainSequence {
    DomainSequence::cubes(sizes).unwrap().audit(&[0.01, 0.02], 20_000, 1).unwrap()
}

#[test]
fn point_mass_proxy_has_no_fluctuations() {
    let seq = audited(&[8, 16, 32]);
    let s = thermo_scan(&point_mass(1.0), &seq, 0.5, 1.0, 30, 2).unwrap();
    for p in &s.points {
        assert_eq!(p.l1_dev, 0.0);
        assert_eq!(p.stderr, 0.0);
        assert_eq!(p.kinetic_mean, 4.0);
    }
    assert!(s.deviation_slope.is_nan());
    assert!((s.boundary_slope + 1.0 / 3.0).abs() <= 0.1, "boundary slope {}", s.boundary_slope);
}

#[test]
fn kinetic_limit_is_linear_in_c_kin() {
    let seq = audited(&[4, 6]);
    let m = ModelSpec::gaussian(0.5);
    let a = thermo_scan(&m, &seq, 0.5, 1.0, 30, 3).unwrap();
    let b = thermo_scan(&m, &seq, 0.5, 2.0, 30, 3).unwrap();
    assert_eq!(b.kinetic_limit, 2.0 * a.kinetic_limit);
    for (p, q) in a.points.iter().zip(&b.points) {
        assert_eq!(q.kinetic_mean, 2.0 * p.kinetic_mean);
        assert_eq!(q.boundary_mean, p.boundary_mean);
    }
}

#[test]
fn thermo_scan_preconditions() {
    let m = ModelSpec::gaussian(0.5);
    assert!(thermo_scan(&m, &DomainSequence::cubes(&[4]).unwrap(), 0.5, 1.0, 30, 0).is_err());
    assert!(thermo_scan(&m, &audited(&[4]), 0.5, 1.0, 29, 0).is_err());
}

#[test]
fn gap_is_positive_for_a_small_domain_and_large_scale() {
    let c = lattice_box(-0.5, 3.5);
    let d = DomainShape::cube(0.8).unwrap().translated(Vec3::splat(1.0)).unwrap();
    let t = TilingSpec::regular(8.0).unwrap();
    let params = GapParams { c_gs: 1.0, cone_epsilon: 0.5, c_kin: 1.0 };
    let r = graf_schenker_gap(&c, &d, &t, 500, params, 1).unwrap();
    assert_eq!(r.nuclei, 1);
    assert_eq!(r.lhs, 4.0);
    // lattice translates of the simplex cover a point |l Delta| / |W| times on average
    assert!((r.integral - 4.0).abs() < 4.0 * r.integral_stderr, "{r:?}");
    let want = (1.0 - 1.0 / 8.0) * r.integral - (1.0 + d.volume()) / 8.0;
    assert!((r.rhs - want).abs() < 1e-12);
    assert!(r.gap > 0.0);
    for c_gs in [0.5, 2.0] {
        let p = GapParams { c_gs, ..params };
        assert!(graf_schenker_gap(&c, &d, &t, 500, p, 1).unwrap().gap > 0.0);
    }
}

#[test]
fn gap_of_an_empty_configuration() {
    let c = NuclearConfiguration::from_nuclei(vec![], Aabb::cube(-0.5, 5.5), 1.0).unwrap();
    let d = DomainShape::aligned_cube(6).unwrap();
    let t = TilingSpec::regular(2.0).unwrap();
    let r = graf_schenker_gap(&c, &d, &t, 500, GapParams::default(), 2).unwrap();
    assert_eq!(r.lhs, 0.0);
    assert!((r.rhs + d.volume() / 2.0).abs() < 1e-12);
    assert!(r.gap >= 0.0);
    assert!(graf_schenker_gap(&c, &d, &t, 499, GapParams::default(), 2).is_err());
}

#[test]
fn gap_sweep_over_scales_runs() {
    let c = sample_configuration(&LatticeSpec::cubic(), &DisplacementLaw::gaussian(0.5), &unit(), Aabb::cube(-0.5, 5.5), 4.0, 3)
        .unwrap();
    let d = DomainShape::aligned_cube(6).unwrap();
    for ell in [1.0, 2.0, 4.0, 8.0] {
        let r = graf_schenker_gap(&c, &d, &TilingSpec::regular(ell).unwrap(), 500, GapParams::default(), 4).unwrap();
        assert!(r.lhs > 0.0 && r.integral.is_finite() && r.gap.is_finite());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn proxy_energy_is_stationary(seed in 0u64..1_000_000, k in prop::array::uniform3(-5i64..5)) {
        let c = sample_configuration(&LatticeSpec::cubic(), &DisplacementLaw::gaussian(0.5), &unit(), Aabb::cube(-0.5, 4.5), 4.0, seed)
            .unwrap();
        let d = DomainShape::aligned_cube(5).unwrap();
        let shift = Vec3::new(k[0] as f64, k[1] as f64, k[2] as f64);
        let t = TilingSpec::regular(2.0).unwrap();
        let a = graf_schenker_gap(&c, &d, &t, 500, GapParams::default(), 5).unwrap();
        let b = graf_schenker_gap(&c.shift(k), &d.translated(-shift).unwrap(), &t, 500, GapParams::default(), 5).unwrap();
        prop_assert_eq!(a.lhs, b.lhs);
        prop_assert_eq!(a.nuclei, b.nuclei);
    }
}
