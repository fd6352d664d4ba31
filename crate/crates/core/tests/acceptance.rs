//! Acceptance criteria at their stated tolerances, one PASS/FAIL line each.
//! Seeds are fixed in advance.

use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use rnuclei::config::{ChargeLaw, DisplacementLaw, ModelSpec};
use rnuclei::electrostatics::{dipole_audit, random_charge_system, yukawa_comparison_deficit};
use rnuclei::ergodic::{neutrality_estimate, thermo_scan, DomainSequence};
use rnuclei::geometry::{classify_cells, fisher_a_estimate, tiling_volume_identity, DomainShape, TilingSpec};
use rnuclei::harness::{replay, run_with_threads, ExperimentSpec, MANIFEST_FILE};
use rnuclei::moments::*;
use rnuclei::stats::ols;

type Outcome = rnuclei::error::Result<(bool, String)>;

fn gaussian() -> ModelSpec {
    ModelSpec::gaussian(0.5)
}

fn uniform_ball() -> ModelSpec {
    ModelSpec::iid(DisplacementLaw::UniformBall { radius: 0.4 }, ChargeLaw::Constant { z: 1.0 })
}

fn mean_count() -> Outcome {
    let m = estimate_moment(&gaussian(), Statistic::X0, 1.0, 10_000, 101)?;
    Ok((m.covers(1.0), format!("mean {:.4}, 99% CI [{:.4}, {:.4}]", m.mean, m.lo, m.hi)))
}

fn small_ball_exponent() -> Outcome {
    let grid = log_grid(0.01, 0.1, 10);
    let f = tail_exponent(&gaussian(), Statistic::DeltaAtOrigin, TailMode::SmallBall, &grid, 1_000_000, 102)?;
    let used = f.fitted.iter().filter(|&&b| b).count();
    Ok(((f.slope - 3.0).abs() <= 0.3, format!("slope {:.3} +- {:.3} over {used} thresholds", f.slope, f.slope_stderr)))
}

fn moment_dichotomy() -> Outcome {
    let samples = origin_samples(&gaussian(), 100_000, 103)?;
    let shrink = |p: f64| {
        let a = moment_from_samples(&samples[..1_000], Statistic::X1, p, 103);
        let b = moment_from_samples(&samples, Statistic::X1, p, 103);
        a.width() / b.width()
    };
    let (s2, s3) = (shrink(2.0), shrink(3.0));
    Ok((s2 >= 3.0 && s3 < 1.3, format!("CI width shrink 1e3 -> 1e5: p=2 {s2:.2}x, p=3 {s3:.2}x")))
}

fn x0_norm_bound() -> Outcome {
    let mut ok = true;
    let mut detail = Vec::new();
    for p in [1.0, 2.0, 4.0] {
        let r = check_x0_norm_bound(&gaussian(), p, 10_000, 104)?;
        ok &= r.lhs <= r.rhs + 3.0 * r.lhs_stderr && r.holds;
        detail.push(format!("p={p}: {:.4} <= {:.4}", r.lhs, r.rhs));
    }
    Ok((ok, detail.join("; ")))
}

fn x1_controls_x0() -> Outcome {
    let mut ok = true;
    let mut detail = Vec::new();
    for (name, m) in [("gaussian", gaussian()), ("uniform_ball", uniform_ball())] {
        let r = check_x1_implies_x0(&m, 2.0, 10_000, 105)?;
        ok &= r.holds;
        detail.push(format!("{name}: {:.4} <= {:.4}", r.lhs, r.rhs));
    }
    Ok((ok, detail.join("; ")))
}

fn compact_law() -> Outcome {
    // displacements in [-1/4, 1/4]^3 keep nuclei at least eta = 1/2 apart
    let law = DisplacementLaw::CompactInCell { lo: [-0.25; 3], hi: [0.25; 3] };
    let eta = 0.5;
    let samples = origin_samples(&ModelSpec::iid(law, ChargeLaw::Constant { z: 1.0 }), 1_000, 106)?;
    let all_one = samples.iter().all(|s| s.x0() == 1.0);
    let max_x1 = samples.iter().map(|s| s.x1()).fold(0.0, f64::max);
    Ok((all_one && max_x1 <= 1.0 / eta, format!("X0 == 1 on all: {all_one}, max X1 {max_x1:.4} (1/eta = 2)")))
}

fn tiling_identity() -> Outcome {
    let mut ok = true;
    let mut detail = Vec::new();
    for (name, d) in [("cube(10)", DomainShape::cube(10.0)?), ("ball(5)", DomainShape::ball(5.0)?)] {
        for ell in [1.0, 2.0] {
            let r = tiling_volume_identity(&d, &TilingSpec::regular(ell)?, 2_000, 64, 107)?;
            ok &= r.rel_error < 0.01;
            detail.push(format!("{name} l={ell}: rel {:.4}", r.rel_error));
        }
    }
    Ok((ok, detail.join("; ")))
}

fn boundary_cells() -> Outcome {
    let t = TilingSpec::regular(1.0)?;
    let mut vols = Vec::new();
    let mut counts = Vec::new();
    let mut inner_fraction = 0.0;
    for l in [16usize, 32, 64] {
        let d = DomainShape::aligned_cube(l)?;
        let c = classify_cells(&d, &t, 108)?;
        vols.push(d.volume().ln());
        counts.push((c.boundary as f64).ln());
        inner_fraction = c.inner as f64 / d.volume();
    }
    let slope = ols(&vols, &counts).map(|f| f.slope).unwrap_or(f64::NAN);
    let ok = (slope - 2.0 / 3.0).abs() <= 0.1 && inner_fraction >= 0.9;
    Ok((ok, format!("slope {slope:.4}, inner fraction at L=64 {inner_fraction:.4}")))
}

fn fisher_regularity() -> Outcome {
    let grid = [0.005, 0.01, 0.02];
    let cube = fisher_a_estimate(&DomainShape::cube(10.0)?, &grid, 400_000, 109)?;
    let ball = fisher_a_estimate(&DomainShape::ball(5.0)?, &grid, 400_000, 110)?;
    let ok = (11.0..=13.0).contains(&cube.a) && (9.0..=10.5).contains(&ball.a);
    Ok((ok, format!("cube a {:.3}, ball a {:.3}", cube.a, ball.a)))
}

fn yukawa_deficit() -> Outcome {
    let mut min = f64::INFINITY;
    let mut negative = 0usize;
    let mut max_n = 0usize;
    for i in 0..10_000u64 {
        let q = random_charge_system(50, 3.0, 1e-3, rnuclei::rng::derive_seed(111, "deficit", i));
        max_n = max_n.max(q.len());
        let d = yukawa_comparison_deficit(&q)?;
        if d < 0.0 {
            negative += 1;
        }
        min = min.min(d);
    }
    let ok = negative == 0 && min >= 0.0 && min < 0.2 && max_n <= 50;
    Ok((ok, format!("negative {negative}, min deficit {min:.4e}, max n {max_n}")))
}

fn dipole_bound() -> Outcome {
    let a = dipole_audit(100_000, 1.0, 50.0, 0.25, 112)?;
    let ok = a.violations == 0 && a.max_decay_ratio.is_finite() && a.max_decay_ratio <= 1e3;
    Ok((ok, format!("violations {}, max decay ratio {:.4}", a.violations, a.max_decay_ratio)))
}

fn thermodynamic_limit() -> Outcome {
    let seq = DomainSequence::cubes(&[8, 16, 32])?.audit(&[0.01, 0.02], 100_000, 113)?;
    let s = thermo_scan(&gaussian(), &seq, 0.5, 1.0, 100, 113)?;
    let ok = (s.deviation_slope + 0.5).abs() <= 0.15 && s.fit_residual < 0.02;
    Ok((
        ok,
        format!(
            "deviation slope {:.3} +- {:.3}, fitted limit {:.4}, residual at L=32 {:.2e}",
            s.deviation_slope, s.deviation_slope_stderr, s.fitted_limit, s.fit_residual
        ),
    ))
}

fn neutrality() -> Outcome {
    let m = ModelSpec::iid(DisplacementLaw::gaussian(0.5), ChargeLaw::Vacancy { p_vac: 0.3, z: 2.0 });
    let seq = DomainSequence::cubes(&[8, 16, 32])?;
    let r = neutrality_estimate(&m, &seq, 100, 114)?;
    let s = r.sizes.last().unwrap();
    Ok((s.covers && (r.z_av - 1.4).abs() < 1e-12, format!("L=32: 99% CI [{:.4}, {:.4}] vs {}", s.lo, s.hi, r.z_av)))
}

const MODEL: &str = r#"
[model]
kind = "iid"
displacement = { kind = "gaussian", sigma = 0.5 }
charge = { kind = "vacancy", p_vac = 0.2, z = 1.5 }
"#;

fn determinism_specs() -> Vec<String> {
    let spec = |kind: &str, model: bool, domain: &str, params: &str| {
        let model = if model { MODEL } else { "" };
        format!("kind = \"{kind}\"\nseed = 14\n{model}\n{domain}\n[params]\n{params}\n")
    };
    let cube = |side: usize| format!("[domain]\nkind = \"aligned_cube\"\nside = {side}");
    vec![
        spec("sample", true, "", "window = { lo = [0.0, 0.0, 0.0], hi = [6.0, 6.0, 6.0] }"),
        spec("stats", true, "", "window = { lo = [-0.5, -0.5, -0.5], hi = [5.5, 5.5, 5.5] }"),
        spec("moments", true, "", "statistic = { kind = \"x1\" }\np = 2\nreplicas = 500\ncheckpoints = [100, 500]"),
        spec(
            "tails",
            true,
            "",
            "statistic = { kind = \"delta_at_origin\" }\ntail_mode = \"small_ball\"\nthresholds = [0.1, 0.2, 0.3, 0.4]\nreplicas = 2000",
        ),
        spec(
            "geometry",
            false,
            "[domain]\nkind = \"ball\"\nradius = 3.0",
            "n_mc = 20000\ncone_epsilon = 0.5\ncone_samples = 200",
        ),
        spec("tiling", false, &cube(4), "scales = [1.0, 2.0]\nn_g = 1000\nn_mc = 4\nsizes = [8]"),
        spec("energy", true, &cube(6), "cone_epsilon = 0.5"),
        spec("ergodic", true, "", "statistic = { kind = \"x1\" }\nfamily = \"cube\"\nsizes = [4, 6]\nreplicas = 30"),
        spec("thermo", true, "", "family = \"cube\"\nsizes = [4, 6]\nreplicas = 30\nn_mc = 20000"),
        spec("gap", true, &cube(5), "scales = [1.0, 2.0]\nn_g = 500"),
    ]
}

fn same_files(a: &Path, b: &Path, files: &[String]) -> bool {
    files.iter().all(|f| std::fs::read(a.join(f)).ok() == std::fs::read(b.join(f)).ok())
}

fn determinism() -> Outcome {
    let root = tempfile::tempdir()?;
    let mut failures = Vec::new();
    let mut kinds = 0;
    for (i, text) in determinism_specs().iter().enumerate() {
        let spec = ExperimentSpec::from_toml(text)?;
        let name = spec.resolved_kind()?.name();
        let base = root.path().join(format!("{i}-1"));
        let m = run_with_threads(&spec, &base, Some(1))?;
        let files: Vec<String> = m.outputs.iter().map(|o| o.file.clone()).collect();
        let recorded = rnuclei::harness::RunManifest::from_file(&base.join(MANIFEST_FILE))?;
        for threads in [4usize, 8] {
            let out = root.path().join(format!("{i}-{threads}"));
            let (_, mismatches) = replay(&recorded, &out, Some(threads))?;
            if !mismatches.is_empty() || !same_files(&base, &out, &files) {
                failures.push(format!("{name} at {threads} threads"));
            }
        }
        kinds += 1;
    }
    let detail = if failures.is_empty() {
        format!("{kinds} kinds byte-identical at 1, 4 and 8 threads")
    } else {
        format!("differs: {}", failures.join(", "))
    };
    Ok((failures.is_empty(), detail))
}

fn main() -> ExitCode {
    let criteria: [(u32, &str, fn() -> Outcome); 14] = [
        (1, "mean nucleus count", mean_count),
        (2, "small-ball exponent", small_ball_exponent),
        (3, "moment dichotomy", moment_dichotomy),
        (4, "X0 norm bound", x0_norm_bound),
        (5, "X1 controls X0", x1_controls_x0),
        (6, "compact-support law", compact_law),
        (7, "tiling identity", tiling_identity),
        (8, "boundary-cell scaling", boundary_cells),
        (9, "Fisher regularity", fisher_regularity),
        (10, "Yukawa comparison deficit", yukawa_deficit),
        (11, "dipole bound", dipole_bound),
        (12, "proxy thermodynamic limit", thermodynamic_limit),
        (13, "neutrality", neutrality),
        (14, "determinism", determinism),
    ];
    let filter: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (n, name, f) in criteria {
        if !filter.is_empty() && !filter.contains(&n) {
            continue;
        }
        let start = Instant::now();
        let (ok, detail) = match f() {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        let status = if ok { "PASS" } else { "FAIL" };
        println!("criterion {n:>2} {name} ... {status} ({detail}) [{:.1}s]", start.elapsed().as_secs_f64());
        if !ok {
            failed += 1;
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
