use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use rnuclei_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(rn_last_error_message()) }.to_string_lossy().into_owned()
}

#[test]
fn model_sample_and_read_back() {
    unsafe {
        let mut model = ptr::null_mut();
        assert_eq!(rn_model_gaussian(0.5, &mut model), RnStatus::Ok);
        let mut density = 0.0;
        assert_eq!(rn_model_charge_density(model, &mut density), RnStatus::Ok);
        assert_eq!(density, 1.0);
        let (lo, hi) = ([0.0; 3], [3.0; 3]);
        let mut config = ptr::null_mut();
        assert_eq!(rn_model_sample(model, lo.as_ptr(), hi.as_ptr(), 4.0, 5, &mut config), RnStatus::Ok);
        let n = rn_configuration_len(config);
        assert!(n > 0);
        let (mut pos, mut q) = ([0.0; 3], 0.0);
        assert_eq!(rn_configuration_nucleus(config, 0, pos.as_mut_ptr(), &mut q), RnStatus::Ok);
        assert_eq!(q, 1.0);
        assert!(pos.iter().all(|x| (-4.0..7.0).contains(x)));
        assert_eq!(rn_configuration_nucleus(config, n, pos.as_mut_ptr(), &mut q), RnStatus::OutOfRange);
        assert!(last_error().contains("out of range"));
        rn_configuration_free(config);
        rn_model_free(model);
    }
}

#[test]
fn point_mass_sample_is_the_lattice() {
    let toml = CString::new(
        "kind = \"iid\"\ndisplacement = { kind = \"point_mass\" }\ncharge = { kind = \"constant\", z = 2.0 }\n",
    )
    .unwrap();
    unsafe {
        let mut model = ptr::null_mut();
        assert_eq!(rn_model_from_toml(toml.as_ptr(), &mut model), RnStatus::Ok);
        let mut config = ptr::null_mut();
        let (lo, hi) = ([0.0; 3], [8.0; 3]);
        assert_eq!(rn_model_sample(model, lo.as_ptr(), hi.as_ptr(), 0.0, 1, &mut config), RnStatus::Ok);
        assert_eq!(rn_configuration_len(config), 512);
        rn_configuration_free(config);
        rn_model_free(model);
    }
}

#[test]
fn errors_carry_status_and_message() {
    unsafe {
        let mut model = ptr::null_mut();
        assert_eq!(rn_model_gaussian(-0.5, &mut model), RnStatus::Numerical);
        assert!(model.is_null());
        assert!(last_error().contains("sigma"));
        assert_eq!(rn_model_gaussian(0.5, ptr::null_mut()), RnStatus::NullArgument);
        let bad = CString::new("kind = \"iid\"\nbogus = 1\n").unwrap();
        assert_eq!(rn_model_from_toml(bad.as_ptr(), &mut model), RnStatus::Schema);
        // a successful call clears the buffer
        assert_eq!(rn_model_gaussian(0.5, &mut model), RnStatus::Ok);
        assert_eq!(last_error(), "");
        rn_model_free(model);
        rn_model_free(ptr::null_mut());
    }
}

#[test]
fn domain_queries() {
    let toml = CString::new("kind = \"ball\"\nradius = 2.0\n").unwrap();
    unsafe {
        let mut d = ptr::null_mut();
        assert_eq!(rn_domain_from_toml(toml.as_ptr(), &mut d), RnStatus::Ok);
        let mut v = 0.0;
        assert_eq!(rn_domain_volume(d, &mut v), RnStatus::Ok);
        assert!((v - 4.0 / 3.0 * std::f64::consts::PI * 8.0).abs() < 1e-12);
        let origin = [0.0; 3];
        let (mut sd, mut inside) = (0.0, false);
        assert_eq!(rn_domain_signed_distance(d, origin.as_ptr(), &mut sd), RnStatus::Ok);
        assert_eq!(sd, -2.0);
        assert_eq!(rn_domain_contains(d, origin.as_ptr(), &mut inside), RnStatus::Ok);
        assert!(inside);
        rn_domain_free(d);
        assert_eq!(rn_domain_aligned_cube(0, &mut d), RnStatus::Numerical);
    }
}

#[test]
fn coulomb_and_yukawa_pairs() {
    let pos = [0.0, 0.0, 0.0, 2.0, 0.0, 0.0];
    let q = [1.0, -3.0];
    unsafe {
        let mut e = 0.0;
        assert_eq!(rn_coulomb_energy(pos.as_ptr(), q.as_ptr(), 2, &mut e), RnStatus::Ok);
        assert_eq!(e, -1.5);
        assert_eq!(rn_yukawa_energy(pos.as_ptr(), q.as_ptr(), 2, 1.0, &mut e), RnStatus::Ok);
        assert!((e - -1.5 * (-2.0f64).exp()).abs() < 1e-15);
        assert_eq!(rn_coulomb_energy(ptr::null(), ptr::null(), 0, &mut e), RnStatus::Ok);
        assert_eq!(e, 0.0);
        let same = [1.0, 1.0, 1.0, 1.0, 1.0, 1.0];
        assert_eq!(rn_coulomb_energy(same.as_ptr(), q.as_ptr(), 2, &mut e), RnStatus::Numerical);
    }
}

#[test]
fn moment_of_point_mass_model() {
    unsafe {
        let mut model = ptr::null_mut();
        assert_eq!(rn_model_gaussian(0.5, &mut model), RnStatus::Ok);
        let mut m = RnMoment::default();
        assert_eq!(rn_estimate_moment(model, RnStatistic::X0, 0.0, 0.0, 1.0, 2000, 9, &mut m), RnStatus::Ok);
        assert_eq!(m.replicas, 2000);
        assert!(m.ci_lo <= m.mean && m.mean <= m.ci_hi);
        assert!((m.mean - 1.0).abs() < 5.0 * m.std_error.max(1e-3));
        assert_eq!(rn_estimate_moment(model, RnStatistic::X0, 0.0, 0.0, 1.0, 5, 9, &mut m), RnStatus::Numerical);
        rn_model_free(model);
    }
}

#[test]
fn trial_energy_matches_core() {
    unsafe {
        let mut model = ptr::null_mut();
        rn_model_gaussian(0.25, &mut model);
        let (lo, hi) = ([-0.5; 3], [4.5; 3]);
        let mut config = ptr::null_mut();
        assert_eq!(rn_model_sample(model, lo.as_ptr(), hi.as_ptr(), 3.0, 2, &mut config), RnStatus::Ok);
        let mut d = ptr::null_mut();
        rn_domain_aligned_cube(4, &mut d);
        let mut e = RnEnergy::default();
        assert_eq!(rn_trial_energy(config, d, 0.5, 1.0, &mut e), RnStatus::Ok);
        assert!(e.nuclei > 0 && e.kinetic > 0.0);
        assert!((e.total - (e.kinetic + e.boundary)).abs() <= 1e-9 * e.total.abs());
        assert_eq!(rn_trial_energy(config, d, 0.0, 1.0, &mut e), RnStatus::Numerical);
        rn_domain_free(d);
        rn_configuration_free(config);
        rn_model_free(model);
    }
}

#[test]
fn run_and_validate_experiment() {
    let dir = tempfile::tempdir().unwrap();
    let spec = CString::new(
        "kind = \"sample\"\nseed = 4\n[model]\nkind = \"iid\"\ndisplacement = { kind = \"point_mass\" }\n\
         charge = { kind = \"constant\", z = 1.0 }\n[params]\nwindow = { lo = [0.0, 0.0, 0.0], hi = [8.0, 8.0, 8.0] }\n",
    )
    .unwrap();
    let out = CString::new(dir.path().to_str().unwrap()).unwrap();
    unsafe {
        assert_eq!(rn_validate_experiment(spec.as_ptr()), RnStatus::Ok);
        let mut manifest = ptr::null_mut();
        assert_eq!(rn_run_experiment(spec.as_ptr(), out.as_ptr(), 2, &mut manifest), RnStatus::Ok);
        let text = CStr::from_ptr(manifest).to_str().unwrap().to_owned();
        rn_string_free(manifest);
        assert!(text.contains("nuclei.csv") && text.contains("rows = 512"));
        assert_eq!(rn_run_experiment(spec.as_ptr(), out.as_ptr(), 0, ptr::null_mut()), RnStatus::Ok);
        let bad = CString::new("kind = \"moments\"\n[params]\nreplicas = 5\n").unwrap();
        assert_eq!(rn_validate_experiment(bad.as_ptr()), RnStatus::Schema);
        let msg = last_error();
        assert!(msg.contains("model is required") && msg.contains(">= 30"), "{msg}");
    }
    assert!(dir.path().join("nuclei.csv").exists());
}

#[test]
fn version_string() {
    let v = unsafe { CStr::from_ptr(rn_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_every_export() {
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let header = std::fs::read_to_string(root.join("include/rnuclei.h")).unwrap();
    let src = std::fs::read_to_string(root.join("src/lib.rs")).unwrap();
    let exports: Vec<&str> = src
        .lines()
        .filter_map(|l| l.split("extern \"C\" fn ").nth(1))
        .map(|rest| rest.split('(').next().unwrap())
        .collect();
    assert!(exports.len() >= 20);
    for f in exports {
        assert!(header.contains(&format!("{f}(")), "{f} missing from header");
    }
}

/// Compiles the C smoke test against the static library when a C compiler is present.
#[test]
fn c_program_links_and_runs() {
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let exe = std::env::current_exe().unwrap();
    let profile_dir = exe.parent().unwrap().parent().unwrap();
    let lib = profile_dir.join("librnuclei_ffi.a");
    if !lib.exists() || Command::new("cc").arg("--version").output().is_err() {
        eprintln!("skipping: static library or C compiler unavailable");
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let bin = dir.path().join("smoke");
    let status = Command::new("cc")
        .args(["-std=c11", "-Wall", "-Werror"])
        .arg("-I")
        .arg(root.join("include"))
        .arg(root.join("tests/c/smoke.c"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .unwrap();
    assert!(status.success());
    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("nuclei="));
}
