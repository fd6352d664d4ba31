use std::collections::HashSet;

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;

use super::{
    quantize_vec, Aabb, ChargeLaw, DisplacementLaw, LatticeSpec, ModelDescriptor,
    NuclearConfiguration, Nucleus, Site,
};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed, site_rng};
use crate::vec3::Vec3;

/// Draw at lattice site `site` under key `key_site` (normally the same site).
#[inline]
fn draw_site(
    lattice: &LatticeSpec,
    displacement: &DisplacementLaw,
    charge: &ChargeLaw,
    seed: u64,
    site: Site,
    key_site: Site,
    salt: u64,
) -> Option<Nucleus> {
    let mut rng = site_rng(seed, key_site, salt);
    let r = quantize_vec(displacement.sample(&mut rng, lattice));
    let z = charge.sample(&mut rng);
    if z == 0.0 {
        return None;
    }
    Some(Nucleus { position: lattice.point(site) + r, charge: z, site })
}

fn check_laws(displacement: &DisplacementLaw, charge: &ChargeLaw) -> Result<()> {
    let mut v = displacement.violations("displacement");
    v.extend(charge.violations("charge"));
    if v.is_empty() {
        Ok(())
    } else {
        Err(Error::InvalidInput(v.join("; ")))
    }
}

/// I.i.d. perturbed lattice: one nucleus `j + r_j` with charge `z_j` per
/// lattice site `j`, kept when it falls in `window` expanded by `margin`.
pub fn sample_configuration(
    lattice: &LatticeSpec,
    displacement: &DisplacementLaw,
    charge: &ChargeLaw,
    window: Aabb,
    margin: f64,
    seed: u64,
) -> Result<NuclearConfiguration> {
    sample_configuration_at(lattice, displacement, charge, window, margin, seed, [0, 0, 0])
}

/// Realization of `K(tau_k omega)` where `omega` is the environment of `seed`:
/// the draw at site `j` uses the key of site `j + k`.
pub fn sample_configuration_at(
    lattice: &LatticeSpec,
    displacement: &DisplacementLaw,
    charge: &ChargeLaw,
    window: Aabb,
    margin: f64,
    seed: u64,
    omega_shift: Site,
) -> Result<NuclearConfiguration> {
    lattice.validate()?;
    check_laws(displacement, charge)?;
    if window.is_degenerate() {
        return Err(Error::invalid(format!(
            "window [{:?}, {:?}) is degenerate",
            window.lo.0, window.hi.0
        )));
    }
    if !(margin.is_finite() && margin >= 0.0) {
        return Err(Error::invalid(format!("margin must be a nonnegative length (got {margin})")));
    }
    if let Some(cutoff) = displacement.tail_cutoff() {
        if margin < cutoff {
            return Err(Error::invalid(format!(
                "margin {margin} is smaller than the displacement tail cutoff {cutoff}; \
                 nuclei displaced from outside the sampled region would be missed"
            )));
        }
    }
    let window = Aabb::new(window.lo, window.hi);
    let region = window.expanded(margin);
    let support = displacement.support_radius(lattice);
    let (lo, hi) = lattice.site_range(&region.expanded(support));
    let nuclei = draw_block(lattice, displacement, charge, seed, omega_shift, lo, hi, |x| {
        region.contains(x)
    })?;
    Ok(NuclearConfiguration {
        nuclei,
        window,
        margin,
        lattice: lattice.clone(),
        seed,
        model: ModelDescriptor::Iid {
            displacement: displacement.clone(),
            charge: charge.clone(),
            tail_cutoff: displacement.tail_cutoff(),
            omega_shift,
            neighborhood: None,
        },
    })
}

#[allow(clippy::too_many_arguments)]
fn draw_block(
    lattice: &LatticeSpec,
    displacement: &DisplacementLaw,
    charge: &ChargeLaw,
    seed: u64,
    omega_shift: Site,
    lo: Site,
    hi: Site,
    keep: impl Fn(Vec3) -> bool + Sync,
) -> Result<Vec<Nucleus>> {
    let slab = |i: i64| {
        let mut out = Vec::new();
        for j in lo[1]..=hi[1] {
            for k in lo[2]..=hi[2] {
                let site = [i, j, k];
                let key = [i + omega_shift[0], j + omega_shift[1], k + omega_shift[2]];
                if let Some(n) = draw_site(lattice, displacement, charge, seed, site, key, 0) {
                    if keep(n.position) {
                        out.push(n);
                    }
                }
            }
        }
        out
    };
    let n_slabs = (hi[0] - lo[0] + 1).max(0);
    let slabs: Vec<Vec<Nucleus>> = if n_slabs > 4 {
        (lo[0]..=hi[0]).into_par_iter().map(slab).collect()
    } else {
        (lo[0]..=hi[0]).map(slab).collect()
    };
    let mut nuclei: Vec<Nucleus> = slabs.into_iter().flatten().collect();
    if !matches!(displacement, DisplacementLaw::PointMass) {
        resolve_duplicates(&mut nuclei, |n| {
            let key = [
                n.site[0] + omega_shift[0],
                n.site[1] + omega_shift[1],
                n.site[2] + omega_shift[2],
            ];
            draw_site(lattice, displacement, charge, seed, n.site, key, 1).filter(|m| keep(m.position))
        })?;
    }
    Ok(nuclei)
}

fn position_key(x: Vec3) -> [u64; 3] {
    // +0.0 and -0.0 denote the same point
    x.0.map(|c| (c + 0.0).to_bits())
}

/// Redraws the later of two coincident nuclei once; a second coincidence is an error.
fn resolve_duplicates(
    nuclei: &mut Vec<Nucleus>,
    redraw: impl Fn(&Nucleus) -> Option<Nucleus>,
) -> Result<()> {
    let mut seen: HashSet<[u64; 3]> = HashSet::with_capacity(nuclei.len());
    let mut dups = Vec::new();
    for (i, n) in nuclei.iter().enumerate() {
        if !seen.insert(position_key(n.position)) {
            dups.push(i);
        }
    }
    if dups.is_empty() {
        return Ok(());
    }
    let mut drop = Vec::new();
    for &i in &dups {
        match redraw(&nuclei[i]) {
            Some(m) if seen.insert(position_key(m.position)) => nuclei[i] = m,
            Some(_) => {
                return Err(Error::precondition(format!(
                    "site {:?} collides with another nucleus after redraw",
                    nuclei[i].site
                )))
            }
            None => drop.push(i),
        }
    }
    for i in drop.into_iter().rev() {
        nuclei.remove(i);
    }
    Ok(())
}

/// The origin-cell protocol: all sites with `|j|_inf <= half_width` around
/// the origin, window `W`, every resulting nucleus kept.
///
/// Statistics of the cell `W` are exact unless a nucleus from outside the
/// block lies nearer than the nearest sampled one.
pub fn sample_neighborhood(
    lattice: &LatticeSpec,
    displacement: &DisplacementLaw,
    charge: &ChargeLaw,
    half_width: i64,
    seed: u64,
) -> Result<NuclearConfiguration> {
    lattice.validate()?;
    check_laws(displacement, charge)?;
    if half_width < 1 {
        return Err(Error::invalid("neighborhood half-width must be at least 1"));
    }
    let h = half_width;
    let support = displacement.support_radius(lattice);
    let window = lattice.cell_bounds([0, 0, 0]);
    let margin = h as f64 * lattice.cell_diameter() + support;
    let region = window.expanded(margin);
    let nuclei = draw_block(lattice, displacement, charge, seed, [0, 0, 0], [-h; 3], [h; 3], |x| {
        region.contains(x)
    })?;
    Ok(NuclearConfiguration {
        nuclei,
        window,
        margin,
        lattice: lattice.clone(),
        seed,
        model: ModelDescriptor::Iid {
            displacement: displacement.clone(),
            charge: charge.clone(),
            tail_cutoff: displacement.tail_cutoff(),
            omega_shift: [0, 0, 0],
            neighborhood: Some(h),
        },
    })
}

/// Homogeneous Poisson field of the given intensity on `window` expanded by
/// `margin`, with i.i.d. charges; vacancies are thinned out.
pub fn poisson_configuration(
    intensity: f64,
    charge: &ChargeLaw,
    window: Aabb,
    margin: f64,
    seed: u64,
) -> Result<NuclearConfiguration> {
    if !(intensity.is_finite() && intensity > 0.0) {
        return Err(Error::invalid(format!("intensity must be positive (got {intensity})")));
    }
    charge.validate()?;
    if !(margin.is_finite() && margin >= 0.0) {
        return Err(Error::invalid(format!("margin must be a nonnegative length (got {margin})")));
    }
    let window = Aabb::new(window.lo, window.hi);
    let region = if window.is_degenerate() && margin == 0.0 {
        window
    } else {
        window.expanded(margin)
    };
    let lattice = LatticeSpec::cubic();
    let volume = region.volume();
    let mut nuclei = Vec::new();
    if volume > 0.0 {
        let mut rng = rng_from_seed(derive_seed(seed, "poisson", 0));
        let count = Poisson::new(intensity * volume)
            .map_err(|e| Error::invalid(format!("poisson mean: {e}")))?
            .sample(&mut rng) as usize;
        nuclei.reserve(count);
        let span = region.hi - region.lo;
        for _ in 0..count {
            let u = Vec3::new(rng.random(), rng.random(), rng.random());
            let x = quantize_vec(region.lo + u.zip(span, |a, b| a * b));
            let z = charge.sample(&mut rng);
            if z > 0.0 && region.contains(x) {
                nuclei.push(Nucleus { position: x, charge: z, site: lattice.cell_of(x) });
            }
        }
        nuclei.sort_by(|a, b| {
            a.site.cmp(&b.site).then_with(|| {
                a.position.0.partial_cmp(&b.position.0).unwrap_or(std::cmp::Ordering::Equal)
            })
        });
        let mut redraw_rng = rng_from_seed(derive_seed(seed, "poisson-redraw", 0));
        let mut seen: HashSet<[u64; 3]> = HashSet::with_capacity(nuclei.len());
        for n in nuclei.iter_mut() {
            if !seen.insert(position_key(n.position)) {
                let u = Vec3::new(redraw_rng.random(), redraw_rng.random(), redraw_rng.random());
                let x = quantize_vec(region.lo + u.zip(span, |a, b| a * b));
                if !seen.insert(position_key(x)) {
                    return Err(Error::precondition("repeated coincident Poisson points"));
                }
                n.position = x;
                n.site = lattice.cell_of(x);
            }
        }
    }
    Ok(NuclearConfiguration {
        nuclei,
        window,
        margin,
        lattice,
        seed,
        model: ModelDescriptor::Poisson { intensity, charge: charge.clone() },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gauss() -> DisplacementLaw {
        DisplacementLaw::gaussian(0.5)
    }

    #[test]
    fn point_mass_gives_integer_points() {
        let c = sample_configuration(
            &LatticeSpec::cubic(),
            &DisplacementLaw::PointMass,
            &ChargeLaw::Constant { z: 1.0 },
            Aabb::cube(0.0, 8.0),
            0.0,
            1,
        )
        .unwrap();
        assert_eq!(c.len(), 512);
        for n in &c.nuclei {
            assert_eq!(n.position, n.position.map(f64::round));
            assert_eq!(n.charge, 1.0);
        }
    }

    #[test]
    fn short_margin_rejected() {
        let r = sample_configuration(
            &LatticeSpec::cubic(),
            &gauss(),
            &ChargeLaw::Constant { z: 1.0 },
            Aabb::cube(0.0, 4.0),
            1.0,
            1,
        );
        let msg = r.unwrap_err().to_string();
        assert!(msg.contains("cutoff"), "{msg}");
    }

    #[test]
    fn degenerate_window_rejected() {
        let r = sample_configuration(
            &LatticeSpec::cubic(),
            &DisplacementLaw::PointMass,
            &ChargeLaw::Constant { z: 1.0 },
            Aabb::new(Vec3::ZERO, Vec3::new(1.0, 0.0, 1.0)),
            0.0,
            1,
        );
        assert!(r.is_err());
    }

    #[test]
    fn vacancies_are_removed() {
        let c = sample_configuration(
            &LatticeSpec::cubic(),
            &DisplacementLaw::PointMass,
            &ChargeLaw::Vacancy { p_vac: 0.3, z: 2.0 },
            Aabb::cube(0.0, 10.0),
            0.0,
            9,
        )
        .unwrap();
        assert!(c.nuclei.iter().all(|n| n.charge == 2.0));
        assert!(c.len() < 1000 && c.len() > 600);
    }

    #[test]
    fn duplicate_redraw() {
        let mut v = vec![
            Nucleus { position: Vec3::ZERO, charge: 1.0, site: [0, 0, 0] },
            Nucleus { position: Vec3::new(-0.0, 0.0, 0.0), charge: 1.0, site: [1, 0, 0] },
        ];
        resolve_duplicates(&mut v, |n| {
            Some(Nucleus { position: Vec3::new(0.5, 0.0, 0.0), ..*n })
        })
        .unwrap();
        assert_eq!(v[1].position, Vec3::new(0.5, 0.0, 0.0));
        let mut w = vec![v[0], v[0]];
        assert!(resolve_duplicates(&mut w, |n| Some(*n)).is_err());
    }

    #[test]
    fn poisson_empty_window() {
        let c = poisson_configuration(
            1.0,
            &ChargeLaw::Constant { z: 1.0 },
            Aabb::cube(0.0, 0.0),
            0.0,
            3,
        )
        .unwrap();
        assert!(c.is_empty());
        assert!(poisson_configuration(0.0, &ChargeLaw::Constant { z: 1.0 }, Aabb::cube(0.0, 1.0), 0.0, 1).is_err());
    }
}
