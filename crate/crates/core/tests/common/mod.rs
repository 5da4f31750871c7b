#![allow(dead_code)]

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tfim_lightcone::lattice::{SiteIndex, SpinField, Vec3};
use tfim_lightcone::lightcone::ArrivalMap;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_unit(rng: &mut impl Rng) -> Vec3 {
    let z: f64 = rng.gen_range(-1.0..1.0);
    let phi: f64 = rng.gen_range(0.0..TAU);
    let r = (1.0 - z * z).sqrt();
    [r * phi.cos(), r * phi.sin(), z]
}

pub fn random_spins(l: usize, rng: &mut impl Rng) -> SpinField {
    SpinField::from_vec(l, (0..l * l).map(|_| random_unit(rng)).collect()).unwrap()
}

/// The eight symmetries of the square acting on minimal-image displacements.
pub const D4: [fn(i64, i64) -> (i64, i64); 8] = [
    |x, y| (x, y),
    |x, y| (-x, y),
    |x, y| (x, -y),
    |x, y| (-x, -y),
    |x, y| (y, x),
    |x, y| (-y, x),
    |x, y| (y, -x),
    |x, y| (-y, -x),
];

/// Largest `|f(g r) - f(r)|` over sites, components and the eight symmetries
/// about `origin`.
pub fn d4_asymmetry(field: &[Vec3], l: usize, origin: SiteIndex) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..l * l {
        let s = SiteIndex::from_offset(i, l);
        let dx = s.x as i64 - origin.x as i64;
        let dy = s.y as i64 - origin.y as i64;
        for g in D4 {
            let (gx, gy) = g(dx, dy);
            let image = origin.shifted(gx, gy, l).offset(l);
            for a in 0..3 {
                worst = worst.max((field[image][a] - field[i][a]).abs());
            }
        }
    }
    worst
}

pub fn delta(spins: &SpinField, reference: Vec3) -> Vec<Vec3> {
    spins
        .as_slice()
        .iter()
        .map(|s| [s[0] - reference[0], s[1] - reference[1], s[2] - reference[2]])
        .collect()
}

/// Largest difference in arrival time between `a` and `b` over sites where
/// both arrived; `None` if the arrival status differs anywhere.
pub fn map_difference(a: &ArrivalMap, b: &ArrivalMap, shift: (i64, i64)) -> Option<f64> {
    let l = a.l;
    let mut worst = 0.0f64;
    for (site, cell) in a.iter() {
        let other = b.get(site.shifted(shift.0, shift.1, l));
        match (cell.time(), other.time()) {
            (Some(x), Some(y)) => worst = worst.max((x - y).abs()),
            (None, None) => {}
            _ => return None,
        }
    }
    Some(worst)
}
