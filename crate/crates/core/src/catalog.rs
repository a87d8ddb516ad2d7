//! Named example maps used by tests and the command line.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cube::{hamming_metric, Cube};
use crate::error::{Error, Result};
use crate::spaces::{LipschitzMap, LpSpace, MapOnCube, NormExponent, Point, Space, TabulatedSpace};

/// f(e) = e/n into l_1^n. Pair distances are exactly twice the cube metric.
pub fn canonical_l1(n: u32) -> Result<MapOnCube> {
    signs_scaled(n, LpSpace::l1(n as usize))
}

/// f(e) = e/n into l_2^n.
pub fn canonical_l2(n: u32) -> Result<MapOnCube> {
    signs_scaled(n, LpSpace::l2(n as usize))
}

/// f(e) = e/n into l_q^n.
pub fn canonical_lq(n: u32, q: f64) -> Result<MapOnCube> {
    signs_scaled(n, LpSpace::new(n as usize, NormExponent::new(q)?)?)
}

fn signs_scaled(n: u32, space: LpSpace) -> Result<MapOnCube> {
    let cube = Cube::new(n)?;
    let scale = 1.0 / n as f64;
    let images = cube
        .points()
        .map(|e| Point::Coords(e.signs().iter().map(|&s| s as f64 * scale).collect()))
        .collect();
    MapOnCube::new(cube, Space::Lp(space), images)
}

/// Weights 1/ln(i+1), i = 1..=n. Strictly decreasing, all positive, and the
/// partial sums dominate n/ln(n+1).
pub fn diag_log_weights(n: u32) -> Vec<f64> {
    (1..=n).map(|i| 1.0 / ((i + 1) as f64).ln()).collect()
}

/// The canonical l_1 map together with the diagonal post-composition that
/// shrinks coordinate i by 1/ln(i+1).
pub fn diag_log_pair(n: u32) -> Result<(MapOnCube, LipschitzMap)> {
    let f = canonical_l1(n)?;
    Ok((f, LipschitzMap::Diagonal { weights: diag_log_weights(n) }))
}

/// The vertex set itself with the normalized cube metric, tabulated.
pub fn identity_into_table(n: u32) -> Result<MapOnCube> {
    let cube = Cube::new(n.min(12))?;
    if n > 12 {
        return Err(Error::CapExceeded { n, cap: 12 });
    }
    let k = cube.vertex_count() as usize;
    let mut dist = vec![vec![0.0f64; k]; k];
    for a in 0..k {
        for b in a + 1..k {
            let d = hamming_metric(&cube.point(a as u64), &cube.point(b as u64))?;
            dist[a][b] = d;
            dist[b][a] = d;
        }
    }
    let space = Space::Table(TabulatedSpace::new(dist, true)?);
    let images = (0..k).map(Point::Id).collect();
    MapOnCube::new(cube, space, images)
}

/// Seeded map with independent uniform coordinates in [lo, hi]. Images are
/// generated in mask order, coordinates within an image in index order, so a
/// seed pins the map exactly.
pub fn random_lp_map(n: u32, space: LpSpace, lo: f64, hi: f64, seed: u64) -> Result<MapOnCube> {
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(Error::InvalidParameter(format!(
            "need a finite box lo < hi, got [{lo}, {hi}]"
        )));
    }
    let cube = Cube::new(n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let images = (0..cube.vertex_count())
        .map(|_| Point::Coords((0..space.m).map(|_| rng.gen_range(lo..hi)).collect()))
        .collect();
    MapOnCube::new(cube, Space::Lp(space), images)
}

/// Seeded diagonal post-composition with weights uniform in [lo, hi].
pub fn random_diagonal_map(m: usize, lo: f64, hi: f64, seed: u64) -> Result<LipschitzMap> {
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(Error::InvalidParameter(format!(
            "need a finite box lo < hi, got [{lo}, {hi}]"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(LipschitzMap::Diagonal {
        weights: (0..m).map(|_| rng.gen_range(lo..hi)).collect(),
    })
}

pub const CATALOG_NAMES: [&str; 5] =
    ["l1-canonical", "l2-canonical", "diag-log", "table-identity", "random-l2"];

pub fn describe(name: &str) -> Result<&'static str> {
    match name {
        "l1-canonical" => Ok("signs scaled by 1/n into l_1^n; pair distances are exactly 2 del"),
        "l2-canonical" => Ok("signs scaled by 1/n into l_2^n"),
        "diag-log" => Ok("l1-canonical followed by the diagonal with weights 1/ln(i+1)"),
        "table-identity" => Ok("vertices with the normalized cube metric as a distance table"),
        "random-l2" => Ok("seeded uniform images in [-1,1]^n inside l_2^n"),
        _ => Err(Error::InvalidParameter(format!("unknown catalog entry {name:?}"))),
    }
}

/// Builds a catalog entry as a map plus post-composition.
pub fn build(name: &str, n: u32, seed: u64) -> Result<(MapOnCube, LipschitzMap)> {
    match name {
        "l1-canonical" => Ok((canonical_l1(n)?, LipschitzMap::Identity)),
        "l2-canonical" => Ok((canonical_l2(n)?, LipschitzMap::Identity)),
        "diag-log" => diag_log_pair(n),
        "table-identity" => Ok((identity_into_table(n)?, LipschitzMap::Identity)),
        "random-l2" => Ok((
            random_lp_map(n, LpSpace::l2(n as usize), -1.0, 1.0, seed)?,
            LipschitzMap::Identity,
        )),
        _ => Err(Error::InvalidParameter(format!("unknown catalog entry {name:?}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spaces::lip_constant;

    #[test]
    fn canonical_distances_are_twice_the_cube_metric() {
        let f = canonical_l1(5).unwrap();
        for a in f.cube().points() {
            for b in f.cube().points() {
                let rho = f.rho(&a, &b);
                let del = hamming_metric(&a, &b).unwrap();
                assert!((rho - 2.0 * del).abs() < 1e-15, "{rho} vs 2*{del}");
            }
        }
    }

    #[test]
    fn diag_log_weights_decrease() {
        let w = diag_log_weights(16);
        for pair in w.windows(2) {
            assert!(pair[0] > pair[1] && pair[1] > 0.0);
        }
    }

    #[test]
    fn random_map_is_seed_stable() {
        let f = random_lp_map(3, LpSpace::l2(2), -1.0, 1.0, 42).unwrap();
        let g = random_lp_map(3, LpSpace::l2(2), -1.0, 1.0, 42).unwrap();
        for (a, b) in f.images().iter().zip(g.images()) {
            assert!(a.bit_equal(b));
        }
        let h = random_lp_map(3, LpSpace::l2(2), -1.0, 1.0, 43).unwrap();
        assert!(f.images().iter().zip(h.images()).any(|(a, b)| !a.bit_equal(b)));
    }

    #[test]
    fn catalog_builds_every_entry() {
        for name in CATALOG_NAMES {
            let (f, big_f) = build(name, 3, 1).unwrap();
            assert_eq!(f.dim(), 3);
            assert!(big_f.lip_bound(f.space()).unwrap() > 0.0);
            describe(name).unwrap();
        }
        assert!(build("no-such-map", 3, 1).is_err());
    }

    #[test]
    fn canonical_lip_is_two() {
        assert!((lip_constant(&canonical_l1(6).unwrap()) - 2.0).abs() < 1e-12);
    }
}
