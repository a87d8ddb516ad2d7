//! Pair-level subtype statistics and the inequality chains between them.
//!
//! For a pair (F, f) the three statistics compare the antipodal spread of
//! F o f against edge-level spread of f:
//!
//!   a:   E rho_Y(e,-e)            vs  Lip(f)
//!   b_p: E rho_Y(e,-e)^p          vs  n^{p-1} sum_i E rho_X(e, d_i e)^p
//!   e_p: E rho_Y(e,-e)^p          vs  sum_i E rho_X(e, d_i e)^p
//!
//! Ratios use the convention 0/0 = 0. Reports carry both the power-form
//! ratio and its p-th root; comparisons elsewhere use the power form.

use serde::{Deserialize, Serialize};

use crate::cube::{
    block_product, check_blocks, expect, flip_coordinate, Cube, CubePoint, SignedInterval,
};
use crate::error::{Error, Result};
use crate::report::{CheckReport, ExtReal, NamedCheck};
use crate::spaces::{lip_constant, MapOnCube, MapPair};

pub const IDENTITY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TypeStatKind {
    #[serde(rename = "a")]
    A,
    #[serde(rename = "b_p")]
    Bp,
    #[serde(rename = "e_p")]
    Ep,
}

/// One evaluated statistic. `ratio` is lhs/rhs in power form; `ratio_root`
/// is its p-th root (for kind a the two coincide).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TypeStatistic {
    pub kind: TypeStatKind,
    pub p: f64,
    pub n: u32,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: ExtReal,
    pub ratio_root: ExtReal,
    pub lip_f: f64,
    #[serde(rename = "lip_F")]
    pub lip_big_f: f64,
    pub seed: Option<u64>,
}

impl TypeStatistic {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }
}

pub(crate) fn ratio0(lhs: f64, rhs: f64) -> f64 {
    if lhs == 0.0 && rhs == 0.0 {
        0.0
    } else {
        lhs / rhs
    }
}

fn check_exponent(p: f64) -> Result<()> {
    if !(p.is_finite() && p > 1.0) {
        return Err(Error::InvalidParameter(format!(
            "statistic exponent must satisfy 1 < p < inf, got {p}"
        )));
    }
    Ok(())
}

/// E rho_Y(e, -e)^p.
pub fn antipodal_moment(pair: &MapPair, p: f64) -> f64 {
    expect(pair.cube(), |e| pair.rho_y(&e, &e.antipode()).powf(p))
}

/// sum_i E rho_X(e, d_i e)^p, the shared rhs core of b and e.
pub fn edge_moment_sum(pair: &MapPair, p: f64) -> f64 {
    let n = pair.dim();
    expect(pair.cube(), |e| {
        (1..=n)
            .map(|i| pair.rho_x(&e, &flip_coordinate(&e, i).unwrap()).powf(p))
            .sum()
    })
}

pub fn b_statistic(pair: &MapPair, p: f64) -> Result<TypeStatistic> {
    check_exponent(p)?;
    let n = pair.dim();
    let lhs = antipodal_moment(pair, p);
    let rhs = (n as f64).powf(p - 1.0) * edge_moment_sum(pair, p);
    let ratio = ratio0(lhs, rhs);
    Ok(TypeStatistic {
        kind: TypeStatKind::Bp,
        p,
        n,
        lhs,
        rhs,
        ratio: ratio.into(),
        ratio_root: ratio.powf(1.0 / p).into(),
        lip_f: pair.lip_f(),
        lip_big_f: pair.lip_big_f(),
        seed: None,
    })
}

pub fn e_statistic(pair: &MapPair, p: f64) -> Result<TypeStatistic> {
    check_exponent(p)?;
    let n = pair.dim();
    let lhs = antipodal_moment(pair, p);
    let rhs = edge_moment_sum(pair, p);
    let ratio = ratio0(lhs, rhs);
    Ok(TypeStatistic {
        kind: TypeStatKind::Ep,
        p,
        n,
        lhs,
        rhs,
        ratio: ratio.into(),
        ratio_root: ratio.powf(1.0 / p).into(),
        lip_f: pair.lip_f(),
        lip_big_f: pair.lip_big_f(),
        seed: None,
    })
}

pub fn a_statistic(pair: &MapPair) -> TypeStatistic {
    let lhs = expect(pair.cube(), |e| pair.rho_y(&e, &e.antipode()));
    let rhs = pair.lip_f();
    let ratio = ratio0(lhs, rhs);
    TypeStatistic {
        kind: TypeStatKind::A,
        p: 1.0,
        n: pair.dim(),
        lhs,
        rhs,
        ratio: ratio.into(),
        ratio_root: ratio.into(),
        lip_f: pair.lip_f(),
        lip_big_f: pair.lip_big_f(),
        seed: None,
    }
}

/// Extends f on 2^k to 2^l by ignoring the new coordinates:
/// g(e) = f(e(1),...,e(k)). The antipodal moments of g equal those of f
/// because the restriction of a uniform point is uniform and restriction
/// commutes with the antipode.
pub fn doubling_extension(f: &MapOnCube, l: u32) -> Result<MapOnCube> {
    let k = f.dim();
    if l < k {
        return Err(Error::InvalidParameter(format!(
            "extension target {l} is below the source dimension {k}"
        )));
    }
    let cube = Cube::with_cap(l, l)?;
    let low = (1u64 << k) - 1;
    let images = (0..cube.vertex_count())
        .map(|mask| f.image_by_mask(mask & low).clone())
        .collect();
    MapOnCube::new(cube, f.space().clone(), images)
}

/// Conjugating the antipode by a block product leaves the antipodal spread
/// unchanged. Verifies, by enumeration:
///
///   E_e rho_Y(e,-e)  =  E_d E_e rho_Y(g(e,d), g(e,-d))   (blocks cover all
///   coordinates, so g(e,-d) = -g(e,d) and e -> g(e,d) is measure
///   preserving), and the bound by the worst restricted map
///   max_e E_d rho_Y(g(e,d), g(e,-d)).
pub fn exchange_identity_check(pair: &MapPair, blocks: &[SignedInterval]) -> Result<CheckReport> {
    let n = pair.dim();
    check_blocks(n, blocks)?;
    let covered: u32 = blocks.iter().map(|b| b.len()).sum();
    if covered != n {
        return Err(Error::MalformedBlocks(format!(
            "blocks cover {covered} of {n} coordinates; the exchange identity needs all of them"
        )));
    }
    let cube = pair.cube();
    let k = blocks.len() as u32;
    let inner_cube = Cube::new(k)?;

    let plain = expect(cube, |e| pair.rho_y(&e, &e.antipode()));

    let inner_vals: Vec<f64> = (0..cube.vertex_count())
        .map(|emask| {
            let e = cube.point(emask);
            expect(&inner_cube, |d| {
                let ged = block_product(&e, &d, blocks).unwrap();
                let gmd = block_product(&e, &d.antipode(), blocks).unwrap();
                pair.rho_y(&ged, &gmd)
            })
        })
        .collect();
    let worst_inner = inner_vals.iter().cloned().fold(0.0f64, f64::max);
    let exchanged = expect(cube, |e| inner_vals[e.mask() as usize]);

    let scale = plain.abs().max(1.0);
    let checks = vec![
        NamedCheck::eq("exchange_equality", plain, exchanged, IDENTITY_TOL * scale),
        NamedCheck::le("worst_restriction_dominates", plain, worst_inner, IDENTITY_TOL * scale),
    ];
    Ok(CheckReport::new("exchange_identity", checks))
}

/// Truncation to a multiple of l. With k = floor(m/l) and r = m - lk,
/// G(d) = f(d, pad) on 2^{lk}; dropping r coordinates moves each vertex by
/// at most r/m, which bounds the antipodal spread loss by 2 Lip(F) Lip(f) r/m.
pub fn truncation_bound_check(
    pair: &MapPair,
    l: u32,
    pad: Option<&CubePoint>,
) -> Result<CheckReport> {
    let m = pair.dim();
    if l == 0 || l > m {
        return Err(Error::InvalidParameter(format!(
            "block length {l} does not fit dimension {m}"
        )));
    }
    let k = m / l;
    let r = m - l * k;
    match pad {
        Some(d) if r == 0 => {
            return Err(Error::InvalidParameter(format!(
                "no pad expected when l divides m, got one of dimension {}",
                d.dim()
            )))
        }
        Some(d) if d.dim() != r => {
            return Err(Error::DimensionMismatch { expected: r, got: d.dim() });
        }
        None if r > 0 => {
            return Err(Error::InvalidParameter(format!(
                "a pad point of dimension {r} is required"
            )))
        }
        _ => {}
    }

    let f = pair.inner();
    let lk = l * k;
    let pad_bits = pad.map(|d| d.mask() << lk).unwrap_or(0);
    let trunc_cube = Cube::new(lk)?;
    let images = (0..trunc_cube.vertex_count())
        .map(|mask| f.image_by_mask(mask | pad_bits).clone())
        .collect::<Vec<_>>();
    let g = MapOnCube::new(trunc_cube, f.space().clone(), images)?;
    let g_pair = MapPair::new(g.clone(), pair.post_map())?;

    let full = expect(pair.cube(), |e| pair.rho_y(&e, &e.antipode()));
    let truncated = expect(g_pair.cube(), |e| g_pair.rho_y(&e, &e.antipode()));
    let slack = 2.0 * pair.lip_big_f() * pair.lip_f() * r as f64 / m as f64;

    let lip_g = lip_constant(&g);
    let scale = full.abs().max(1.0);
    let checks = vec![
        NamedCheck::le("antipodal_truncation", full, truncated + slack, IDENTITY_TOL * scale),
        NamedCheck::le(
            "lip_rescaling",
            lip_g,
            (m as f64 / lk as f64) * pair.lip_f(),
            IDENTITY_TOL * pair.lip_f().max(1.0),
        ),
    ];
    Ok(CheckReport::new("truncation_bound", checks))
}

/// The flip path J_0 = id, ..., J_n = antipode; step i flips coordinate i.
pub fn flip_path_point(e: &CubePoint, i: u32) -> CubePoint {
    if i == 0 {
        return e.clone();
    }
    let iv = SignedInterval::new(1, i).unwrap();
    crate::cube::flip_interval(e, &iv).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use crate::spaces::{LpSpace, MapOnCube, Point, Space};

    fn canonical_pair(n: u32) -> MapPair {
        MapPair::identity_pair(catalog::canonical_l1(n).unwrap()).unwrap()
    }

    fn constant_pair(n: u32) -> MapPair {
        let cube = Cube::new(n).unwrap();
        let images = vec![Point::Coords(vec![0.5]); cube.vertex_count() as usize];
        let f = MapOnCube::new(cube, Space::Lp(LpSpace::l1(1)), images).unwrap();
        MapPair::identity_pair(f).unwrap()
    }

    fn random_pair(n: u32, seed: u64) -> MapPair {
        let f = catalog::random_lp_map(n, LpSpace::l2(3), -1.0, 1.0, seed).unwrap();
        MapPair::identity_pair(f).unwrap()
    }

    #[test]
    fn b_ratio_is_one_for_canonical_l1() {
        for n in [2u32, 3, 5, 8] {
            for p in [1.5, 2.0, 3.0] {
                let stat = b_statistic(&canonical_pair(n), p).unwrap();
                assert!(
                    (stat.ratio.0 - 1.0).abs() < 1e-12,
                    "n={n} p={p} ratio={}",
                    stat.ratio.0
                );
            }
        }
    }

    #[test]
    fn b_ratio_is_scaling_for_canonical_l2() {
        for n in [2u32, 4, 7] {
            for p in [1.5, 2.0, 3.0] {
                let f = catalog::canonical_l2(n).unwrap();
                let stat = b_statistic(&MapPair::identity_pair(f).unwrap(), p).unwrap();
                let want = (n as f64).powf(-p / 2.0);
                assert!(
                    (stat.ratio.0 - want).abs() < 1e-12 * want.max(1.0),
                    "n={n} p={p}: {} vs {want}",
                    stat.ratio.0
                );
            }
        }
    }

    #[test]
    fn constant_map_gives_zero_ratios() {
        let pair = constant_pair(3);
        assert_eq!(b_statistic(&pair, 2.0).unwrap().ratio.0, 0.0);
        assert_eq!(e_statistic(&pair, 2.0).unwrap().ratio.0, 0.0);
        assert_eq!(a_statistic(&pair).ratio.0, 0.0);
    }

    #[test]
    fn exponent_must_exceed_one() {
        let pair = canonical_pair(2);
        assert!(b_statistic(&pair, 1.0).is_err());
        assert!(e_statistic(&pair, 0.5).is_err());
        assert!(b_statistic(&pair, f64::INFINITY).is_err());
    }

    #[test]
    fn a_statistic_canonical() {
        let stat = a_statistic(&canonical_pair(5));
        assert!((stat.lhs - 2.0).abs() < 1e-12);
        assert!((stat.rhs - 2.0).abs() < 1e-12);
        assert!((stat.ratio.0 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn e_equals_b_times_scale() {
        for seed in 0..10u64 {
            let pair = random_pair(5, seed);
            let p = 2.5;
            let b = b_statistic(&pair, p).unwrap();
            let e = e_statistic(&pair, p).unwrap();
            let want = b.ratio.0 * (5f64).powf(p - 1.0);
            assert!((e.ratio.0 - want).abs() <= 1e-12 * want.max(1.0));
        }
    }

    #[test]
    fn canonical_e_ratio_example() {
        let pair = canonical_pair(4);
        let e = e_statistic(&pair, 2.0).unwrap();
        assert!((e.ratio.0 - 4.0).abs() < 1e-12);
    }

    #[test]
    fn a_ratio_below_b_root() {
        for seed in 0..20u64 {
            let pair = random_pair(4, seed);
            for p in [1.5, 2.0, 3.0] {
                let a = a_statistic(&pair);
                let b = b_statistic(&pair, p).unwrap();
                assert!(
                    a.ratio.0 <= b.ratio.0.powf(1.0 / p) + 1e-12,
                    "seed={seed} p={p}: a={} b^(1/p)={}",
                    a.ratio.0,
                    b.ratio.0.powf(1.0 / p)
                );
            }
        }
    }

    #[test]
    fn b_ratio_bounded_by_post_map_lip() {
        let (f, big_f) = catalog::diag_log_pair(6).unwrap();
        let pair = MapPair::new(f, &big_f).unwrap();
        for p in [1.5, 2.0, 3.0] {
            let b = b_statistic(&pair, p).unwrap();
            assert!(b.ratio.0 <= pair.lip_big_f().powf(p) + 1e-12);
        }
    }

    #[test]
    fn diag_log_ratio_matches_average_weight() {
        for n in [4u32, 8, 12] {
            let (f, big_f) = catalog::diag_log_pair(n).unwrap();
            let pair = MapPair::new(f, &big_f).unwrap();
            let p = 2.0;
            let b = b_statistic(&pair, p).unwrap();
            let avg =
                catalog::diag_log_weights(n).iter().sum::<f64>() / n as f64;
            assert!(
                (b.ratio.0 - avg.powf(p)).abs() < 1e-12,
                "n={n}: {} vs {}",
                b.ratio.0,
                avg.powf(p)
            );
        }
    }

    #[test]
    fn doubling_preserves_antipodal_moment_exactly() {
        let f = catalog::canonical_l1(2).unwrap();
        let g = doubling_extension(&f, 3).unwrap();
        let pf = MapPair::identity_pair(f).unwrap();
        let pg = MapPair::identity_pair(g).unwrap();
        for p in [1.5, 2.0, 3.0] {
            assert_eq!(
                antipodal_moment(&pf, p).to_bits(),
                antipodal_moment(&pg, p).to_bits()
            );
        }
        for seed in 0..5u64 {
            let f = catalog::random_lp_map(3, LpSpace::l2(2), -1.0, 1.0, seed).unwrap();
            let g = doubling_extension(&f, 6).unwrap();
            let pf = MapPair::identity_pair(f).unwrap();
            let pg = MapPair::identity_pair(g).unwrap();
            assert_eq!(
                antipodal_moment(&pf, 2.0).to_bits(),
                antipodal_moment(&pg, 2.0).to_bits()
            );
        }
    }

    #[test]
    fn doubling_identity_when_target_equals_source() {
        let f = catalog::canonical_l1(3).unwrap();
        let g = doubling_extension(&f, 3).unwrap();
        for (a, b) in f.images().iter().zip(g.images()) {
            assert!(a.bit_equal(b));
        }
        assert!(doubling_extension(&f, 2).is_err());
    }

    #[test]
    fn doubling_factor_two_chain() {
        // l <= 2k: lhs of the source b-statistic is bounded by
        // 2^{p-1} * (b-ratio of the extension) * (source rhs)
        let p = 2.0;
        for seed in 0..10u64 {
            let f = catalog::random_lp_map(2, LpSpace::l2(2), -1.0, 1.0, seed).unwrap();
            let g = doubling_extension(&f, 4).unwrap();
            let pf = MapPair::identity_pair(f).unwrap();
            let pg = MapPair::identity_pair(g).unwrap();
            let bf = b_statistic(&pf, p).unwrap();
            let bg = b_statistic(&pg, p).unwrap();
            let bound = 2f64.powf(p - 1.0) * bg.ratio.0 * bf.rhs;
            assert!(
                bf.lhs <= bound + 1e-12 * bound.max(1.0),
                "seed={seed}: {} vs {bound}",
                bf.lhs
            );
        }
    }

    #[test]
    fn exchange_identity_on_random_maps() {
        let blocks = equal_blocks_for_test(4, 2);
        for seed in 0..5u64 {
            let f = catalog::random_lp_map(4, LpSpace::l2(4), -1.0, 1.0, seed).unwrap();
            let pair = MapPair::identity_pair(f).unwrap();
            let report = exchange_identity_check(&pair, &blocks).unwrap();
            assert!(report.holds, "seed={seed}: {report:?}");
        }
    }

    #[test]
    fn exchange_identity_canonical_value() {
        let blocks = equal_blocks_for_test(4, 2);
        let pair = canonical_pair(4);
        let report = exchange_identity_check(&pair, &blocks).unwrap();
        assert!(report.holds);
        let eq = report.check("exchange_equality").unwrap();
        assert!((eq.lhs.0 - 2.0).abs() < 1e-12);
        assert!((eq.rhs.0 - 2.0).abs() < 1e-12);
    }

    #[test]
    fn exchange_identity_constant_map() {
        let blocks = equal_blocks_for_test(4, 2);
        let report = exchange_identity_check(&constant_pair(4), &blocks).unwrap();
        assert!(report.holds);
        assert_eq!(report.check("exchange_equality").unwrap().lhs.0, 0.0);
    }

    #[test]
    fn exchange_identity_requires_full_cover() {
        let pair = canonical_pair(4);
        let blocks = vec![SignedInterval::new(1, 2).unwrap()];
        assert!(exchange_identity_check(&pair, &blocks).is_err());
    }

    fn equal_blocks_for_test(n: u32, l: u32) -> Vec<SignedInterval> {
        crate::cube::equal_blocks(n, l).unwrap()
    }

    #[test]
    fn truncation_with_r_zero_is_equality() {
        let pair = canonical_pair(4);
        let report = truncation_bound_check(&pair, 2, None).unwrap();
        assert!(report.holds);
        let c = report.check("antipodal_truncation").unwrap();
        assert!((c.lhs.0 - c.rhs.0).abs() < 1e-12);
    }

    #[test]
    fn truncation_on_random_maps() {
        let pad = CubePoint::from_mask(1, 1).unwrap();
        for seed in 0..5u64 {
            let f = catalog::random_lp_map(5, LpSpace::l1(5), -1.0, 1.0, seed).unwrap();
            let pair = MapPair::identity_pair(f).unwrap();
            let report = truncation_bound_check(&pair, 2, Some(&pad)).unwrap();
            assert!(report.holds, "seed={seed}: {report:?}");
        }
    }

    #[test]
    fn truncation_constant_map_all_zero() {
        let pair = constant_pair(5);
        let pad = CubePoint::from_mask(1, 0).unwrap();
        let report = truncation_bound_check(&pair, 2, Some(&pad)).unwrap();
        assert!(report.holds);
        assert_eq!(report.check("antipodal_truncation").unwrap().lhs.0, 0.0);
    }

    #[test]
    fn truncation_pad_shape_enforced() {
        let pair = canonical_pair(5);
        assert!(truncation_bound_check(&pair, 2, None).is_err());
        let wrong = CubePoint::from_mask(2, 0).unwrap();
        assert!(truncation_bound_check(&pair, 2, Some(&wrong)).is_err());
        let pad = CubePoint::from_mask(1, 0).unwrap();
        assert!(truncation_bound_check(&pair, 2, Some(&pad)).is_ok());
        let pair4 = canonical_pair(4);
        let stray = CubePoint::from_mask(1, 0).unwrap();
        assert!(truncation_bound_check(&pair4, 2, Some(&stray)).is_err());
    }

    #[test]
    fn triangle_hoelder_chain_on_random_pairs() {
        for n in [2u32, 5, 8] {
            for seed in 0..40u64 {
                let pair = random_pair(n, seed * 31 + n as u64);
                for p in [1.5, 2.0, 3.0] {
                    let cube = pair.cube();
                    let whole =
                        expect(cube, |e| pair.rho_x(&e, &e.antipode()).powf(p)).powf(1.0 / p);
                    let steps: f64 = (1..=n)
                        .map(|i| {
                            expect(cube, |e| {
                                let a = flip_path_point(&e, i - 1);
                                let b = flip_path_point(&e, i);
                                pair.rho_x(&a, &b).powf(p)
                            })
                            .powf(1.0 / p)
                        })
                        .sum();
                    assert!(
                        whole <= steps + 1e-12 * steps.max(1.0),
                        "n={n} seed={seed} p={p}: {whole} vs {steps}"
                    );
                }
            }
        }
    }

    #[test]
    fn flip_path_steps_match_single_flip_distribution() {
        let pair = random_pair(5, 99);
        let cube = pair.cube();
        for i in 1..=5u32 {
            let mut path_vals: Vec<u64> = cube
                .points()
                .map(|e| {
                    let a = flip_path_point(&e, i - 1);
                    let b = flip_path_point(&e, i);
                    pair.rho_x(&a, &b).to_bits()
                })
                .collect();
            let mut flip_vals: Vec<u64> = cube
                .points()
                .map(|e| pair.rho_x(&e, &flip_coordinate(&e, i).unwrap()).to_bits())
                .collect();
            path_vals.sort_unstable();
            flip_vals.sort_unstable();
            assert_eq!(path_vals, flip_vals);
        }
    }

    #[test]
    fn statistics_serialize_with_kind_tags() {
        let stat = b_statistic(&canonical_pair(3), 2.0).unwrap().with_seed(7);
        let text = serde_json::to_string(&stat).unwrap();
        assert!(text.contains("\"kind\":\"b_p\""));
        assert!(text.contains("\"lip_F\""));
        assert!(text.contains("\"seed\":7"));
        let back: TypeStatistic = serde_json::from_str(&text).unwrap();
        assert_eq!(back.lhs.to_bits(), stat.lhs.to_bits());
    }
}
