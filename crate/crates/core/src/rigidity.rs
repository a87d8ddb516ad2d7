//! The flat-vector constant, the sharp-embedding criterion, and the
//! antipodal-rigidity verifier with its empirical constant estimate.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cube::{expect, flip_coordinate, hamming_metric, Cube};
use crate::error::{Error, Result};
use crate::report::ExtReal;
use crate::spaces::{distortion, lip_constant, LpSpace, MapOnCube, Point, Space};
use crate::type_stats::ratio0;

pub const PAIR_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlatMethod {
    ConstrainedOpt,
    Grid,
    SampleCheck,
}

/// The optimal constant phi(p, n, Phi): the supremum of
/// ||a||_1^p / (n^{p-1} ||a||_p^p) over nonnegative a with max >= Phi * min.
/// `one_minus` carries 1 - phi_star computed without cancellation, which
/// stays meaningful when phi_star rounds to 1.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FlatConstant {
    pub p: f64,
    pub n: f64,
    #[serde(rename = "Phi")]
    pub big_phi: f64,
    pub phi_star: f64,
    pub one_minus: f64,
    pub method: FlatMethod,
}

fn check_flat_params(p: f64, n: f64, big_phi: f64) -> Result<()> {
    if !(p.is_finite() && p > 1.0) {
        return Err(Error::InvalidParameter(format!("need 1 < p < inf, got {p}")));
    }
    if !(n.is_finite() && n >= 1.0 && n.fract() == 0.0) {
        return Err(Error::InvalidParameter(format!("need an integer count n >= 1, got {n}")));
    }
    if !(big_phi.is_finite() && big_phi >= 1.0) {
        return Err(Error::InvalidParameter(format!("need Phi >= 1, got {big_phi}")));
    }
    Ok(())
}

/// Interior value of the extremal vector (Phi, v, ..., v, 1):
/// v = ((Phi^p + 1)/(Phi + 1))^{1/(p-1)}, independent of n.
fn interior_value(p: f64, big_phi: f64) -> f64 {
    let lp = p * big_phi.ln();
    let ln_num = if lp > 700.0 { lp } else { (big_phi.powf(p) + 1.0).ln() };
    ((ln_num - (big_phi + 1.0).ln()) / (p - 1.0)).exp()
}

/// phi and 1 - phi for the family (Phi, v, ..., v, 1), evaluated through
/// log1p/expm1 so that neither end of the scale cancels:
/// with x1 = Phi/v - 1, xn = 1/v - 1, X = x1 + xn and
/// R = (1+x1)^p + (1+xn)^p - 2 - pX,
/// ln phi = p ln1p(X/n) - ln1p((pX + R)/n).
fn phi_with_interior(p: f64, n: f64, big_phi: f64, v: f64) -> (f64, f64) {
    let y1 = big_phi / v;
    let yn = 1.0 / v;
    let x = y1 + yn - 2.0;
    let r = y1.powf(p) + yn.powf(p) - 2.0 - p * x;
    let t = p * (x / n).ln_1p() - ((p * x + r) / n).ln_1p();
    (t.exp(), -t.exp_m1())
}

/// Optimal flat constant.
///
/// The supremum is attained, after sorting and scaling, at a vector with one
/// coordinate at Phi, one at 1, and the remaining n-2 at the common interior
/// value v (two-value families are not extremal; the interior coordinate is
/// essential from n = 3 on). Degenerate case: n = 1 with Phi > 1 leaves no
/// admissible vector and the supremum over the empty set is reported as 0.
pub fn flat_phi(p: f64, n: f64, big_phi: f64) -> Result<FlatConstant> {
    check_flat_params(p, n, big_phi)?;
    if n == 1.0 && big_phi > 1.0 {
        return Ok(FlatConstant {
            p,
            n,
            big_phi,
            phi_star: 0.0,
            one_minus: 1.0,
            method: FlatMethod::ConstrainedOpt,
        });
    }
    let v = interior_value(p, big_phi);
    let (phi_star, one_minus) = phi_with_interior(p, n, big_phi, v);
    Ok(FlatConstant { p, n, big_phi, phi_star, one_minus, method: FlatMethod::ConstrainedOpt })
}

/// Grid cross-check: scans the interior value over [1, Phi] instead of
/// solving for it.
pub fn flat_phi_grid(p: f64, n: f64, big_phi: f64, steps: usize) -> Result<FlatConstant> {
    check_flat_params(p, n, big_phi)?;
    if steps < 2 {
        return Err(Error::InvalidParameter("grid needs at least 2 steps".into()));
    }
    if n == 1.0 && big_phi > 1.0 {
        let mut c = flat_phi(p, n, big_phi)?;
        c.method = FlatMethod::Grid;
        return Ok(c);
    }
    let mut best = (0.0f64, 1.0f64);
    for k in 0..=steps {
        let v = 1.0 + (big_phi - 1.0) * k as f64 / steps as f64;
        let (phi, om) = phi_with_interior(p, n, big_phi, v);
        if phi > best.0 {
            best = (phi, om);
        }
    }
    Ok(FlatConstant {
        p,
        n,
        big_phi,
        phi_star: best.0,
        one_minus: best.1,
        method: FlatMethod::Grid,
    })
}

/// ||a||_1^p / (n^{p-1} ||a||_p^p) on absolute values, 0/0 = 0.
pub fn flat_ratio(a: &[f64], p: f64) -> f64 {
    let n = a.len() as f64;
    let s: f64 = a.iter().map(|x| x.abs()).sum();
    let q: f64 = a.iter().map(|x| x.abs().powf(p)).sum();
    ratio0(s.powf(p), n.powf(p - 1.0) * q)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FlatCheck {
    pub hypothesis_holds: bool,
    pub conclusion_holds: bool,
    pub lhs: f64,
    pub rhs: f64,
    pub max_abs: f64,
    pub min_abs: f64,
}

/// Reports both sides of the flat-vector statement for one vector: the
/// hypothesis ||a||_1^p > phi n^{p-1} ||a||_p^p and the conclusion
/// max |a_i| <= Phi min |a_i|. A zero vector reports a false hypothesis.
pub fn flat_check(a: &[f64], p: f64, big_phi: f64, phi: f64) -> Result<FlatCheck> {
    if a.is_empty() {
        return Err(Error::InvalidParameter("empty vector".into()));
    }
    if !(p.is_finite() && p > 1.0) {
        return Err(Error::InvalidParameter(format!("need 1 < p < inf, got {p}")));
    }
    if !(big_phi.is_finite() && big_phi >= 1.0) {
        return Err(Error::InvalidParameter(format!("need Phi >= 1, got {big_phi}")));
    }
    if !(phi.is_finite() && phi >= 0.0) {
        return Err(Error::InvalidParameter(format!("need phi >= 0, got {phi}")));
    }
    let n = a.len() as f64;
    let s: f64 = a.iter().map(|x| x.abs()).sum();
    let q: f64 = a.iter().map(|x| x.abs().powf(p)).sum();
    let lhs = s.powf(p);
    let rhs = phi * n.powf(p - 1.0) * q;
    let max_abs = a.iter().map(|x| x.abs()).fold(0.0f64, f64::max);
    let min_abs = a.iter().map(|x| x.abs()).fold(f64::INFINITY, f64::min);
    Ok(FlatCheck {
        hypothesis_holds: lhs > rhs && s > 0.0,
        conclusion_holds: max_abs <= big_phi * min_abs,
        lhs,
        rhs,
        max_abs,
        min_abs,
    })
}

/// Max flat ratio among `trials` sampled nonnegative vectors that violate
/// the flatness conclusion (max >= Phi min). Used to falsify phi_star from
/// below: no sampled violator may beat it.
pub fn flat_sample_max_ratio(p: f64, n: usize, big_phi: f64, trials: u64, seed: u64) -> f64 {
    (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(trial));
            let mut a: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
            let max = a.iter().cloned().fold(0.0f64, f64::max);
            let min = a.iter().cloned().fold(f64::INFINITY, f64::min);
            if max < big_phi * min {
                // pull one non-maximal coordinate down to max * r / Phi with
                // r < 1, which makes the vector violate flatness outright
                let i_max = a
                    .iter()
                    .enumerate()
                    .max_by(|(_, x), (_, y)| x.partial_cmp(y).unwrap())
                    .map(|(i, _)| i)
                    .unwrap();
                let j = (i_max + 1) % n;
                a[j] = max * rng.gen_range(0.0..1.0) / big_phi;
            }
            flat_ratio(&a, p)
        })
        .reduce(|| 0.0, f64::max)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SharpEmbeddingReport {
    pub l: u32,
    pub a: f64,
    #[serde(rename = "D")]
    pub big_d: f64,
    pub lip: f64,
    pub min_antipodal: f64,
    pub hypothesis_holds: bool,
    pub distortion: ExtReal,
    pub verdict: bool,
    /// Set when the hypothesis held but the re-verified distortion exceeded
    /// D; that contradicts a proved implication, so it signals a bug rather
    /// than a legitimate failure.
    pub alarm: bool,
}

/// Sharp-embedding criterion: with 0 < a < 1/l and 1 - al > 1/D, the bound
/// (1-a) Lip(h) < min over antipodal pairs of d(h(d), h(-d)) forces
/// distortion(h) <= D. The distortion is re-verified independently.
pub fn sharp_embedding_check(h: &MapOnCube, a: f64, big_d: f64) -> Result<SharpEmbeddingReport> {
    let l = h.dim();
    if !(a > 0.0 && a < 1.0 / l as f64) {
        return Err(Error::InvalidParameter(format!("need 0 < a < 1/{l}, got {a}")));
    }
    if !(big_d > 0.0 && 1.0 - a * l as f64 > 1.0 / big_d) {
        return Err(Error::InvalidParameter(format!(
            "need 1 - a l > 1/D, got 1 - {a}*{l} = {} and 1/D = {}",
            1.0 - a * l as f64,
            1.0 / big_d
        )));
    }
    let lip = lip_constant(h);
    let cube = h.cube();
    let mut min_antipodal = f64::INFINITY;
    for e in cube.points() {
        min_antipodal = min_antipodal.min(h.rho(&e, &e.antipode()));
    }
    let hypothesis_holds = (1.0 - a) * lip < min_antipodal;
    let dist = distortion(h);
    let alarm = hypothesis_holds && !(dist <= big_d * (1.0 + PAIR_TOL));
    Ok(SharpEmbeddingReport {
        l,
        a,
        big_d,
        lip,
        min_antipodal,
        hypothesis_holds,
        distortion: dist.into(),
        verdict: hypothesis_holds && !alarm,
        alarm,
    })
}

/// Certificate for the antipodal-rigidity check. The scale T is defined by
/// T^p = l^{p-1} sum_i E d(h e, h d_i e)^p; with the normalized cube metric
/// the canonical map then calibrates to T = 2 and pair ratios exactly 1.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RigidityCertificate {
    pub l: u32,
    pub p: f64,
    #[serde(rename = "D")]
    pub big_d: f64,
    pub a_used: f64,
    pub hypothesis_ratio: f64,
    pub scale: f64,
    pub pair_min: f64,
    pub pair_max: f64,
    pub hypothesis_holds: bool,
    pub verdict: bool,
}

/// Verifies the rigidity conclusion shape for one map: whether
/// E d(h e, h(-e))^p > (1-a) T^p, and whether every pair ratio
/// d(h e1, h e2) / (T del(e1, e2)) lies in [1/D, D]. The verdict reflects
/// the two-sided check alone; the hypothesis side is recorded next to it.
pub fn bmw_rigidity_check(h: &MapOnCube, p: f64, a: f64, big_d: f64) -> Result<RigidityCertificate> {
    if !(p.is_finite() && p > 1.0) {
        return Err(Error::InvalidParameter(format!("need 1 < p < inf, got {p}")));
    }
    if !(a > 0.0 && a < 1.0) {
        return Err(Error::InvalidParameter(format!("need 0 < a < 1, got {a}")));
    }
    if !(big_d >= 1.0) {
        return Err(Error::InvalidParameter(format!("need D >= 1, got {big_d}")));
    }
    let l = h.dim();
    let cube = h.cube();
    let lhs = expect(cube, |e| h.rho(&e, &e.antipode()).powf(p));
    let edge_sum: f64 = expect(cube, |e| {
        (1..=l).map(|i| h.rho(&e, &flip_coordinate(&e, i).unwrap()).powf(p)).sum()
    });
    let t_pow = (l as f64).powf(p - 1.0) * edge_sum;
    let scale = t_pow.powf(1.0 / p);
    let hypothesis_ratio = ratio0(lhs, (1.0 - a) * t_pow);

    let mut pair_min = f64::INFINITY;
    let mut pair_max = 0.0f64;
    let count = cube.vertex_count();
    for am in 0..count {
        for bm in am + 1..count {
            let e1 = cube.point(am);
            let e2 = cube.point(bm);
            let ratio = ratio0(h.rho(&e1, &e2), scale * hamming_metric(&e1, &e2).unwrap());
            pair_min = pair_min.min(ratio);
            pair_max = pair_max.max(ratio);
        }
    }
    let verdict =
        pair_min >= (1.0 / big_d) * (1.0 - PAIR_TOL) && pair_max <= big_d * (1.0 + PAIR_TOL);
    Ok(RigidityCertificate {
        l,
        p,
        big_d,
        a_used: a,
        hypothesis_ratio,
        scale,
        pair_min,
        pair_max,
        hypothesis_holds: hypothesis_ratio > 1.0,
        verdict,
    })
}

/// Canonical map with images e_i/l + amp * u_i/l, u uniform in [-1, 1].
/// amp = 0 reproduces the canonical map exactly.
pub fn perturbed_canonical(l: u32, amp: f64, seed: u64) -> Result<MapOnCube> {
    if !(0.0..=1.0).contains(&amp) {
        return Err(Error::InvalidParameter(format!("amplitude must be in [0,1], got {amp}")));
    }
    let cube = Cube::new(l)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = 1.0 / l as f64;
    let images = cube
        .points()
        .map(|e| {
            Point::Coords(
                e.signs()
                    .iter()
                    .map(|&s| {
                        let noise = if amp > 0.0 { amp * rng.gen_range(-1.0..1.0) } else { 0.0 };
                        (s as f64 + noise) * scale
                    })
                    .collect(),
            )
        })
        .collect();
    MapOnCube::new(cube, Space::Lp(LpSpace::l1(l as usize)), images)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BmwCounterexample {
    pub trial: u64,
    pub seed: u64,
    pub amplitude: f64,
    pub hypothesis_ratio_at_zero: f64,
}

/// Empirical estimate of the rigidity constant for (p, l, D): the largest
/// a in (0,1) such that every sampled map satisfying the hypothesis at
/// level a also passes the two-sided D-check. Samples are perturbations of
/// the canonical map with amplitudes ramping over [0, 1]; trial i uses seed
/// seed + i. `degenerate` flags D = 1 (only exactly scaled maps can pass)
/// and the no-passing-map case.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BmwEstimate {
    pub p: f64,
    pub l: u32,
    #[serde(rename = "D")]
    pub big_d: f64,
    pub trials: u64,
    pub seed: u64,
    pub a_estimate: f64,
    pub pass_count: u64,
    pub degenerate: bool,
    pub counterexample: Option<BmwCounterexample>,
}

pub fn estimate_bmw_constant(
    p: f64,
    l: u32,
    big_d: f64,
    trials: u64,
    seed: u64,
) -> Result<BmwEstimate> {
    if trials < 1 {
        return Err(Error::InvalidParameter("need at least one trial".into()));
    }
    if !(p.is_finite() && p > 1.0) {
        return Err(Error::InvalidParameter(format!("need 1 < p < inf, got {p}")));
    }
    if !(big_d >= 1.0) {
        return Err(Error::InvalidParameter(format!("need D >= 1, got {big_d}")));
    }

    // per-trial cache: hypothesis ratio at a = 0 and the D-check outcome
    let outcomes: Vec<(f64, bool, f64)> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let amp = if trials == 1 { 0.0 } else { trial as f64 / (trials - 1) as f64 };
            let h = perturbed_canonical(l, amp, seed.wrapping_add(trial))?;
            // a close to 0 leaves the hypothesis rhs at T^p itself
            let cert = bmw_rigidity_check(&h, p, 0.5, big_d)?;
            let rho = cert.hypothesis_ratio * 0.5;
            Ok((rho, cert.verdict, amp))
        })
        .collect::<Result<_>>()?;

    let pass_count = outcomes.iter().filter(|(_, ok, _)| *ok).count() as u64;

    // A trial satisfies the hypothesis at level a iff rho > 1 - a. The
    // predicate "every hypothesis-satisfying trial passes" is monotone in a,
    // so bisection on (0, 1) finds the threshold.
    let admissible = |a: f64| {
        outcomes.iter().all(|(rho, ok, _)| *ok || *rho <= 1.0 - a)
    };
    let mut a_estimate = 0.0;
    if admissible(1.0 - 1e-12) {
        a_estimate = 1.0 - 1e-12;
    } else {
        let (mut lo, mut hi) = (0.0f64, 1.0 - 1e-12);
        if admissible(lo) {
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                if admissible(mid) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            a_estimate = lo;
        }
    }

    let counterexample = outcomes
        .iter()
        .enumerate()
        .filter(|(_, (_, ok, _))| !*ok)
        .min_by(|(_, (r1, _, _)), (_, (r2, _, _))| {
            (1.0 - r1).partial_cmp(&(1.0 - r2)).unwrap()
        })
        .map(|(i, (rho, _, amp))| BmwCounterexample {
            trial: i as u64,
            seed: seed.wrapping_add(i as u64),
            amplitude: *amp,
            hypothesis_ratio_at_zero: *rho,
        });

    Ok(BmwEstimate {
        p,
        l,
        big_d,
        trials,
        seed,
        a_estimate,
        pass_count,
        degenerate: big_d <= 1.0 + PAIR_TOL || pass_count == 0,
        counterexample,
    })
}
