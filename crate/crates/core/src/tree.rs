//! Interval trees over [1,L] and the coarse-differentiation analyses that
//! run on scale profiles attached to their nodes.
//!
//! A tree with branching (l_1,…,l_{d+1}) starts from the single interval
//! [1,L] with L = Π l_i and splits every node at level j into l_{j+1}
//! consecutive children of equal cardinality, down to singletons. A profile
//! assigns to every node I the two scales
//!
//!   r_I = [E ϱ_Y(ε, Iε)^p]^{1/p},   s_I = [E ϱ_X(ε, Iε)^p]^{1/p},
//!
//! where Iε flips the coordinates of I. The analyses below are pure
//! arithmetic on these numbers: membership sets use exact comparisons, and
//! the conditional conclusions fire an alarm only when their hypothesis
//! certificates verified first.

use serde::Serialize;

use crate::cube::SignedInterval;
use crate::error::{Error, Result};
use crate::report::{CheckReport, NamedCheck};
use crate::spaces::MapPair;

/// Hard cap on L; trees are materialized level by level.
pub const TREE_LEN_CAP: u64 = 1 << 20;

/// Relative tolerance used by [`vase_check`] and the re-verification of
/// selected intervals. Membership sets and hypothesis certificates compare
/// exactly instead.
pub const VASE_TOL: f64 = 1e-9;

fn rel(tol: f64, rhs: f64) -> f64 {
    tol * rhs.abs().max(1.0)
}

/// The (l_1,…,l_{d+1}) interval tree on [1,L], L = Π l_i.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntervalTree {
    branching: Vec<u32>,
    levels: Vec<Vec<SignedInterval>>,
}

impl IntervalTree {
    /// Branching factors (l_1,…,l_{d+1}).
    pub fn branching(&self) -> &[u32] {
        &self.branching
    }

    /// d, so that the levels run Λ_0,…,Λ_{d+1}.
    pub fn depth(&self) -> usize {
        self.branching.len() - 1
    }

    pub fn big_l(&self) -> u32 {
        self.levels[0][0].len()
    }

    pub fn levels(&self) -> &[Vec<SignedInterval>] {
        &self.levels
    }

    pub fn level(&self, j: usize) -> &[SignedInterval] {
        &self.levels[j]
    }

    pub fn node(&self, j: usize, k: usize) -> SignedInterval {
        self.levels[j][k]
    }

    /// Number of children of each node at level j (= l_{j+1}).
    pub fn child_count(&self, j: usize) -> u32 {
        self.branching[j]
    }

    /// Indices within level j+1 of the children of node (j,k).
    pub fn children(&self, j: usize, k: usize) -> std::ops::Range<usize> {
        let l = self.branching[j] as usize;
        k * l..(k + 1) * l
    }

    /// Indices within level j of the descendants of node (i,k), i <= j.
    pub fn descendants(&self, i: usize, k: usize, j: usize) -> std::ops::Range<usize> {
        let w: usize = self.branching[i..j].iter().map(|&l| l as usize).product();
        k * w..(k + 1) * w
    }

    /// Π_{m=i+1}^{j} l_m^{p-1}, the constant relating the p-th powers of a
    /// level-i node to the sum over its level-j descendants.
    pub fn prod_pow(&self, i: usize, j: usize, p: f64) -> f64 {
        self.branching[i..j].iter().map(|&l| (l as f64).powf(p - 1.0)).product()
    }
}

/// Builds the (l_1,…,l_{d+1}) tree. Every factor must be positive and the
/// product L must stay within [`TREE_LEN_CAP`].
pub fn build_tree(branching: &[u32]) -> Result<IntervalTree> {
    if branching.is_empty() {
        return Err(Error::InvalidParameter("branching must have at least one level".into()));
    }
    let mut big_l: u64 = 1;
    for &l in branching {
        if l == 0 {
            return Err(Error::InvalidParameter("branching factors must be positive".into()));
        }
        big_l = big_l.saturating_mul(l as u64);
        if big_l > TREE_LEN_CAP {
            return Err(Error::TreeOverflow);
        }
    }
    let big_l = big_l as u32;
    let mut levels = vec![vec![SignedInterval::new(1, big_l)?]];
    for (j, &l) in branching.iter().enumerate() {
        let mut next = Vec::with_capacity(levels[j].len() * l as usize);
        for iv in &levels[j] {
            let w = iv.len() / l;
            for c in 0..l {
                next.push(SignedInterval::new(iv.lo() + c * w, iv.lo() + (c + 1) * w - 1)?);
            }
        }
        levels.push(next);
    }
    Ok(IntervalTree { branching: branching.to_vec(), levels })
}

/// Scales r_I, s_I for every node of a tree, kept both as roots and as
/// p-th powers so level comparisons never re-exponentiate.
#[derive(Debug, Clone)]
pub struct TreeProfile {
    tree: IntervalTree,
    p: f64,
    r: Vec<Vec<f64>>,
    s: Vec<Vec<f64>>,
    r_pow: Vec<Vec<f64>>,
    s_pow: Vec<Vec<f64>>,
}

impl TreeProfile {
    /// Profile with prescribed scale roots, for synthetic instances.
    pub fn from_values(
        tree: IntervalTree,
        p: f64,
        r: Vec<Vec<f64>>,
        s: Vec<Vec<f64>>,
    ) -> Result<Self> {
        check_p(p)?;
        for (name, vals) in [("r", &r), ("s", &s)] {
            if vals.len() != tree.levels().len()
                || vals.iter().zip(tree.levels()).any(|(v, lv)| v.len() != lv.len())
            {
                return Err(Error::ProfileShape(format!(
                    "{name} values do not match the tree level sizes"
                )));
            }
            if vals.iter().flatten().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "{name} values must be finite and nonnegative"
                )));
            }
        }
        let pow = |v: &Vec<Vec<f64>>| {
            v.iter().map(|lv| lv.iter().map(|x| x.powf(p)).collect()).collect()
        };
        let (r_pow, s_pow) = (pow(&r), pow(&s));
        Ok(TreeProfile { tree, p, r, s, r_pow, s_pow })
    }

    pub fn tree(&self) -> &IntervalTree {
        &self.tree
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn r(&self) -> &[Vec<f64>] {
        &self.r
    }

    pub fn s(&self) -> &[Vec<f64>] {
        &self.s
    }

    pub fn r_pow(&self) -> &[Vec<f64>] {
        &self.r_pow
    }

    pub fn s_pow(&self) -> &[Vec<f64>] {
        &self.s_pow
    }

    /// Σ of the p-th powers over the children of node (j,k).
    pub fn child_pow_sum(&self, pow: &[Vec<f64>], j: usize, k: usize) -> f64 {
        self.tree.children(j, k).map(|c| pow[j + 1][c]).sum()
    }
}

fn check_p(p: f64) -> Result<()> {
    if !p.is_finite() || p < 1.0 {
        return Err(Error::InvalidParameter(format!("p must be finite and >= 1, got {p}")));
    }
    Ok(())
}

/// Tabulates r_I and s_I for every node by exact enumeration of the cube.
pub fn tree_profile(pair: &MapPair, tree: IntervalTree, p: f64) -> Result<TreeProfile> {
    check_p(p)?;
    if tree.big_l() != pair.dim() {
        return Err(Error::DimensionMismatch { expected: pair.dim(), got: tree.big_l() });
    }
    let cube = pair.cube();
    let moment = |iv: &SignedInterval, y_side: bool| -> f64 {
        let bits = iv.bits();
        crate::cube::expect(cube, |e| {
            let other = cube.point(e.mask() ^ bits);
            let d = if y_side { pair.rho_y(&e, &other) } else { pair.rho_x(&e, &other) };
            d.powf(p)
        })
    };
    let mut r_pow = Vec::with_capacity(tree.levels().len());
    let mut s_pow = Vec::with_capacity(tree.levels().len());
    for level in tree.levels() {
        r_pow.push(level.iter().map(|iv| moment(iv, true)).collect::<Vec<_>>());
        s_pow.push(level.iter().map(|iv| moment(iv, false)).collect::<Vec<_>>());
    }
    let root = |pow: &Vec<Vec<f64>>| -> Vec<Vec<f64>> {
        pow.iter().map(|lv| lv.iter().map(|x| x.powf(1.0 / p)).collect()).collect()
    };
    let (r, s) = (root(&r_pow), root(&s_pow));
    let lambda = pair.lip_big_f();
    for (j, level) in r.iter().enumerate() {
        for (k, &rv) in level.iter().enumerate() {
            let bound = lambda * s[j][k];
            if rv > bound + rel(VASE_TOL, bound) {
                return Err(Error::ProfileShape(format!(
                    "r exceeds the Lipschitz multiple of s at level {j} node {k}: {rv} > {lambda} * {}",
                    s[j][k]
                )));
            }
        }
    }
    Ok(TreeProfile { tree, p, r, s, r_pow, s_pow })
}

/// Verifies, for t ∈ {r,s} and every pair of levels i < j, that each level-i
/// node is dominated by its level-j descendants: t_I <= Σ t_J in root form
/// and t_I^p <= (Π l_m^{p-1}) Σ t_J^p in power form. Reports the worst node
/// per (t, i, j). Both follow from the triangle inequality and distribution
/// invariance when the profile comes from a map.
pub fn vase_check(profile: &TreeProfile) -> CheckReport {
    let tree = profile.tree();
    let p = profile.p();
    let mut checks = Vec::new();
    for (tag, vals, pows) in
        [("r", profile.r(), profile.r_pow()), ("s", profile.s(), profile.s_pow())]
    {
        for i in 0..tree.levels().len() - 1 {
            for j in i + 1..tree.levels().len() {
                let factor = tree.prod_pow(i, j, p);
                let mut worst_root = (f64::NEG_INFINITY, 0.0, 0.0);
                let mut worst_pow = (f64::NEG_INFINITY, 0.0, 0.0);
                for k in 0..tree.level(i).len() {
                    let span = tree.descendants(i, k, j);
                    let root_sum: f64 = span.clone().map(|c| vals[j][c]).sum();
                    let pow_sum: f64 = factor * span.map(|c| pows[j][c]).sum::<f64>();
                    if vals[i][k] - root_sum > worst_root.0 {
                        worst_root = (vals[i][k] - root_sum, vals[i][k], root_sum);
                    }
                    if pows[i][k] - pow_sum > worst_pow.0 {
                        worst_pow = (pows[i][k] - pow_sum, pows[i][k], pow_sum);
                    }
                }
                checks.push(NamedCheck::le(
                    &format!("vase_{tag}_root_{i}_{j}"),
                    worst_root.1,
                    worst_root.2,
                    rel(VASE_TOL, worst_root.2),
                ));
                checks.push(NamedCheck::le(
                    &format!("vase_{tag}_power_{i}_{j}"),
                    worst_pow.1,
                    worst_pow.2,
                    rel(VASE_TOL, worst_pow.2),
                ));
            }
        }
    }
    CheckReport::new("vase", checks)
}

/// Constants certifying the hypotheses of the bad-level count on the s side:
/// M-flatness per level, the (ν,Θ,λ) concentration of the root scale, and
/// the decay budget for at most m bad levels.
#[derive(Debug, Clone, Copy)]
pub struct GoodXHypotheses {
    pub big_m: f64,
    pub nu: f64,
    pub theta: f64,
    pub lambda: f64,
    pub m: u32,
}

/// Outcome of [`goodx_analysis`]: the per-level sets I_j of s-spread nodes,
/// the set B of levels where they have density ≥ Δ, and the conditional
/// conclusion |B| <= m.
#[derive(Debug, Clone)]
pub struct GoodXReport {
    pub mu: f64,
    pub delta: f64,
    pub i_sets: Vec<Vec<usize>>,
    pub b_set: Vec<usize>,
    pub hypotheses: Option<CheckReport>,
    pub conclusion: Option<NamedCheck>,
    /// Hypotheses verified but the conclusion failed.
    pub alarm: bool,
}

fn check_unit(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0 && v < 1.0) {
        return Err(Error::InvalidParameter(format!("{name} must be in (0,1), got {v}")));
    }
    Ok(())
}

fn check_pos(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0) || !v.is_finite() {
        return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
    }
    Ok(())
}

fn level_min_max(vals: &[f64]) -> (f64, f64) {
    vals.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
}

/// Worst-margin le check over all non-leaf nodes of `t_I <= Σ children`.
fn one_step_vase_check(profile: &TreeProfile, tag: &str, vals: &[Vec<f64>]) -> NamedCheck {
    let tree = profile.tree();
    let mut worst = (f64::NEG_INFINITY, 0.0, 0.0);
    for j in 0..tree.levels().len() - 1 {
        for k in 0..tree.level(j).len() {
            let sum: f64 = tree.children(j, k).map(|c| vals[j + 1][c]).sum();
            if vals[j][k] - sum > worst.0 {
                worst = (vals[j][k] - sum, vals[j][k], sum);
            }
        }
    }
    NamedCheck::le(&format!("{tag}_vase"), worst.1, worst.2, 0.0)
}

fn flatness_checks(profile: &TreeProfile, big_m: f64) -> Vec<NamedCheck> {
    let d = profile.tree().depth();
    (0..=d)
        .map(|j| {
            let (lo, hi) = level_min_max(&profile.s()[j]);
            NamedCheck::le(&format!("s_flat_{j}"), hi, big_m * lo, 0.0)
        })
        .collect()
}

fn root_concentration_check(
    profile: &TreeProfile,
    name: &str,
    pow: &[Vec<f64>],
    factor: f64,
) -> NamedCheck {
    let tree = profile.tree();
    let leaves = tree.levels().len() - 1;
    let leaf_sum: f64 = pow[leaves].iter().sum();
    let rhs = factor * tree.prod_pow(0, leaves, profile.p()) * leaf_sum;
    NamedCheck::gt(name, pow[0][0], rhs)
}

/// Per level j < d, collects I_j = {I ∈ Λ_j: s_I^p <= (1-μ) l_{j+1}^{p-1}
/// Σ_{J⁻=I} s_J^p} and B = {j: |I_j| >= Δ|Λ_j|}. When hypothesis constants
/// are supplied, their certificate is evaluated exactly and the bound
/// |B| <= m is asserted conditionally on it.
pub fn goodx_analysis(
    profile: &TreeProfile,
    mu: f64,
    delta: f64,
    hyps: Option<&GoodXHypotheses>,
) -> Result<GoodXReport> {
    check_unit("mu", mu)?;
    check_unit("delta", delta)?;
    let tree = profile.tree();
    let p = profile.p();
    let d = tree.depth();

    let mut i_sets = Vec::with_capacity(d);
    for j in 0..d {
        let factor = (tree.child_count(j) as f64).powf(p - 1.0);
        let set: Vec<usize> = (0..tree.level(j).len())
            .filter(|&k| {
                profile.s_pow()[j][k]
                    <= (1.0 - mu) * factor * profile.child_pow_sum(profile.s_pow(), j, k)
            })
            .collect();
        i_sets.push(set);
    }
    let b_set: Vec<usize> = (0..d)
        .filter(|&j| i_sets[j].len() as f64 >= delta * tree.level(j).len() as f64)
        .collect();

    let (hypotheses, conclusion, alarm) = match hyps {
        None => (None, None, false),
        Some(h) => {
            check_pos("M", h.big_m)?;
            check_unit("nu", h.nu)?;
            check_pos("theta", h.theta)?;
            check_pos("lambda", h.lambda)?;
            let min_s =
                profile.s().iter().flatten().fold(f64::INFINITY, |lo, &v| lo.min(v));
            let mut checks = vec![
                NamedCheck::gt("s_positive", min_s, 0.0),
                one_step_vase_check(profile, "s", profile.s()),
            ];
            checks.extend(flatness_checks(profile, h.big_m));
            let scale = (1.0 - h.nu / 2.0) * (h.theta / h.lambda).powf(p);
            checks.push(root_concentration_check(
                profile,
                "root_concentration",
                profile.s_pow(),
                scale,
            ));
            let decay = (1.0 - mu * delta / h.big_m.powf(p)).powf(h.m as f64);
            checks.push(NamedCheck::stating("mass_decay", decay, scale, decay < scale));
            let report = CheckReport::new("goodx_hypotheses", checks);
            let concl =
                NamedCheck::le("bad_levels_bound", b_set.len() as f64, h.m as f64, 0.0);
            let alarm = report.holds && !concl.holds;
            (Some(report), Some(concl), alarm)
        }
    };
    Ok(GoodXReport { mu, delta, i_sets, b_set, hypotheses, conclusion, alarm })
}

/// Certificate constant for [`ytox_analysis`]: the flatness bound M used by
/// its hypotheses (iii)-(iv).
#[derive(Debug, Clone, Copy)]
pub struct YtoXHypotheses {
    pub big_m: f64,
}

/// Outcome of [`ytox_analysis`]: per level j < d, the set of nodes whose r
/// scale fails to dominate the Θ-scaled child s mass.
#[derive(Debug, Clone)]
pub struct YtoXReport {
    pub nu: f64,
    pub theta: f64,
    pub delta: f64,
    pub lambda: f64,
    pub bad_sets: Vec<Vec<usize>>,
    pub hypotheses: Option<CheckReport>,
    pub conclusions: Option<CheckReport>,
    /// Hypotheses verified but some level's bad fraction reached 1-Δ.
    pub alarm: bool,
}

impl YtoXReport {
    pub fn bad_counts(&self) -> Vec<usize> {
        self.bad_sets.iter().map(|s| s.len()).collect()
    }
}

/// Per level j < d, counts {I ∈ Λ_j: r_I^p <= (1-ν) l_{j+1}^{p-1} Θ^p
/// Σ_{J⁻=I} s_J^p}. When the flatness constant is supplied, the hypothesis
/// certificate (domination r <= λs, one-step vases, M-flat s, the Δ budget
/// ΔM^p <= νΘ^p/2λ^p, and root concentration) is evaluated and each level's
/// count is asserted < (1-Δ)|Λ_j| conditionally on it.
pub fn ytox_analysis(
    profile: &TreeProfile,
    nu: f64,
    theta: f64,
    delta: f64,
    lambda: f64,
    hyps: Option<&YtoXHypotheses>,
) -> Result<YtoXReport> {
    check_unit("nu", nu)?;
    check_unit("delta", delta)?;
    check_pos("theta", theta)?;
    check_pos("lambda", lambda)?;
    let tree = profile.tree();
    let p = profile.p();
    let d = tree.depth();
    let theta_pow = theta.powf(p);

    let mut bad_sets = Vec::with_capacity(d);
    for j in 0..d {
        let factor = (tree.child_count(j) as f64).powf(p - 1.0);
        let set: Vec<usize> = (0..tree.level(j).len())
            .filter(|&k| {
                profile.r_pow()[j][k]
                    <= (1.0 - nu)
                        * factor
                        * theta_pow
                        * profile.child_pow_sum(profile.s_pow(), j, k)
            })
            .collect();
        bad_sets.push(set);
    }

    let (hypotheses, conclusions, alarm) = match hyps {
        None => (None, None, false),
        Some(h) => {
            check_pos("M", h.big_m)?;
            let mut worst = (f64::NEG_INFINITY, 0.0, 0.0);
            for (j, level) in profile.r().iter().enumerate() {
                for (k, &rv) in level.iter().enumerate() {
                    let bound = lambda * profile.s()[j][k];
                    if rv - bound > worst.0 {
                        worst = (rv - bound, rv, bound);
                    }
                }
            }
            let mut checks = vec![
                NamedCheck::le("domination", worst.1, worst.2, 0.0),
                one_step_vase_check(profile, "r", profile.r()),
                one_step_vase_check(profile, "s", profile.s()),
            ];
            checks.extend(flatness_checks(profile, h.big_m));
            checks.push(NamedCheck::le(
                "delta_flatness_budget",
                delta * h.big_m.powf(p),
                nu * theta_pow / (2.0 * lambda.powf(p)),
                0.0,
            ));
            checks.push(root_concentration_check(
                profile,
                "root_concentration",
                profile.r_pow(),
                (1.0 - nu / 2.0) * theta_pow,
            ));
            let report = CheckReport::new("ytox_hypotheses", checks);
            let concl = CheckReport::new(
                "ytox_conclusions",
                (0..d)
                    .map(|j| {
                        let frac = (1.0 - delta) * tree.level(j).len() as f64;
                        let count = bad_sets[j].len() as f64;
                        NamedCheck::stating(
                            &format!("bad_fraction_{j}"),
                            count,
                            frac,
                            count < frac,
                        )
                    })
                    .collect(),
            );
            let alarm = report.holds && !concl.holds;
            (Some(report), Some(concl), alarm)
        }
    };
    Ok(YtoXReport { nu, theta, delta, lambda, bad_sets, hypotheses, conclusions, alarm })
}

/// A level j_0 and interval I ∈ Λ_{j_0} on which both scales concentrate and
/// r dominates the Θ-scaled child s mass, together with everything that was
/// checked on the way.
#[derive(Debug, Clone)]
pub struct GoodIntervalSelection {
    pub j0: usize,
    pub index: usize,
    pub interval: SignedInterval,
    /// l_{j_0+1}, the number of children of the selected interval.
    pub branching_at: u32,
    pub a_counts: Vec<usize>,
    pub b_counts: Vec<usize>,
    pub goodx: GoodXReport,
    pub ytox: YtoXReport,
    /// The three concentration/domination conditions on the selected node.
    pub conditions: CheckReport,
    /// |A_{j_0}| + |B_{j_0}| < |Λ_{j_0}|, the counting step behind
    /// nonemptiness of the complement.
    pub counting: NamedCheck,
}

fn first_failed(reports: &[Option<&CheckReport>]) -> Option<(String, f64, f64)> {
    for rep in reports.iter().flatten() {
        if let Some(c) = rep.checks.iter().find(|c| !c.holds) {
            return Some((c.name.clone(), c.lhs.0, c.rhs.0));
        }
    }
    None
}

fn selection_failure(
    fallback: (&str, f64, f64),
    reports: &[Option<&CheckReport>],
) -> Error {
    let (name, lhs, rhs) = first_failed(reports)
        .unwrap_or_else(|| (fallback.0.to_string(), fallback.1, fallback.2));
    Error::LedgerViolation { name, lhs, rhs }
}

/// Finds the smallest level j_0 < d whose s-spread set A_{j_0} has density
/// < Δ and, within it, the leftmost interval outside A_{j_0} ∪ B_{j_0}.
/// The returned interval's concentration and domination conditions are
/// re-verified numerically. Requires d > m+1 so that the bad-level budget
/// leaves room for a good level; when the search gets stuck, the error
/// names the first hypothesis condition that failed to verify.
#[allow(clippy::too_many_arguments)]
pub fn select_good_interval(
    profile: &TreeProfile,
    mu: f64,
    nu: f64,
    theta: f64,
    delta: f64,
    big_m: f64,
    m: u32,
    lambda: f64,
) -> Result<GoodIntervalSelection> {
    let tree = profile.tree();
    let d = tree.depth();
    if d as u64 <= m as u64 + 1 {
        return Err(Error::InvalidParameter(format!(
            "tree depth d = {d} must exceed the bad-level budget m+1 = {}",
            m + 1
        )));
    }
    let goodx = goodx_analysis(
        profile,
        mu,
        delta,
        Some(&GoodXHypotheses { big_m, nu, theta, lambda, m }),
    )?;
    let ytox =
        ytox_analysis(profile, nu, theta, delta, lambda, Some(&YtoXHypotheses { big_m }))?;
    let hyp_reports =
        [goodx.hypotheses.as_ref(), ytox.hypotheses.as_ref()];

    let j0 = match (0..d)
        .find(|&j| (goodx.i_sets[j].len() as f64) < delta * tree.level(j).len() as f64)
    {
        Some(j) => j,
        None => {
            return Err(selection_failure(
                ("no_level_below_density", d as f64, delta),
                &hyp_reports,
            ))
        }
    };
    let a_set = &goodx.i_sets[j0];
    let b = &ytox.bad_sets[j0];
    let index = match (0..tree.level(j0).len())
        .find(|k| !a_set.contains(k) && !b.contains(k))
    {
        Some(k) => k,
        None => {
            return Err(selection_failure(
                ("complement_empty", (a_set.len() + b.len()) as f64, tree.level(j0).len() as f64),
                &hyp_reports,
            ))
        }
    };

    let p = profile.p();
    let factor = (tree.child_count(j0) as f64).powf(p - 1.0);
    let r_i = profile.r_pow()[j0][index];
    let s_i = profile.s_pow()[j0][index];
    let r_children = factor * profile.child_pow_sum(profile.r_pow(), j0, index);
    let s_children = factor * profile.child_pow_sum(profile.s_pow(), j0, index);
    let conditions = CheckReport::new(
        "selected_interval",
        vec![
            NamedCheck::gt("r_concentrated_at_parent", r_i, (1.0 - mu) * r_children),
            NamedCheck::gt("s_concentrated_at_parent", s_i, (1.0 - mu) * s_children),
            NamedCheck::le("r_vase_at_parent", r_i, r_children, rel(VASE_TOL, r_children)),
            NamedCheck::gt(
                "r_dominates_scaled_s",
                r_i,
                (1.0 - nu) * theta.powf(p) * s_children,
            ),
        ],
    );
    if !conditions.holds {
        let c = conditions.checks.iter().find(|c| !c.holds).unwrap();
        return Err(Error::LedgerViolation {
            name: c.name.clone(),
            lhs: c.lhs.0,
            rhs: c.rhs.0,
        });
    }
    let counting = NamedCheck::stating(
        "counting",
        (a_set.len() + b.len()) as f64,
        tree.level(j0).len() as f64,
        ((a_set.len() + b.len()) as f64) < tree.level(j0).len() as f64,
    );
    Ok(GoodIntervalSelection {
        j0,
        index,
        interval: tree.node(j0, index),
        branching_at: tree.child_count(j0),
        a_counts: goodx.i_sets.iter().map(|s| s.len()).collect(),
        b_counts: ytox.bad_counts(),
        goodx,
        ytox,
        conditions,
        counting,
    })
}

/// Conditional flatness/concentration transfer: if r is dominated by λs,
/// both scales satisfy the one-step vase, the level-d nodes are η-bracketed
/// against their children and the root retains a (1-η) fraction of the
/// Θ-scaled leaf mass, then every level of s is M-flat and every non-leaf
/// r-scale concentrates at its parent up to (1-μ). The two conclusion
/// families range over their own level sets and are reported independently.
#[derive(Debug, Clone)]
pub struct EtaReport {
    pub eta: f64,
    pub hypotheses: CheckReport,
    pub conclusions: CheckReport,
    pub alarm: bool,
}

pub fn eta_conclusion_check(
    profile: &TreeProfile,
    eta: f64,
    mu: f64,
    lambda: f64,
    theta: f64,
    big_m: f64,
) -> Result<EtaReport> {
    check_unit("eta", eta)?;
    check_unit("mu", mu)?;
    check_pos("lambda", lambda)?;
    check_pos("theta", theta)?;
    check_pos("M", big_m)?;
    let tree = profile.tree();
    let p = profile.p();
    let d = tree.depth();
    let theta_pow = theta.powf(p);

    let mut worst_dom = (f64::NEG_INFINITY, 0.0, 0.0);
    for (j, level) in profile.r().iter().enumerate() {
        for (k, &rv) in level.iter().enumerate() {
            let bound = lambda * profile.s()[j][k];
            if rv - bound > worst_dom.0 {
                worst_dom = (rv - bound, rv, bound);
            }
        }
    }
    let mut worst_deep = (f64::NEG_INFINITY, 0.0, 0.0);
    let deep_factor = (tree.child_count(d) as f64).powf(p - 1.0);
    for k in 0..tree.level(d).len() {
        let rhs = (1.0 + eta)
            * theta_pow
            * deep_factor
            * profile.child_pow_sum(profile.s_pow(), d, k);
        let lhs = profile.r_pow()[d][k];
        if lhs - rhs > worst_deep.0 {
            worst_deep = (lhs - rhs, lhs, rhs);
        }
    }
    let hypotheses = CheckReport::new(
        "eta_hypotheses",
        vec![
            NamedCheck::le("domination", worst_dom.1, worst_dom.2, 0.0),
            one_step_vase_check(profile, "r", profile.r()),
            one_step_vase_check(profile, "s", profile.s()),
            NamedCheck::le("deep_bracket", worst_deep.1, worst_deep.2, 0.0),
            root_concentration_check(
                profile,
                "root_concentration",
                profile.r_pow(),
                (1.0 - eta) * theta_pow,
            ),
        ],
    );

    let mut concl = flatness_checks(profile, big_m);
    for i in 0..d {
        let factor = (tree.child_count(i) as f64).powf(p - 1.0);
        let mut worst = (f64::NEG_INFINITY, 0.0, 0.0, true);
        for k in 0..tree.level(i).len() {
            let rhs =
                (1.0 - mu) * factor * profile.child_pow_sum(profile.r_pow(), i, k);
            let lhs = profile.r_pow()[i][k];
            if rhs - lhs > worst.0 {
                worst = (rhs - lhs, lhs, rhs, lhs > rhs);
            }
        }
        concl.push(NamedCheck::stating(
            &format!("r_concentrated_{i}"),
            worst.1,
            worst.2,
            worst.3,
        ));
    }
    let conclusions = CheckReport::new("eta_conclusions", concl);
    let alarm = hypotheses.holds && !conclusions.holds;
    Ok(EtaReport { eta, hypotheses, conclusions, alarm })
}

#[derive(Serialize)]
struct NodeJson {
    lo: u32,
    hi: u32,
    level: usize,
    r: f64,
    s: f64,
}

#[derive(Serialize)]
struct ProfileJson {
    branching: Vec<u32>,
    p: f64,
    nodes: Vec<NodeJson>,
}

/// Profile dump: {branching, p, nodes: [{lo, hi, level, r, s}]} in
/// level-major order.
pub fn profile_to_json(profile: &TreeProfile) -> Result<String> {
    let tree = profile.tree();
    let mut nodes = Vec::new();
    for (j, level) in tree.levels().iter().enumerate() {
        for (k, iv) in level.iter().enumerate() {
            nodes.push(NodeJson {
                lo: iv.lo(),
                hi: iv.hi(),
                level: j,
                r: profile.r()[j][k],
                s: profile.s()[j][k],
            });
        }
    }
    let dump = ProfileJson { branching: tree.branching().to_vec(), p: profile.p(), nodes };
    Ok(serde_json::to_string_pretty(&dump)?)
}
