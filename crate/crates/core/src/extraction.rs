//! End-to-end subcube extraction: a parameter ledger fixes the constant
//! chain, a near-extremal pair is profiled over an interval tree, a good
//! interval is selected, and the induced map on the small cube is verified
//! to be rigid on both sides at comparable scales. Every stage leaves its
//! checks in the certificate; nothing downstream trusts intermediate state.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cube::{Cube, SignedInterval, expect};
use crate::error::{Error, Result};
use crate::report::{CheckReport, ExtReal, NamedCheck, StageReport};
use crate::rigidity::{estimate_bmw_constant, flat_phi};
use crate::spaces::{distortion, MapOnCube, MapPair};
use crate::tree::{tree_profile, select_good_interval, vase_check, IntervalTree, TreeProfile};
use crate::type_stats::{antipodal_moment, b_statistic, edge_moment_sum};

/// Relative tolerance for witness-function identities and the refinement
/// checks on map-generated profiles.
pub const WITNESS_TOL: f64 = 1e-9;

fn rel(tol: f64, rhs: f64) -> f64 {
    tol * rhs.abs().max(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LedgerMode {
    /// Constants derived along the chain; every invariant must verify.
    PaperFaithful,
    /// User-supplied constants for desk-scale runs; invariants are
    /// evaluated and recorded but only hard preconditions are fatal.
    Empirical,
}

/// Optional overrides for [`build_ledger`]. Anything left `None` is chosen
/// lazily along the chain.
#[derive(Debug, Clone, Default)]
pub struct LedgerOptions {
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub nu: Option<f64>,
    pub mu: Option<f64>,
    pub big_m: Option<f64>,
    pub delta: Option<f64>,
    pub m: Option<u32>,
    pub branching: Option<Vec<u32>>,
    pub big_phi: Option<f64>,
    pub eta: Option<f64>,
    /// Seed for the default two-sided-constant estimate when `a` is absent.
    pub estimate_seed: Option<u64>,
}

/// The full constant chain for one extraction run, with the evaluated
/// invariants attached.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParameterLedger {
    pub mode: LedgerMode,
    pub p: f64,
    pub lambda: f64,
    pub theta: f64,
    pub vartheta: f64,
    #[serde(rename = "D")]
    pub big_d: f64,
    pub b: f64,
    pub nu: f64,
    pub a: f64,
    pub mu: f64,
    #[serde(rename = "M")]
    pub big_m: f64,
    pub delta: f64,
    pub m: u32,
    pub d: u32,
    pub eta: f64,
    #[serde(rename = "Phi")]
    pub big_phi: f64,
    pub phi_star: f64,
    /// 1 - phi_star, kept separately because phi_star rounds to 1 long
    /// before the complement loses meaning.
    pub phi_complement: f64,
    pub branching: Vec<u32>,
    pub checks: CheckReport,
}

fn require(cond: bool, msg: String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::InvalidParameter(msg))
    }
}

fn unit_interval(name: &str, v: f64) -> Result<()> {
    require(v > 0.0 && v < 1.0, format!("{name} must be in (0,1), got {v}"))
}

/// Builds the constant chain. Preconditions in both modes: 1 < p < inf,
/// 0 < vartheta < theta <= lambda, D > 1. In paper-faithful mode every
/// derived constant is chosen as lazily as possible and all chain
/// inequalities must hold, else the first violated one is reported by name.
/// In empirical mode the chain is evaluated and recorded on the ledger.
pub fn build_ledger(
    p: f64,
    lambda: f64,
    theta: f64,
    vartheta: f64,
    big_d: f64,
    mode: LedgerMode,
    opts: &LedgerOptions,
) -> Result<ParameterLedger> {
    require(p.is_finite() && p > 1.0, format!("need 1 < p < inf, got {p}"))?;
    require(
        vartheta > 0.0 && vartheta < theta && theta <= lambda && lambda.is_finite(),
        format!("need 0 < vartheta < theta <= lambda, got {vartheta}, {theta}, {lambda}"),
    )?;
    require(big_d.is_finite() && big_d > 1.0, format!("need D > 1, got {big_d}"))?;

    let scale = (theta / lambda).powf(p);
    let b = opts.b.unwrap_or_else(|| (1.0 - (vartheta / theta).powf(p)) / 2.0);
    unit_interval("b", b)?;
    let nu = opts.nu.unwrap_or(b * scale / 8.0);
    unit_interval("nu", nu)?;

    // The uniform branching factor enters before the depth is known.
    let l = match (&opts.branching, mode) {
        (Some(br), _) => {
            require(!br.is_empty() && br.iter().all(|&x| x >= 1), "branching factors must be positive".into())?;
            br[0]
        }
        (None, LedgerMode::PaperFaithful) => 2,
        (None, LedgerMode::Empirical) => {
            return Err(Error::InvalidParameter(
                "empirical ledgers need the tree branching".into(),
            ))
        }
    };
    require(l >= 1, "branching factor must be positive".into())?;

    let a = match opts.a {
        Some(a) => a,
        None => {
            let seed = opts.estimate_seed.unwrap_or(0x1e0_5eed);
            estimate_bmw_constant(p, l, big_d, 128, seed)?.a_estimate
        }
    };
    unit_interval("a", a)?;
    let mu = opts.mu.unwrap_or(a * scale / 8.0);
    unit_interval("mu", mu)?;
    let big_m = opts.big_m.unwrap_or(1.2 * lambda / theta);
    require(big_m.is_finite() && big_m > 0.0, format!("M must be positive, got {big_m}"))?;
    let m_pow = big_m.powf(p);
    let delta = opts.delta.unwrap_or(nu * scale / (4.0 * m_pow));
    unit_interval("delta", delta)?;

    let decay_rhs = (1.0 - nu / 2.0) * scale;
    let decay_base = 1.0 - mu * delta / m_pow;
    let m = match (mode, opts.m) {
        (_, Some(m)) => m,
        (LedgerMode::Empirical, None) => 0,
        (LedgerMode::PaperFaithful, None) => {
            require(
                decay_base > 0.0 && decay_base < 1.0,
                format!("decay base out of range: {decay_base}"),
            )?;
            let real = (decay_rhs.ln() / decay_base.ln()).ceil();
            require(
                real.is_finite() && real < u32::MAX as f64,
                "derived bad-level budget exceeds the supported range".into(),
            )?;
            let mut m = real.max(1.0) as u32;
            while decay_base.powf(m as f64) >= decay_rhs {
                m += 1;
            }
            m
        }
    };

    let (d, branching) = match (mode, &opts.branching) {
        (LedgerMode::Empirical, Some(br)) => ((br.len() - 1) as u32, br.clone()),
        (LedgerMode::Empirical, None) => unreachable!("checked above"),
        (LedgerMode::PaperFaithful, maybe) => {
            let d = m.checked_add(2).ok_or_else(|| {
                Error::InvalidParameter("depth overflows the supported range".into())
            })?;
            let branching = match maybe {
                None => vec![l; d as usize + 1],
                Some(br) => {
                    require(
                        br.len() == d as usize + 1,
                        format!(
                            "paper-faithful branching must have d+1 = {} factors, got {}",
                            d + 1,
                            br.len()
                        ),
                    )?;
                    require(
                        br[..d as usize].iter().all(|&x| x == l),
                        "paper-faithful branching must be uniform below the leaves".into(),
                    )?;
                    br.clone()
                }
            };
            (d, branching)
        }
    };

    // Product of the first d factors, the node count bound entering the
    // eta conditions. Kept in f64: representable far beyond usize.
    let p_count: f64 = branching[..d as usize].iter().map(|&x| x as f64).product();

    let big_phi = match opts.big_phi {
        Some(v) => v,
        None => {
            let ratio = big_m * theta / lambda;
            if ratio > 1.0 {
                (0.999 * ratio.ln() / 3.0).exp()
            } else {
                1.0
            }
        }
    };
    require(
        big_phi.is_finite() && big_phi >= 1.0,
        format!("Phi must be at least 1, got {big_phi}"),
    )?;
    let flat = flat_phi(p, p_count.max(1.0), big_phi)?;
    let (phi_star, psi) = (flat.phi_star, flat.one_minus);

    let phi_pow_m1 = (p * big_phi.ln()).exp_m1();
    let phi_pow = phi_pow_m1 + 1.0;
    let cap_flat = psi / (2.0 - psi);
    let cap_bracket = phi_pow_m1 / (phi_pow + 1.0 + 2.0 * p_count * phi_pow);
    let cube_ratio = big_phi.powi(3) * lambda / (big_m * theta);
    let cap_cube =
        if cube_ratio < 1.0 { -(p * cube_ratio.ln()).exp_m1() } else { 0.0 };
    let g = mu / (phi_pow * p_count);
    let cap_mass = g / (2.0 - g);
    let eta = match opts.eta {
        Some(v) => v,
        None => 0.5 * nu.min(cap_flat).min(cap_bracket).min(cap_cube).min(cap_mass),
    };
    if !(eta > 0.0 && eta < 1.0) {
        return Err(Error::LedgerViolation {
            name: "eta_positive".into(),
            lhs: eta,
            rhs: 0.0,
        });
    }

    let checks = CheckReport::new(
        "ledger",
        vec![
            NamedCheck::gt("b_embedding_margin", (1.0 - b).powf(1.0 / p) * theta, vartheta),
            NamedCheck::stating("nu_below_b", nu, b, nu < b),
            NamedCheck::stating(
                "nu_budget",
                nu / b,
                (1.0 - nu) * scale / 4.0,
                nu / b < (1.0 - nu) * scale / 4.0,
            ),
            NamedCheck::stating("mu_below_a", mu, a, mu < a),
            NamedCheck::stating(
                "mu_budget",
                mu / a,
                (1.0 - nu) * scale / 4.0,
                mu / a < (1.0 - nu) * scale / 4.0,
            ),
            NamedCheck::gt("flatness_floor", big_m, lambda / theta),
            NamedCheck::stating(
                "delta_budget",
                delta * m_pow,
                nu * scale / 2.0,
                delta * m_pow < nu * scale / 2.0,
            ),
            NamedCheck::stating(
                "decay_budget",
                decay_base.powf(m as f64),
                decay_rhs,
                decay_base.powf(m as f64) < decay_rhs,
            ),
            NamedCheck::gt("depth_margin", d as f64, m as f64 + 1.0),
            NamedCheck::gt("phi_cube_margin", big_m, big_phi.powi(3) * lambda / theta),
            NamedCheck::stating("eta_flat_margin", eta, cap_flat, eta < cap_flat),
            NamedCheck::stating("eta_bracket_margin", eta, cap_bracket, eta < cap_bracket),
            NamedCheck::stating("eta_cube_margin", eta, cap_cube, eta < cap_cube),
            NamedCheck::stating("eta_mass_margin", eta, cap_mass, eta < cap_mass),
            NamedCheck::stating("eta_below_nu", eta, nu, eta < nu),
        ],
    );
    if mode == LedgerMode::PaperFaithful && !checks.holds {
        let c = checks.checks.iter().find(|c| !c.holds).unwrap();
        return Err(Error::LedgerViolation {
            name: c.name.clone(),
            lhs: c.lhs.0,
            rhs: c.rhs.0,
        });
    }
    Ok(ParameterLedger {
        mode,
        p,
        lambda,
        theta,
        vartheta,
        big_d,
        b,
        nu,
        a,
        mu,
        big_m,
        delta,
        m,
        d,
        eta,
        big_phi,
        phi_star,
        phi_complement: psi,
        branching,
        checks,
    })
}

/// The four averaged comparison functions of one interval with l child
/// blocks, tabulated over the ambient cube: antipodal and child-step
/// moments of the induced small-cube maps, on the image side (Y) and the
/// domain side (X).
#[derive(Debug, Clone)]
pub struct WitnessFunctions {
    p: f64,
    big_l: u32,
    l: u32,
    d_y: Vec<f64>,
    e_y: Vec<f64>,
    d_x: Vec<f64>,
    e_x: Vec<f64>,
}

impl WitnessFunctions {
    /// Wraps prescribed tables, for synthetic instances. All four must have
    /// the same power-of-two length.
    pub fn from_tables(
        p: f64,
        l: u32,
        d_y: Vec<f64>,
        e_y: Vec<f64>,
        d_x: Vec<f64>,
        e_x: Vec<f64>,
    ) -> Result<Self> {
        let len = d_y.len();
        if len == 0 || !len.is_power_of_two() {
            return Err(Error::InvalidParameter(format!(
                "table length must be a power of two, got {len}"
            )));
        }
        if e_y.len() != len || d_x.len() != len || e_x.len() != len {
            return Err(Error::InvalidParameter("table lengths differ".into()));
        }
        Ok(WitnessFunctions { p, big_l: len.trailing_zeros(), l, d_y, e_y, d_x, e_x })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn big_l(&self) -> u32 {
        self.big_l
    }

    /// Number of child blocks.
    pub fn l(&self) -> u32 {
        self.l
    }

    pub fn d_y(&self) -> &[f64] {
        &self.d_y
    }

    pub fn e_y(&self) -> &[f64] {
        &self.e_y
    }

    pub fn d_x(&self) -> &[f64] {
        &self.d_x
    }

    pub fn e_x(&self) -> &[f64] {
        &self.e_x
    }
}

fn check_partition(interval: &SignedInterval, blocks: &[SignedInterval]) -> Result<()> {
    if blocks.is_empty() {
        return Err(Error::MalformedBlocks("empty block list".into()));
    }
    if blocks[0].lo() != interval.lo() || blocks[blocks.len() - 1].hi() != interval.hi() {
        return Err(Error::MalformedBlocks(format!(
            "blocks must cover [{},{}]",
            interval.lo(),
            interval.hi()
        )));
    }
    for w in blocks.windows(2) {
        if w[1].lo() != w[0].hi() + 1 {
            return Err(Error::MalformedBlocks(format!(
                "gap between [{},{}] and [{},{}]",
                w[0].lo(),
                w[0].hi(),
                w[1].lo(),
                w[1].hi()
            )));
        }
    }
    Ok(())
}

/// Per-delta flip masks: entry m is the union of the block bit masks whose
/// index appears in m.
pub(crate) fn flip_masks(blocks: &[SignedInterval]) -> Vec<u64> {
    let mut flips = vec![0u64; 1 << blocks.len()];
    for m in 1..flips.len() {
        let low = m.trailing_zeros() as usize;
        flips[m] = flips[m & (m - 1)] ^ blocks[low].bits();
    }
    flips
}

/// Tabulates the witness functions of `interval` with child partition
/// `blocks` by exact enumeration. For each ambient vertex e, the block
/// product g(e,·) induces a map on the small cube; the tables hold its
/// antipodal p-th moment and its child-step moment sum scaled by l^{p-1},
/// on both the Y and X sides.
pub fn build_witness_functions(
    pair: &MapPair,
    interval: SignedInterval,
    blocks: &[SignedInterval],
    p: f64,
) -> Result<WitnessFunctions> {
    require(p.is_finite() && p >= 1.0, format!("p must be finite and >= 1, got {p}"))?;
    crate::cube::check_blocks(pair.dim(), blocks)?;
    check_partition(&interval, blocks)?;
    let l = blocks.len() as u32;
    let small = Cube::new(l)?;
    let big = pair.cube();
    let flips = flip_masks(blocks);
    let ibits = interval.bits();
    let l_pow = (l as f64).powf(p - 1.0);
    let block_bits: Vec<u64> = blocks.iter().map(|b| b.bits()).collect();

    let rows: Vec<(f64, f64, f64, f64)> = (0..big.vertex_count())
        .into_par_iter()
        .map(|em| {
            let d_y = expect(&small, |dpt| {
                let gm = em ^ flips[dpt.mask() as usize];
                pair.rho_y(&big.point(gm), &big.point(gm ^ ibits)).powf(p)
            });
            let d_x = expect(&small, |dpt| {
                let gm = em ^ flips[dpt.mask() as usize];
                pair.rho_x(&big.point(gm), &big.point(gm ^ ibits)).powf(p)
            });
            let e_y = l_pow
                * expect(&small, |dpt| {
                    let gm = em ^ flips[dpt.mask() as usize];
                    block_bits
                        .iter()
                        .map(|&bb| pair.rho_y(&big.point(gm), &big.point(gm ^ bb)).powf(p))
                        .sum()
                });
            let e_x = l_pow
                * expect(&small, |dpt| {
                    let gm = em ^ flips[dpt.mask() as usize];
                    block_bits
                        .iter()
                        .map(|&bb| pair.rho_x(&big.point(gm), &big.point(gm ^ bb)).powf(p))
                        .sum()
                });
            (d_y, e_y, d_x, e_x)
        })
        .collect();
    let mut w = WitnessFunctions {
        p,
        big_l: pair.dim(),
        l,
        d_y: Vec::with_capacity(rows.len()),
        e_y: Vec::with_capacity(rows.len()),
        d_x: Vec::with_capacity(rows.len()),
        e_x: Vec::with_capacity(rows.len()),
    };
    for (a, b, c, d) in rows {
        w.d_y.push(a);
        w.e_y.push(b);
        w.d_x.push(c);
        w.e_x.push(d);
    }
    Ok(w)
}

fn table_mean(cube: &Cube, table: &[f64]) -> f64 {
    expect(cube, |e| table[e.mask() as usize])
}

/// The exchange identities and pointwise dominations of witness tables
/// built from a map: averaging each table over the ambient cube must give
/// the corresponding profile moment of the interval (or its children), and
/// pointwise D <= E on both sides plus the Lipschitz transfers must hold.
pub fn witness_consistency_check(
    w: &WitnessFunctions,
    pair: &MapPair,
    interval: SignedInterval,
    blocks: &[SignedInterval],
) -> Result<CheckReport> {
    let p = w.p;
    let big = pair.cube();
    let ibits = interval.bits();
    let direct_r = expect(big, |e| pair.rho_y(&e, &big.point(e.mask() ^ ibits)).powf(p));
    let direct_s = expect(big, |e| pair.rho_x(&e, &big.point(e.mask() ^ ibits)).powf(p));
    let l_pow = (w.l as f64).powf(p - 1.0);
    let child_r: f64 = blocks
        .iter()
        .map(|b| {
            let bb = b.bits();
            expect(big, |e| pair.rho_y(&e, &big.point(e.mask() ^ bb)).powf(p))
        })
        .sum();
    let child_s: f64 = blocks
        .iter()
        .map(|b| {
            let bb = b.bits();
            expect(big, |e| pair.rho_x(&e, &big.point(e.mask() ^ bb)).powf(p))
        })
        .sum();

    let lam_pow = pair.lip_big_f().powf(p);
    let mut worst = [(f64::NEG_INFINITY, 0.0, 0.0); 4];
    for i in 0..w.d_y.len() {
        let pairs = [
            (w.d_y[i], w.e_y[i]),
            (w.d_x[i], w.e_x[i]),
            (w.d_y[i], lam_pow * w.d_x[i]),
            (w.e_y[i], lam_pow * w.e_x[i]),
        ];
        for (slot, (lhs, rhs)) in worst.iter_mut().zip(pairs) {
            if lhs - rhs > slot.0 {
                *slot = (lhs - rhs, lhs, rhs);
            }
        }
    }
    let names = ["dy_below_ey", "dx_below_ex", "dy_lipschitz", "ey_lipschitz"];
    let mut checks = vec![
        NamedCheck::eq(
            "mean_dy_is_interval_moment",
            table_mean(big, &w.d_y),
            direct_r,
            rel(WITNESS_TOL, direct_r),
        ),
        NamedCheck::eq(
            "mean_ey_is_child_moment",
            table_mean(big, &w.e_y),
            l_pow * child_r,
            rel(WITNESS_TOL, l_pow * child_r),
        ),
        NamedCheck::eq(
            "mean_dx_is_interval_moment",
            table_mean(big, &w.d_x),
            direct_s,
            rel(WITNESS_TOL, direct_s),
        ),
        NamedCheck::eq(
            "mean_ex_is_child_moment",
            table_mean(big, &w.e_x),
            l_pow * child_s,
            rel(WITNESS_TOL, l_pow * child_s),
        ),
    ];
    for (name, (_, lhs, rhs)) in names.iter().zip(worst) {
        checks.push(NamedCheck::le(name, lhs, rhs, rel(WITNESS_TOL, rhs)));
    }
    Ok(CheckReport::new("witness_consistency", checks))
}

/// The averaged-comparison hypotheses under which a witness vertex must
/// exist: pointwise dominations including the (1+nu) bracket, the three
/// strict mean comparisons, and the slack budget tying (mu, nu) to (a, b).
/// All comparisons are exact; the report is the certificate the alarm
/// logic conditions on.
#[allow(clippy::too_many_arguments)]
pub fn witness_hypotheses_check(
    w: &WitnessFunctions,
    lambda: f64,
    nu: f64,
    mu: f64,
    a: f64,
    b: f64,
    theta: f64,
) -> CheckReport {
    let p = w.p;
    let lam_pow = lambda.powf(p);
    let theta_pow = theta.powf(p);
    let mut min_val = f64::INFINITY;
    let mut worst = [(f64::NEG_INFINITY, 0.0, 0.0); 5];
    for i in 0..w.d_y.len() {
        min_val = min_val
            .min(w.d_y[i])
            .min(w.e_y[i])
            .min(w.d_x[i])
            .min(w.e_x[i]);
        let pairs = [
            (w.d_y[i], w.e_y[i]),
            (w.d_x[i], w.e_x[i]),
            (w.d_y[i], lam_pow * w.d_x[i]),
            (w.e_y[i], lam_pow * w.e_x[i]),
            (w.d_y[i], (1.0 + nu) * theta_pow * w.e_x[i]),
        ];
        for (slot, (lhs, rhs)) in worst.iter_mut().zip(pairs) {
            if lhs - rhs > slot.0 {
                *slot = (lhs - rhs, lhs, rhs);
            }
        }
    }
    let cube = Cube::new(w.big_l).expect("table length within cap");
    let mean_dy = table_mean(&cube, &w.d_y);
    let mean_ey = table_mean(&cube, &w.e_y);
    let mean_dx = table_mean(&cube, &w.d_x);
    let mean_ex = table_mean(&cube, &w.e_x);
    let names = ["dy_below_ey", "dx_below_ex", "dy_lipschitz", "ey_lipschitz", "dy_bracket"];
    let mut checks = vec![NamedCheck::le("nonnegative", 0.0, min_val, 0.0)];
    for (name, (_, lhs, rhs)) in names.iter().zip(worst) {
        checks.push(NamedCheck::le(name, lhs, rhs, 0.0));
    }
    checks.push(NamedCheck::gt("mean_dy_vs_ex", mean_dy, (1.0 - nu) * theta_pow * mean_ex));
    checks.push(NamedCheck::gt("mean_dy_vs_ey", mean_dy, (1.0 - mu) * mean_ey));
    checks.push(NamedCheck::gt("mean_dx_vs_ex", mean_dx, (1.0 - mu) * mean_ex));
    checks.push(NamedCheck::stating(
        "slack_budget",
        lam_pow * (2.0 * mu / a + 2.0 * nu / b),
        theta_pow * (1.0 - nu),
        lam_pow * (2.0 * mu / a + 2.0 * nu / b) < theta_pow * (1.0 - nu),
    ));
    CheckReport::new("witness_hypotheses", checks)
}

/// Enumerates the ambient cube for a vertex where both averaged functions
/// exceed their (1-a) comparisons and the Y side exceeds the (1-b)-scaled
/// X side. Returns the smallest such mask; absence is a legitimate outcome
/// when the hypotheses fail.
pub fn witness_search(w: &WitnessFunctions, a: f64, b: f64, theta: f64) -> Option<u64> {
    let theta_pow = theta.powf(w.p);
    (0..w.d_y.len() as u64).find(|&i| {
        let i = i as usize;
        w.d_y[i] > (1.0 - a) * w.e_y[i]
            && w.d_x[i] > (1.0 - a) * w.e_x[i]
            && w.d_y[i] > (1.0 - b) * theta_pow * w.e_x[i]
    })
}

/// Quantitative trail left on a passing certificate: the pair's observed
/// antipodal-versus-edges ratio root, the witnessed scale ratio r/s, and
/// the constant 2^{1/p-1} relating doubling steps of the same statistic.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScaleChain {
    pub pair_b_ratio_root: ExtReal,
    pub witnessed_scale_ratio: ExtReal,
    pub lower_factor: f64,
}

/// Everything one extraction run produced: the staged reports, the chosen
/// interval and witness, the induced map with its scales and distortions,
/// and a verdict that only reflects the independent re-verification.
#[derive(Debug, Clone, Serialize)]
pub struct ExtractionCertificate {
    pub verdict: bool,
    pub failed_stage: Option<String>,
    /// Internal-consistency alarms: a verified hypothesis certificate whose
    /// guaranteed conclusion failed to materialize.
    pub alarms: Vec<String>,
    pub stages: Vec<StageReport>,
    pub ledger: ParameterLedger,
    pub j0: Option<usize>,
    pub interval: Option<[u32; 2]>,
    pub witness: Option<u64>,
    pub scale_r: Option<f64>,
    pub scale_s: Option<f64>,
    pub scale_ratio: Option<ExtReal>,
    pub dist_h: Option<ExtReal>,
    pub dist_fh: Option<ExtReal>,
    /// The induced map on the small cube, as a map JSON value.
    pub h: Option<serde_json::Value>,
    pub chain: Option<ScaleChain>,
}

impl ExtractionCertificate {
    fn fresh(ledger: ParameterLedger) -> Self {
        ExtractionCertificate {
            verdict: false,
            failed_stage: None,
            alarms: Vec::new(),
            stages: Vec::new(),
            ledger,
            j0: None,
            interval: None,
            witness: None,
            scale_r: None,
            scale_s: None,
            scale_ratio: None,
            dist_h: None,
            dist_fh: None,
            h: None,
            chain: None,
        }
    }

    fn fail(mut self, stage: StageReport) -> Self {
        self.failed_stage = Some(stage.name.clone());
        self.stages.push(stage);
        self
    }

    pub fn stage(&self, name: &str) -> Option<&StageReport> {
        self.stages.iter().find(|s| s.name == name)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Builds the induced map h(delta) = f(g(e0, delta)) over the small cube,
/// on the inner (X-valued) side.
pub(crate) fn induced_map(
    pair: &MapPair,
    blocks: &[SignedInterval],
    e0: u64,
) -> Result<MapOnCube> {
    let flips = flip_masks(blocks);
    let small = Cube::new(blocks.len() as u32)?;
    let images = (0..flips.len())
        .map(|dm| pair.inner().image_by_mask(e0 ^ flips[dm]).clone())
        .collect();
    MapOnCube::new(small, pair.inner().space().clone(), images)
}

pub(crate) fn induced_outer_map(
    pair: &MapPair,
    blocks: &[SignedInterval],
    e0: u64,
) -> Result<MapOnCube> {
    let flips = flip_masks(blocks);
    let small = Cube::new(blocks.len() as u32)?;
    let images = (0..flips.len())
        .map(|dm| pair.outer().image_by_mask(e0 ^ flips[dm]).clone())
        .collect();
    MapOnCube::new(small, pair.outer().space().clone(), images)
}

/// Runs the staged extraction pipeline. Structural misuse (dimension or
/// branching mismatches) errors; every analytic failure instead lands in
/// the certificate with the stage named. The final verdict re-verifies the
/// two distortions through the metric-space module and the scale ratio by
/// direct division, never by trusting intermediate state.
pub fn extract_subcube(
    pair: &MapPair,
    ledger: &ParameterLedger,
    tree: &IntervalTree,
) -> Result<ExtractionCertificate> {
    if tree.branching() != ledger.branching.as_slice() {
        return Err(Error::InvalidParameter(format!(
            "ledger branching {:?} does not match the tree {:?}",
            ledger.branching,
            tree.branching()
        )));
    }
    if tree.big_l() != pair.dim() {
        return Err(Error::DimensionMismatch { expected: pair.dim(), got: tree.big_l() });
    }
    let p = ledger.p;
    let d = ledger.d as usize;
    let mut cert = ExtractionCertificate::fresh(ledger.clone());

    // Stage 0: the pair must be near-extremal for its antipodal moment.
    let lhs = antipodal_moment(pair, p);
    let edges = edge_moment_sum(pair, p);
    let factor = tree.prod_pow(0, d + 1, p);
    let near = NamedCheck::gt(
        "antipodal_excess",
        lhs,
        (1.0 - ledger.eta / 2.0) * ledger.theta.powf(p) * factor * edges,
    );
    let stage0 = StageReport::from_checks("near_extremality", vec![near]);
    if !stage0.passed() {
        return Ok(cert.fail(stage0));
    }
    cert.stages.push(stage0);

    // Stage 1: profile the tree and confirm the vase inequalities.
    let profile = tree_profile(pair, tree.clone(), p)?;
    let vase = vase_check(&profile);
    let stage1 = StageReport::from_checks("profile", vase.checks.clone());
    if !stage1.passed() {
        return Ok(cert.fail(stage1));
    }
    cert.stages.push(stage1);

    // Stage 2: refinement checks tying the profile to the ledger brackets,
    // with the per-node induced-map statistics standing in for family
    // constants.
    let stage2 = refinement_stage(pair, &profile, ledger)?;
    if !stage2.passed() {
        return Ok(cert.fail(stage2));
    }
    cert.stages.push(stage2);

    // Stage 3: good-interval selection.
    let selection = match select_good_interval(
        &profile,
        ledger.mu,
        ledger.nu,
        ledger.theta,
        ledger.delta,
        ledger.big_m,
        ledger.m,
        ledger.lambda,
    ) {
        Ok(sel) => sel,
        Err(Error::LedgerViolation { name, lhs, rhs }) => {
            let note = NamedCheck::stating(&name, lhs, rhs, false);
            return Ok(cert.fail(StageReport::from_checks("selection", vec![note])));
        }
        Err(e) => return Err(e),
    };
    if selection.goodx.alarm {
        cert.alarms.push("bad_level_count_exceeded_under_verified_hypotheses".into());
    }
    if selection.ytox.alarm {
        cert.alarms.push("bad_fraction_reached_under_verified_hypotheses".into());
    }
    let mut sel_checks = selection.conditions.checks.clone();
    sel_checks.push(selection.counting.clone());
    cert.j0 = Some(selection.j0);
    cert.interval = Some([selection.interval.lo(), selection.interval.hi()]);
    cert.stages.push(StageReport::from_checks("selection", sel_checks));

    // Stage 4: witness functions at the selected interval.
    let blocks: Vec<SignedInterval> =
        tree.level(selection.j0 + 1)[tree.children(selection.j0, selection.index)].to_vec();
    let w = build_witness_functions(pair, selection.interval, &blocks, p)?;
    let consistency = witness_consistency_check(&w, pair, selection.interval, &blocks)?;
    let stage4 = StageReport::from_checks("witness_functions", consistency.checks.clone());
    if !stage4.passed() {
        return Ok(cert.fail(stage4));
    }
    cert.stages.push(stage4);

    // Stage 5: witness search, with the hypothesis certificate recorded so
    // a missing witness under verified hypotheses raises an alarm.
    let hyps = witness_hypotheses_check(
        &w,
        ledger.lambda,
        ledger.nu,
        ledger.mu,
        ledger.a,
        ledger.b,
        ledger.theta,
    );
    let found = witness_search(&w, ledger.a, ledger.b, ledger.theta);
    if found.is_none() && hyps.holds {
        cert.alarms.push("witness_missing_under_verified_hypotheses".into());
    }
    let mut search_checks = hyps.checks.clone();
    search_checks.push(NamedCheck::stating(
        "witness_found",
        found.map_or(-1.0, |m| m as f64),
        0.0,
        found.is_some(),
    ));
    let stage5 = StageReport {
        name: "witness_search".into(),
        status: if found.is_some() {
            crate::report::StageStatus::Passed
        } else {
            crate::report::StageStatus::Failed
        },
        checks: search_checks,
    };
    if found.is_none() {
        cert.failed_stage = Some("witness_search".into());
        cert.stages.push(stage5);
        return Ok(cert);
    }
    cert.stages.push(stage5);
    let e0 = found.unwrap();
    cert.witness = Some(e0);

    // Stage 6: the induced subcube map and the independent verdict.
    let l = blocks.len() as f64;
    let scale_r = (w.e_y()[e0 as usize] / l.powf(p)).powf(1.0 / p);
    let scale_s = (w.e_x()[e0 as usize] / l.powf(p)).powf(1.0 / p);
    let h = induced_map(pair, &blocks, e0)?;
    let fh = induced_outer_map(pair, &blocks, e0)?;
    let dist_h = distortion(&h);
    let dist_fh = distortion(&fh);
    let ratio = if scale_s > 0.0 {
        scale_r / scale_s
    } else if scale_r == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    let cap = ledger.big_d * (1.0 + WITNESS_TOL);
    let verdict_checks = vec![
        NamedCheck::stating("h_distortion", dist_h, ledger.big_d, dist_h <= cap),
        NamedCheck::stating("fh_distortion", dist_fh, ledger.big_d, dist_fh <= cap),
        NamedCheck::le(
            "scale_domination",
            ledger.vartheta * scale_s,
            scale_r,
            rel(WITNESS_TOL, scale_r),
        ),
    ];
    let stage6 = StageReport::from_checks("subcube", verdict_checks);
    cert.scale_r = Some(scale_r);
    cert.scale_s = Some(scale_s);
    cert.scale_ratio = Some(ExtReal(ratio));
    cert.dist_h = Some(ExtReal(dist_h));
    cert.dist_fh = Some(ExtReal(dist_fh));
    cert.h = Some(serde_json::from_str(&crate::spaces::map_to_json(&h)?)?);
    let b_stat = b_statistic(pair, p)?;
    cert.chain = Some(ScaleChain {
        pair_b_ratio_root: b_stat.ratio_root,
        witnessed_scale_ratio: ExtReal(ratio),
        lower_factor: (2.0f64).powf(1.0 / p - 1.0),
    });
    let passed = stage6.passed();
    if !passed {
        return Ok(cert.fail(stage6));
    }
    cert.stages.push(stage6);
    cert.verdict = true;
    Ok(cert)
}

/// The profile-level refinement checks: root excess over the leaf mass,
/// Lipschitz domination, one-step power vases, and the induced-map brackets
/// per level ((1+nu) everywhere, (1+eta) at the deepest non-leaf level).
fn refinement_stage(
    pair: &MapPair,
    profile: &TreeProfile,
    ledger: &ParameterLedger,
) -> Result<StageReport> {
    let tree = profile.tree();
    let p = ledger.p;
    let d = tree.depth();
    let theta_pow = ledger.theta.powf(p);
    let leaves = tree.levels().len() - 1;
    let leaf_mass: f64 = profile.s_pow()[leaves].iter().sum();
    let mut checks = vec![NamedCheck::gt(
        "root_excess",
        profile.r_pow()[0][0],
        (1.0 - ledger.eta / 2.0) * theta_pow * tree.prod_pow(0, leaves, p) * leaf_mass,
    )];

    let mut worst_dom = (f64::NEG_INFINITY, 0.0, 0.0);
    for (j, level) in profile.r().iter().enumerate() {
        for (k, &rv) in level.iter().enumerate() {
            let bound = ledger.lambda * profile.s()[j][k];
            if rv - bound > worst_dom.0 {
                worst_dom = (rv - bound, rv, bound);
            }
        }
    }
    checks.push(NamedCheck::le(
        "lipschitz_domination",
        worst_dom.1,
        worst_dom.2,
        rel(WITNESS_TOL, worst_dom.2),
    ));

    for (tag, pows) in [("r", profile.r_pow()), ("s", profile.s_pow())] {
        let mut worst = (f64::NEG_INFINITY, 0.0, 0.0);
        for j in 0..=d {
            let factor = (tree.child_count(j) as f64).powf(p - 1.0);
            for k in 0..tree.level(j).len() {
                let rhs = factor * profile.child_pow_sum(pows, j, k);
                if pows[j][k] - rhs > worst.0 {
                    worst = (pows[j][k] - rhs, pows[j][k], rhs);
                }
            }
        }
        checks.push(NamedCheck::le(
            &format!("{tag}_one_step_vase"),
            worst.1,
            worst.2,
            rel(WITNESS_TOL, worst.2),
        ));
    }

    for j in 0..=d {
        let mut level_worst = 0.0f64;
        for k in 0..tree.level(j).len() {
            let blocks: Vec<SignedInterval> =
                tree.level(j + 1)[tree.children(j, k)].to_vec();
            let w = build_witness_functions(pair, tree.node(j, k), &blocks, p)?;
            for i in 0..w.d_y().len() {
                let ratio = crate::type_stats::ratio0(w.d_y()[i], w.e_x()[i]);
                level_worst = level_worst.max(ratio);
            }
        }
        let bound = (1.0 + ledger.nu) * theta_pow;
        checks.push(NamedCheck::le(
            &format!("induced_bracket_{j}"),
            level_worst,
            bound,
            rel(WITNESS_TOL, bound),
        ));
        if j == d {
            let deep = (1.0 + ledger.eta) * theta_pow;
            checks.push(NamedCheck::le(
                "deep_induced_bracket",
                level_worst,
                deep,
                rel(WITNESS_TOL, deep),
            ));
        }
    }
    Ok(StageReport::from_checks("refinement", checks))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use crate::spaces::LpSpace;
    use crate::tree::build_tree;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn empirical_ledger(branching: &[u32]) -> ParameterLedger {
        build_ledger(
            2.0,
            1.0,
            1.0,
            0.5,
            2.0,
            LedgerMode::Empirical,
            &LedgerOptions { branching: Some(branching.to_vec()), ..Default::default() },
        )
        .unwrap()
    }

    #[test]
    fn faithful_ledger_exists_and_verifies() {
        let led = build_ledger(
            2.0,
            1.0,
            1.0,
            0.5,
            2.0,
            LedgerMode::PaperFaithful,
            &LedgerOptions::default(),
        )
        .unwrap();
        assert!(led.checks.holds);
        assert_eq!(led.d, led.m + 2);
        assert_eq!(led.branching.len(), led.d as usize + 1);
        assert!(led.eta > 0.0 && led.eta < led.nu);
        assert!(led.phi_complement > 0.0);
    }

    #[test]
    fn ledger_preconditions() {
        let o = LedgerOptions::default();
        assert!(matches!(
            build_ledger(2.0, 1.0, 1.0, 1.0, 2.0, LedgerMode::PaperFaithful, &o),
            Err(Error::InvalidParameter(_))
        ));
        assert!(matches!(
            build_ledger(2.0, 1.0, 1.0, 0.5, 1.0, LedgerMode::PaperFaithful, &o),
            Err(Error::InvalidParameter(_))
        ));
        assert!(matches!(
            build_ledger(2.0, 0.5, 1.0, 0.2, 2.0, LedgerMode::PaperFaithful, &o),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn faithful_ledger_rejects_inconsistent_override() {
        let opts = LedgerOptions { nu: Some(0.9), ..Default::default() };
        match build_ledger(2.0, 1.0, 1.0, 0.5, 2.0, LedgerMode::PaperFaithful, &opts) {
            Err(Error::LedgerViolation { name, .. }) => assert_eq!(name, "nu_below_b"),
            other => panic!("expected a named violation, got {other:?}"),
        }
    }

    #[test]
    fn empirical_ledger_records_failures() {
        let led = empirical_ledger(&[2, 2, 2]);
        assert_eq!(led.m, 0);
        assert_eq!(led.d, 2);
        assert!(!led.checks.check("decay_budget").unwrap().holds);
        assert!(led.checks.check("depth_margin").unwrap().holds);
    }

    #[test]
    fn empirical_ledger_requires_branching() {
        assert!(matches!(
            build_ledger(
                2.0,
                1.0,
                1.0,
                0.5,
                2.0,
                LedgerMode::Empirical,
                &LedgerOptions::default()
            ),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn ledger_round_trips_as_json() {
        let led = empirical_ledger(&[2, 2, 2]);
        let text = serde_json::to_string(&led).unwrap();
        let back: ParameterLedger = serde_json::from_str(&text).unwrap();
        assert_eq!(back.eta.to_bits(), led.eta.to_bits());
        assert_eq!(back.branching, led.branching);
        assert_eq!(back.mode, LedgerMode::Empirical);
    }

    fn canonical_pair(n: u32) -> MapPair {
        MapPair::identity_pair(catalog::canonical_l1(n).unwrap()).unwrap()
    }

    #[test]
    fn witness_tables_constant_on_canonical() {
        let pair = canonical_pair(8);
        let interval = SignedInterval::new(1, 8).unwrap();
        let blocks =
            vec![SignedInterval::new(1, 4).unwrap(), SignedInterval::new(5, 8).unwrap()];
        let w = build_witness_functions(&pair, interval, &blocks, 2.0).unwrap();
        assert!(w.d_y().iter().all(|&v| (v - 4.0).abs() < 1e-12));
        assert!(w.e_y().iter().all(|&v| (v - 4.0).abs() < 1e-12));
        // Identity post-map: both sides agree bitwise.
        for i in 0..w.d_y().len() {
            assert_eq!(w.d_y()[i].to_bits(), w.d_x()[i].to_bits());
            assert_eq!(w.e_y()[i].to_bits(), w.e_x()[i].to_bits());
        }
        let report = witness_consistency_check(&w, &pair, interval, &blocks).unwrap();
        assert!(report.holds);
    }

    #[test]
    fn witness_identities_on_random_pairs() {
        for seed in [11u64, 12, 13] {
            let f = catalog::random_lp_map(8, LpSpace::l2(4), -1.0, 1.0, seed).unwrap();
            let big_f = catalog::random_diagonal_map(4, 0.5, 2.0, seed ^ 99).unwrap();
            let pair = MapPair::new(f, &big_f).unwrap();
            let interval = SignedInterval::new(3, 6).unwrap();
            let blocks =
                vec![SignedInterval::new(3, 4).unwrap(), SignedInterval::new(5, 6).unwrap()];
            let w = build_witness_functions(&pair, interval, &blocks, 2.0).unwrap();
            let report = witness_consistency_check(&w, &pair, interval, &blocks).unwrap();
            assert!(report.holds, "seed {seed}: {report:?}");
        }
    }

    #[test]
    fn witness_rejects_non_partition() {
        let pair = canonical_pair(6);
        let interval = SignedInterval::new(1, 6).unwrap();
        let gap = vec![SignedInterval::new(1, 2).unwrap(), SignedInterval::new(4, 6).unwrap()];
        assert!(matches!(
            build_witness_functions(&pair, interval, &gap, 2.0),
            Err(Error::MalformedBlocks(_))
        ));
    }

    #[test]
    fn witness_search_trivial_tables() {
        let ones = vec![1.0; 16];
        let w = WitnessFunctions::from_tables(
            2.0,
            2,
            ones.clone(),
            ones.clone(),
            ones.clone(),
            ones,
        )
        .unwrap();
        assert_eq!(witness_search(&w, 0.5, 0.5, 1.0), Some(0));
        let hyps = witness_hypotheses_check(&w, 1.0, 0.1, 0.05, 0.5, 0.5, 1.0);
        assert!(hyps.holds);
    }

    #[test]
    fn witness_search_none_without_alarm_conditions() {
        // E_X pushed up so the mean comparison (and hence the guarantee)
        // fails: none is a legitimate outcome.
        let w = WitnessFunctions::from_tables(
            2.0,
            2,
            vec![1.0; 8],
            vec![4.0; 8],
            vec![1.0; 8],
            vec![4.0; 8],
        )
        .unwrap();
        assert_eq!(witness_search(&w, 0.5, 0.5, 1.0), None);
        let hyps = witness_hypotheses_check(&w, 1.0, 0.1, 0.05, 0.5, 0.5, 1.0);
        assert!(!hyps.holds);
    }

    #[test]
    fn hypotheses_imply_witness_on_sampled_tables() {
        // Rejection-sample table quadruples satisfying the hypothesis
        // certificate and confirm the guaranteed witness is always found.
        // One index per table is spoiled below the witness threshold, so
        // the search cannot succeed trivially at every vertex.
        let lambda = 1.0f64;
        let theta = 0.9f64;
        let (nu, mu) = (0.07, 0.07);
        let (a, b) = (0.5, 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(404);
        let mut accepted = 0u32;
        let mut tried = 0u64;
        let mut spoiled_zero = 0u32;
        while accepted < 200 && tried < 2_000_000 {
            tried += 1;
            let len = 8usize;
            let spoil = rng.gen_range(0..len);
            let mut d_y = Vec::with_capacity(len);
            let mut e_y = Vec::with_capacity(len);
            let mut d_x = Vec::with_capacity(len);
            let mut e_x = Vec::with_capacity(len);
            for i in 0..len {
                let ex: f64 = rng.gen_range(0.5..1.5);
                let t: f64 = rng.gen_range(0.97..1.03);
                let mut dy = theta.powi(2) * t * ex;
                let ey = dy / rng.gen_range(0.99..1.0);
                if i == spoil {
                    dy *= rng.gen_range(0.45..0.50);
                }
                let dx = ex * rng.gen_range(0.99..1.0);
                d_y.push(dy);
                e_y.push(ey);
                d_x.push(dx);
                e_x.push(ex);
            }
            let w = WitnessFunctions::from_tables(2.0, 2, d_y, e_y, d_x, e_x).unwrap();
            let hyps = witness_hypotheses_check(&w, lambda, nu, mu, a, b, theta);
            if !hyps.holds {
                continue;
            }
            accepted += 1;
            let found = witness_search(&w, a, b, theta)
                .expect("verified hypotheses left no witness");
            assert_ne!(found, spoil as u64, "spoiled index cannot be a witness");
            if spoil == 0 {
                spoiled_zero += 1;
            }
        }
        assert!(accepted >= 50, "sampler accepted too few instances: {accepted}");
        assert!(spoiled_zero > 0, "search never had to skip the first vertex");
    }

    #[test]
    fn extract_canonical_passes_end_to_end() {
        let ledger = empirical_ledger(&[2, 2, 2]);
        let tree = build_tree(&[2, 2, 2]).unwrap();
        let pair = canonical_pair(8);
        let cert = extract_subcube(&pair, &ledger, &tree).unwrap();
        assert!(cert.verdict, "{:?}", cert.failed_stage);
        assert!(cert.alarms.is_empty());
        assert_eq!(cert.j0, Some(0));
        assert_eq!(cert.interval, Some([1, 8]));
        assert_eq!(cert.witness, Some(0));
        assert_eq!(cert.dist_h.unwrap().0, 1.0);
        assert_eq!(cert.dist_fh.unwrap().0, 1.0);
        assert_eq!(cert.scale_r.unwrap(), 1.0);
        assert_eq!(cert.scale_s.unwrap(), 1.0);
        assert_eq!(cert.scale_ratio.unwrap().0, 1.0);
        assert!(cert.stage("subcube").unwrap().passed());
        let text = cert.to_json().unwrap();
        assert!(text.contains("\"verdict\": true"));
    }

    #[test]
    fn extract_l2_fails_at_near_extremality() {
        let ledger = empirical_ledger(&[2, 2, 2]);
        let tree = build_tree(&[2, 2, 2]).unwrap();
        let pair = MapPair::identity_pair(catalog::canonical_l2(8).unwrap()).unwrap();
        let cert = extract_subcube(&pair, &ledger, &tree).unwrap();
        assert!(!cert.verdict);
        assert_eq!(cert.failed_stage.as_deref(), Some("near_extremality"));
        assert_eq!(cert.stages.len(), 1);
    }

    #[test]
    fn extract_rejects_mismatched_tree() {
        let ledger = empirical_ledger(&[2, 2, 2]);
        let tree = build_tree(&[2, 4]).unwrap();
        let pair = canonical_pair(8);
        assert!(matches!(
            extract_subcube(&pair, &ledger, &tree),
            Err(Error::InvalidParameter(_))
        ));
    }
}
