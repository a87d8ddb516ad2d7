//! Target metric spaces and maps defined on cube vertices.
//!
//! A map is a full image table in mask order, either into a finite-dimensional
//! l_q space (coordinate vectors) or into a tabulated (pseudo)metric space
//! (point ids). Post-compositions are Lipschitz maps applied image-wise.
//! Injectivity is decided by exact bit equality of images.

use serde::{Deserialize, Serialize};

use crate::cube::{flip_coordinate, hamming_metric, Cube, CubePoint};
use crate::error::{Error, Result};

pub const TABLE_TOL: f64 = 1e-9;

/// Norm exponent q in [1, inf].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NormExponent {
    Finite(f64),
    Infinity,
}

impl NormExponent {
    pub fn new(q: f64) -> Result<Self> {
        if q.is_infinite() && q > 0.0 {
            return Ok(NormExponent::Infinity);
        }
        if !q.is_finite() || q < 1.0 {
            return Err(Error::InvalidParameter(format!(
                "norm exponent must satisfy q >= 1, got {q}"
            )));
        }
        Ok(NormExponent::Finite(q))
    }
}

impl Serialize for NormExponent {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            NormExponent::Finite(q) => s.serialize_f64(*q),
            NormExponent::Infinity => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for NormExponent {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(q) => NormExponent::new(q).map_err(serde::de::Error::custom),
            Raw::Text(t) if t == "inf" => Ok(NormExponent::Infinity),
            Raw::Text(t) => Err(serde::de::Error::custom(format!(
                "norm exponent must be a number or \"inf\", got {t:?}"
            ))),
        }
    }
}

/// Finite-dimensional l_q^m.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LpSpace {
    pub m: usize,
    pub q: NormExponent,
}

impl LpSpace {
    pub fn new(m: usize, q: NormExponent) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidParameter("l_q space needs m >= 1".into()));
        }
        Ok(LpSpace { m, q })
    }

    pub fn l1(m: usize) -> Self {
        LpSpace { m, q: NormExponent::Finite(1.0) }
    }

    pub fn l2(m: usize) -> Self {
        LpSpace { m, q: NormExponent::Finite(2.0) }
    }

    fn dist(&self, x: &[f64], y: &[f64]) -> f64 {
        match self.q {
            NormExponent::Infinity => x
                .iter()
                .zip(y)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max),
            NormExponent::Finite(q) if q == 1.0 => {
                x.iter().zip(y).map(|(a, b)| (a - b).abs()).sum()
            }
            NormExponent::Finite(q) if q == 2.0 => x
                .iter()
                .zip(y)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt(),
            NormExponent::Finite(q) => x
                .iter()
                .zip(y)
                .map(|(a, b)| (a - b).abs().powf(q))
                .sum::<f64>()
                .powf(1.0 / q),
        }
    }
}

/// Finite space given by a full distance table. `metric` demands strict
/// positivity off the diagonal; otherwise a pseudometric is accepted.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedSpace {
    dist: Vec<Vec<f64>>,
    metric: bool,
}

impl TabulatedSpace {
    pub fn new(dist: Vec<Vec<f64>>, metric: bool) -> Result<Self> {
        let k = dist.len();
        if k == 0 {
            return Err(Error::NotPseudometric("empty table".into()));
        }
        for (i, row) in dist.iter().enumerate() {
            if row.len() != k {
                return Err(Error::NotPseudometric(format!(
                    "row {i} has length {} in a {k}-point table",
                    row.len()
                )));
            }
            for (j, &d) in row.iter().enumerate() {
                if !d.is_finite() || d < 0.0 {
                    return Err(Error::NotPseudometric(format!(
                        "entry ({i},{j}) = {d} is not a finite nonnegative value"
                    )));
                }
                if (d - dist[j][i]).abs() > TABLE_TOL {
                    return Err(Error::NotPseudometric(format!(
                        "asymmetric at ({i},{j}): {d} vs {}",
                        dist[j][i]
                    )));
                }
            }
            if dist[i][i].abs() > TABLE_TOL {
                return Err(Error::NotPseudometric(format!(
                    "nonzero diagonal at {i}: {}",
                    dist[i][i]
                )));
            }
        }
        for i in 0..k {
            for j in 0..k {
                if metric && i != j && dist[i][j] <= 0.0 {
                    return Err(Error::NotPseudometric(format!(
                        "metric mode: zero distance between distinct points {i},{j}"
                    )));
                }
                for h in 0..k {
                    if dist[i][j] > dist[i][h] + dist[h][j] + TABLE_TOL {
                        return Err(Error::NotPseudometric(format!(
                            "triangle inequality fails for ({i},{h},{j})"
                        )));
                    }
                }
            }
        }
        Ok(TabulatedSpace { dist, metric })
    }

    pub fn size(&self) -> usize {
        self.dist.len()
    }

    pub fn is_metric(&self) -> bool {
        self.metric
    }

    pub fn table(&self) -> &Vec<Vec<f64>> {
        &self.dist
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Space {
    Lp(LpSpace),
    Table(TabulatedSpace),
}

/// A point of a `Space`: coordinates for l_q, an id for tables.
#[derive(Debug, Clone, PartialEq)]
pub enum Point {
    Coords(Vec<f64>),
    Id(usize),
}

impl Point {
    /// Exact bit equality; this is the injectivity convention.
    pub fn bit_equal(&self, other: &Point) -> bool {
        match (self, other) {
            (Point::Coords(a), Point::Coords(b)) => {
                a.len() == b.len()
                    && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
            }
            (Point::Id(a), Point::Id(b)) => a == b,
            _ => false,
        }
    }
}

impl Space {
    pub fn check_point(&self, x: &Point) -> Result<()> {
        match (self, x) {
            (Space::Lp(lp), Point::Coords(v)) => {
                if v.len() != lp.m {
                    return Err(Error::DimensionMismatch {
                        expected: lp.m as u32,
                        got: v.len() as u32,
                    });
                }
                if v.iter().any(|c| !c.is_finite()) {
                    return Err(Error::InvalidParameter(
                        "point has a non-finite coordinate".into(),
                    ));
                }
                Ok(())
            }
            (Space::Table(t), Point::Id(i)) => {
                if *i >= t.size() {
                    return Err(Error::UnknownPoint(format!(
                        "id {i} in a {}-point table",
                        t.size()
                    )));
                }
                Ok(())
            }
            _ => Err(Error::UnknownPoint(
                "point kind does not match the space kind".into(),
            )),
        }
    }

    pub fn distance(&self, x: &Point, y: &Point) -> Result<f64> {
        self.check_point(x)?;
        self.check_point(y)?;
        Ok(self.distance_unchecked(x, y))
    }

    pub(crate) fn distance_unchecked(&self, x: &Point, y: &Point) -> f64 {
        match (self, x, y) {
            (Space::Lp(lp), Point::Coords(a), Point::Coords(b)) => lp.dist(a, b),
            (Space::Table(t), Point::Id(i), Point::Id(j)) => t.dist[*i][*j],
            _ => unreachable!("points validated against space"),
        }
    }
}

/// Distance between two points of a space.
pub fn dist_point(space: &Space, x: &Point, y: &Point) -> Result<f64> {
    space.distance(x, y)
}

/// A map 2^n -> space, stored as a full image table in mask order.
#[derive(Debug, Clone)]
pub struct MapOnCube {
    cube: Cube,
    space: Space,
    images: Vec<Point>,
}

impl MapOnCube {
    pub fn new(cube: Cube, space: Space, images: Vec<Point>) -> Result<Self> {
        if images.len() as u64 != cube.vertex_count() {
            return Err(Error::DimensionMismatch {
                expected: cube.vertex_count() as u32,
                got: images.len() as u32,
            });
        }
        for p in &images {
            space.check_point(p)?;
        }
        Ok(MapOnCube { cube, space, images })
    }

    pub fn cube(&self) -> &Cube {
        &self.cube
    }

    pub fn dim(&self) -> u32 {
        self.cube.dim()
    }

    pub fn space(&self) -> &Space {
        &self.space
    }

    pub fn image(&self, e: &CubePoint) -> &Point {
        &self.images[e.mask() as usize]
    }

    pub fn image_by_mask(&self, mask: u64) -> &Point {
        &self.images[mask as usize]
    }

    pub fn images(&self) -> &[Point] {
        &self.images
    }

    /// rho^f(a,b) = d(f(a), f(b)).
    pub fn rho(&self, a: &CubePoint, b: &CubePoint) -> f64 {
        self.space
            .distance_unchecked(&self.images[a.mask() as usize], &self.images[b.mask() as usize])
    }
}

/// A Lipschitz map applied to images: identity, a diagonal operator on l_q
/// coordinates, a tabulated point-to-point association, or a composition
/// chain applied left to right.
#[derive(Debug, Clone)]
pub enum LipschitzMap {
    Identity,
    Diagonal { weights: Vec<f64> },
    Tabulated { domain: Vec<Point>, images: Vec<Point>, codomain: Space },
    Chain(Vec<LipschitzMap>),
}

impl LipschitzMap {
    /// Associates an image to each distinct point that `f` attains. Applying
    /// the result to any point that is not bit-equal to one of those is an
    /// error, not a silent extension.
    pub fn tabulated_on(f: &MapOnCube, images: Vec<Point>, codomain: Space) -> Result<Self> {
        let mut domain: Vec<Point> = Vec::new();
        let mut assoc: Vec<Point> = Vec::new();
        if images.len() != f.images.len() {
            return Err(Error::DimensionMismatch {
                expected: f.images.len() as u32,
                got: images.len() as u32,
            });
        }
        for (x, y) in f.images.iter().zip(&images) {
            codomain.check_point(y)?;
            match domain.iter().position(|d| d.bit_equal(x)) {
                Some(k) => {
                    if !assoc[k].bit_equal(y) {
                        return Err(Error::InvalidParameter(
                            "tabulated association is not well defined: one domain point, two images"
                                .into(),
                        ));
                    }
                }
                None => {
                    domain.push(x.clone());
                    assoc.push(y.clone());
                }
            }
        }
        Ok(LipschitzMap::Tabulated { domain, images: assoc, codomain })
    }

    pub fn apply(&self, domain: &Space, x: &Point) -> Result<Point> {
        match self {
            LipschitzMap::Identity => Ok(x.clone()),
            LipschitzMap::Diagonal { weights } => match (domain, x) {
                (Space::Lp(lp), Point::Coords(v)) => {
                    if weights.len() != lp.m || v.len() != lp.m {
                        return Err(Error::DimensionMismatch {
                            expected: lp.m as u32,
                            got: weights.len().max(v.len()) as u32,
                        });
                    }
                    Ok(Point::Coords(v.iter().zip(weights).map(|(a, w)| a * w).collect()))
                }
                _ => Err(Error::InvalidParameter(
                    "diagonal maps act on l_q coordinates only".into(),
                )),
            },
            LipschitzMap::Tabulated { domain: dom, images, .. } => {
                match dom.iter().position(|d| d.bit_equal(x)) {
                    Some(k) => Ok(images[k].clone()),
                    None => Err(Error::UnknownPoint(format!("{x:?}"))),
                }
            }
            LipschitzMap::Chain(parts) => {
                let mut cur = x.clone();
                let mut sp = domain.clone();
                for part in parts {
                    let next = part.apply(&sp, &cur)?;
                    sp = part.codomain(&sp)?;
                    cur = next;
                }
                Ok(cur)
            }
        }
    }

    pub fn codomain(&self, domain: &Space) -> Result<Space> {
        match self {
            LipschitzMap::Identity | LipschitzMap::Diagonal { .. } => Ok(domain.clone()),
            LipschitzMap::Tabulated { codomain, .. } => Ok(codomain.clone()),
            LipschitzMap::Chain(parts) => {
                let mut sp = domain.clone();
                for part in parts {
                    sp = part.codomain(&sp)?;
                }
                Ok(sp)
            }
        }
    }

    /// Upper bound on the Lipschitz constant over the given domain. For
    /// tabulated maps this is the exact supremum over the stored domain
    /// points; for chains it is the product of the stage bounds.
    pub fn lip_bound(&self, domain: &Space) -> Result<f64> {
        match self {
            LipschitzMap::Identity => Ok(1.0),
            LipschitzMap::Diagonal { weights } => {
                if weights.iter().any(|w| !w.is_finite()) {
                    return Err(Error::InvalidParameter("non-finite diagonal weight".into()));
                }
                Ok(weights.iter().fold(0.0f64, |m, w| m.max(w.abs())))
            }
            LipschitzMap::Tabulated { domain: dom, images, codomain } => {
                let mut lip = 0.0f64;
                for i in 0..dom.len() {
                    for j in i + 1..dom.len() {
                        let dx = domain.distance(&dom[i], &dom[j])?;
                        let dy = codomain.distance(&images[i], &images[j])?;
                        if dy > 0.0 {
                            lip = if dx > 0.0 { lip.max(dy / dx) } else { f64::INFINITY };
                        }
                    }
                }
                Ok(lip)
            }
            LipschitzMap::Chain(parts) => {
                let mut sp = domain.clone();
                let mut lip = 1.0;
                for part in parts {
                    lip *= part.lip_bound(&sp)?;
                    sp = part.codomain(&sp)?;
                }
                Ok(lip)
            }
        }
    }
}

/// F composed with f, as a new image table.
pub fn apply_map(big_f: &LipschitzMap, f: &MapOnCube) -> Result<MapOnCube> {
    let codomain = big_f.codomain(&f.space)?;
    let images = f
        .images
        .iter()
        .map(|x| big_f.apply(&f.space, x))
        .collect::<Result<Vec<_>>>()?;
    MapOnCube::new(f.cube, codomain, images)
}

/// A map together with its post-composition: rho_x pulls distances back
/// through f, rho_y through F o f.
#[derive(Debug, Clone)]
pub struct MapPair {
    f: MapOnCube,
    fy: MapOnCube,
    big_f: LipschitzMap,
    lip_f: f64,
    lip_big_f: f64,
}

impl MapPair {
    pub fn new(f: MapOnCube, big_f: &LipschitzMap) -> Result<Self> {
        let fy = apply_map(big_f, &f)?;
        let lip_f = lip_constant(&f);
        let lip_big_f = big_f.lip_bound(f.space())?;
        Ok(MapPair { f, fy, big_f: big_f.clone(), lip_f, lip_big_f })
    }

    pub fn identity_pair(f: MapOnCube) -> Result<Self> {
        Self::new(f, &LipschitzMap::Identity)
    }

    pub fn dim(&self) -> u32 {
        self.f.dim()
    }

    pub fn cube(&self) -> &Cube {
        self.f.cube()
    }

    pub fn inner(&self) -> &MapOnCube {
        &self.f
    }

    pub fn outer(&self) -> &MapOnCube {
        &self.fy
    }

    pub fn post_map(&self) -> &LipschitzMap {
        &self.big_f
    }

    pub fn lip_f(&self) -> f64 {
        self.lip_f
    }

    pub fn lip_big_f(&self) -> f64 {
        self.lip_big_f
    }

    pub fn rho_x(&self, a: &CubePoint, b: &CubePoint) -> f64 {
        self.f.rho(a, b)
    }

    pub fn rho_y(&self, a: &CubePoint, b: &CubePoint) -> f64 {
        self.fy.rho(a, b)
    }
}

/// Lip(f) over the normalized cube metric. Because the cube metric is a path
/// metric, the supremum over all pairs is attained on edges, so this is
/// n * max over (e, i) of d(f(e), f(d_i e)).
pub fn lip_constant(f: &MapOnCube) -> f64 {
    let n = f.dim();
    let mut worst = 0.0f64;
    for e in f.cube.points() {
        for i in 1..=n {
            let g = flip_coordinate(&e, i).unwrap();
            if g.mask() > e.mask() {
                worst = worst.max(f.rho(&e, &g));
            }
        }
    }
    n as f64 * worst
}

/// Lip(f) * Lip(f^{-1}); infinity when two vertices share a bit-identical
/// image or when distinct images sit at distance zero.
pub fn distortion(f: &MapOnCube) -> f64 {
    let count = f.cube.vertex_count();
    let mut expand = 0.0f64;
    let mut contract = 0.0f64;
    for a in 0..count {
        for b in a + 1..count {
            let pa = f.cube.point(a);
            let pb = f.cube.point(b);
            if f.image_by_mask(a).bit_equal(f.image_by_mask(b)) {
                return f64::INFINITY;
            }
            let rho = f.rho(&pa, &pb);
            let del = hamming_metric(&pa, &pb).unwrap();
            if rho == 0.0 {
                return f64::INFINITY;
            }
            expand = expand.max(rho / del);
            contract = contract.max(del / rho);
        }
    }
    expand * contract
}

/// Smallest/largest pair ratio rho/metric and, when they fit inside a factor
/// D^2, the geometric-mean scale a with (a/D) del <= rho <= a D del.
pub fn scaled_factor_bounds(f: &MapOnCube, big_d: f64) -> Option<f64> {
    if big_d < 1.0 {
        return None;
    }
    let count = f.cube.vertex_count();
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    for a in 0..count {
        for b in a + 1..count {
            let pa = f.cube.point(a);
            let pb = f.cube.point(b);
            let ratio = f.rho(&pa, &pb) / hamming_metric(&pa, &pb).unwrap();
            lo = lo.min(ratio);
            hi = hi.max(ratio);
        }
    }
    if lo <= 0.0 || !hi.is_finite() {
        return None;
    }
    let a = (lo * hi).sqrt();
    let slack = 1.0 + 1e-12;
    if hi <= a * big_d * slack && lo * slack >= a / big_d {
        Some(a)
    } else {
        None
    }
}

/// Pulls the metric of the target (optionally post-composed with F) back to
/// the vertex set, as a tabulated pseudometric indexed by masks.
pub fn pseudometric_pull(f: &MapOnCube, big_f: Option<&LipschitzMap>) -> Result<TabulatedSpace> {
    let g = match big_f {
        Some(map) => apply_map(map, f)?,
        None => f.clone(),
    };
    let k = g.cube.vertex_count() as usize;
    let mut dist = vec![vec![0.0f64; k]; k];
    for a in 0..k {
        for b in a + 1..k {
            let d = g.rho(&g.cube.point(a as u64), &g.cube.point(b as u64));
            dist[a][b] = d;
            dist[b][a] = d;
        }
    }
    TabulatedSpace::new(dist, false)
}

// ---- JSON map format ----
//
// {"n": 3, "space": {"kind": "lp", "m": 3, "q": 1.0}, "images": [[...], ...]}
// {"n": 2, "space": {"kind": "table", "dist": [[...], ...], "metric": false},
//  "images": [0, 1, 2, 3]}
//
// Vertices appear in mask order. Floats round-trip bit-exactly.

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind")]
enum SpaceJson {
    #[serde(rename = "lp")]
    Lp { m: usize, q: NormExponent },
    #[serde(rename = "table")]
    Table {
        dist: Vec<Vec<f64>>,
        #[serde(default)]
        metric: bool,
    },
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum ImagesJson {
    Ids(Vec<usize>),
    Coords(Vec<Vec<f64>>),
}

#[derive(Serialize, Deserialize)]
struct MapJson {
    n: u32,
    space: SpaceJson,
    images: ImagesJson,
}

pub fn map_to_json(f: &MapOnCube) -> Result<String> {
    let space = match &f.space {
        Space::Lp(lp) => SpaceJson::Lp { m: lp.m, q: lp.q },
        Space::Table(t) => SpaceJson::Table { dist: t.dist.clone(), metric: t.metric },
    };
    let images = match &f.space {
        Space::Lp(_) => ImagesJson::Coords(
            f.images
                .iter()
                .map(|p| match p {
                    Point::Coords(v) => v.clone(),
                    Point::Id(_) => unreachable!(),
                })
                .collect(),
        ),
        Space::Table(_) => ImagesJson::Ids(
            f.images
                .iter()
                .map(|p| match p {
                    Point::Id(i) => *i,
                    Point::Coords(_) => unreachable!(),
                })
                .collect(),
        ),
    };
    Ok(serde_json::to_string(&MapJson { n: f.dim(), space, images })?)
}

pub fn map_from_json(text: &str) -> Result<MapOnCube> {
    let raw: MapJson = serde_json::from_str(text)?;
    let cube = Cube::new(raw.n)?;
    let (space, images) = match (raw.space, raw.images) {
        (SpaceJson::Lp { m, q }, ImagesJson::Coords(rows)) => {
            let space = Space::Lp(LpSpace::new(m, q)?);
            (space, rows.into_iter().map(Point::Coords).collect())
        }
        (SpaceJson::Table { dist, metric }, ImagesJson::Ids(ids)) => {
            let space = Space::Table(TabulatedSpace::new(dist, metric)?);
            (space, ids.into_iter().map(Point::Id).collect::<Vec<_>>())
        }
        _ => {
            return Err(Error::InvalidParameter(
                "image kind does not match the space kind".into(),
            ))
        }
    };
    MapOnCube::new(cube, space, images)
}
