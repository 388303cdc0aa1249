//! Observation windows, cone covers and the special functions used by the
//! graph builders and the constants module.

use std::f64::consts::PI;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use libm::lgamma as ln_gamma;

use crate::error::{Error, Result};

/// Euclidean distance. Every builder and oracle goes through this function so
/// that edge lengths computed on different paths are bit-identical.
#[inline]
pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Volume of the d-dimensional unit ball, κ_d = π^{d/2} / Γ(d/2 + 1).
pub fn unit_ball_volume(d: usize) -> f64 {
    // κ_0 = 1, κ_1 = 2, κ_d = 2π/d · κ_{d-2}
    let mut k = if d % 2 == 0 { 1.0 } else { 2.0 };
    let mut j = if d % 2 == 0 { 2 } else { 3 };
    while j <= d {
        k *= 2.0 * PI / j as f64;
        j += 2;
    }
    k
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BodyKind {
    Ball { center: Vec<f64>, radius: f64 },
    Box { min: Vec<f64>, max: Vec<f64> },
}

/// A convex observation window: a Euclidean ball or an axis-aligned box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BodyKind", into = "BodyKind")]
pub struct ConvexBody {
    kind: BodyKind,
}

impl TryFrom<BodyKind> for ConvexBody {
    type Error = Error;

    fn try_from(kind: BodyKind) -> Result<Self> {
        match kind {
            BodyKind::Ball { center, radius } => ConvexBody::ball(center, radius),
            BodyKind::Box { min, max } => ConvexBody::cuboid(min, max),
        }
    }
}

impl From<ConvexBody> for BodyKind {
    fn from(b: ConvexBody) -> Self {
        b.kind
    }
}

impl ConvexBody {
    pub fn ball(center: Vec<f64>, radius: f64) -> Result<Self> {
        if center.is_empty() {
            return Err(Error::arg("ball needs dimension >= 1"));
        }
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::arg(format!("ball radius must be positive, got {radius}")));
        }
        if center.iter().any(|c| !c.is_finite()) {
            return Err(Error::arg("ball center must be finite"));
        }
        Ok(ConvexBody {
            kind: BodyKind::Ball { center, radius },
        })
    }

    /// Axis-aligned box `[min, max]`; requires `min < max` componentwise.
    pub fn cuboid(min: Vec<f64>, max: Vec<f64>) -> Result<Self> {
        if min.is_empty() || min.len() != max.len() {
            return Err(Error::arg("box corners must have equal, nonzero dimension"));
        }
        if min.iter().zip(&max).any(|(a, b)| !(a < b) || !a.is_finite() || !b.is_finite()) {
            return Err(Error::arg("box requires finite min < max componentwise"));
        }
        Ok(ConvexBody {
            kind: BodyKind::Box { min, max },
        })
    }

    /// The unit cube `[0,1]^d`.
    pub fn unit_cube(d: usize) -> Self {
        ConvexBody::cuboid(vec![0.0; d], vec![1.0; d]).expect("unit cube is valid")
    }

    /// The cube `[-1/2, 1/2]^d` of unit volume centred at the origin.
    pub fn centered_unit_cube(d: usize) -> Self {
        ConvexBody::cuboid(vec![-0.5; d], vec![0.5; d]).expect("centred cube is valid")
    }

    pub fn kind(&self) -> &BodyKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        match &self.kind {
            BodyKind::Ball { center, .. } => center.len(),
            BodyKind::Box { min, .. } => min.len(),
        }
    }

    pub fn volume(&self) -> f64 {
        match &self.kind {
            BodyKind::Ball { center, radius } => {
                unit_ball_volume(center.len()) * radius.powi(center.len() as i32)
            }
            BodyKind::Box { min, max } => min.iter().zip(max).map(|(a, b)| b - a).product(),
        }
    }

    pub fn diameter(&self) -> f64 {
        match &self.kind {
            BodyKind::Ball { radius, .. } => 2.0 * radius,
            BodyKind::Box { min, max } => dist(min, max),
        }
    }

    /// Closed-set membership.
    pub fn contains(&self, p: &[f64]) -> bool {
        match &self.kind {
            BodyKind::Ball { center, radius } => dist(center, p) <= *radius,
            BodyKind::Box { min, max } => p
                .iter()
                .zip(min.iter().zip(max))
                .all(|(x, (a, b))| *a <= *x && *x <= *b),
        }
    }

    /// The dilation `tH = {t y : y ∈ H}` about the origin.
    pub fn scale(&self, t: f64) -> Result<Self> {
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::arg(format!("scale factor must be positive, got {t}")));
        }
        match &self.kind {
            BodyKind::Ball { center, radius } => {
                ConvexBody::ball(center.iter().map(|c| c * t).collect(), radius * t)
            }
            BodyKind::Box { min, max } => ConvexBody::cuboid(
                min.iter().map(|c| c * t).collect(),
                max.iter().map(|c| c * t).collect(),
            ),
        }
    }

    pub fn bounding_box(&self) -> ConvexBody {
        match &self.kind {
            BodyKind::Ball { center, radius } => ConvexBody {
                kind: BodyKind::Box {
                    min: center.iter().map(|c| c - radius).collect(),
                    max: center.iter().map(|c| c + radius).collect(),
                },
            },
            BodyKind::Box { .. } => self.clone(),
        }
    }

    /// Lower and upper corners of the bounding box.
    pub fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        match self.bounding_box().kind {
            BodyKind::Box { min, max } => (min, max),
            BodyKind::Ball { .. } => unreachable!("bounding box is a box"),
        }
    }

    /// A ball `B(y0, δ)` contained in the body.
    pub fn interior_ball(&self) -> (Vec<f64>, f64) {
        match &self.kind {
            BodyKind::Ball { center, radius } => (center.clone(), *radius),
            BodyKind::Box { min, max } => {
                let c = min.iter().zip(max).map(|(a, b)| 0.5 * (a + b)).collect();
                let half = min
                    .iter()
                    .zip(max)
                    .map(|(a, b)| 0.5 * (b - a))
                    .fold(f64::INFINITY, f64::min);
                (c, half)
            }
        }
    }
}

const BETA_EPS: f64 = 1e-15;
const BETA_MAX_ITER: usize = 10_000;

/// Regularized incomplete beta function `I_x(a, b)`.
pub fn reg_inc_beta(x: f64, a: f64, b: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::arg(format!("incomplete beta: x = {x} outside [0,1]")));
    }
    if !(a > 0.0 && b > 0.0) || !a.is_finite() || !b.is_finite() {
        return Err(Error::arg(format!("incomplete beta: need a, b > 0, got ({a}, {b})")));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if x == 1.0 {
        return Ok(1.0);
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    // the continued fraction converges fast only below the mean
    let v = if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(x, a, b)? / a
    } else {
        1.0 - front * beta_cf(1.0 - x, b, a)? / b
    };
    Ok(v.clamp(0.0, 1.0))
}

/// Continued fraction for the incomplete beta function, modified Lentz.
fn beta_cf(x: f64, a: f64, b: f64) -> Result<f64> {
    const TINY: f64 = 1e-300;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=BETA_MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < BETA_EPS {
            return Ok(h);
        }
    }
    Err(Error::numeric(format!(
        "incomplete beta continued fraction did not converge for x={x}, a={a}, b={b}"
    )))
}

/// Volume of the spherical cap `{y ∈ B(0,r) : y_1 ≥ a}` divided by κ_d.
pub fn cap_fraction(r: f64, a: f64, d: usize) -> Result<f64> {
    if !(r > 0.0) || d == 0 {
        return Err(Error::arg(format!("cap_fraction: need r > 0 and d >= 1, got r={r}, d={d}")));
    }
    if a.abs() > r {
        return Err(Error::arg(format!("cap_fraction: |a| = {} exceeds r = {r}", a.abs())));
    }
    let rd = r.powi(d as i32);
    if a >= 0.0 {
        let x = (1.0 - (a * a) / (r * r)).clamp(0.0, 1.0);
        Ok(0.5 * rd * reg_inc_beta(x, (d as f64 + 1.0) / 2.0, 0.5)?)
    } else {
        Ok(rd - cap_fraction(r, -a, d)?)
    }
}

/// `|B(0,r1) ∩ B(x e_1, r2)| / κ_d`.
pub fn ball_intersection_fraction(x: f64, r1: f64, r2: f64, d: usize) -> Result<f64> {
    if !(r1 > 0.0 && r2 > 0.0) || x < 0.0 || d == 0 {
        return Err(Error::arg("ball_intersection_fraction: need x >= 0, radii > 0, d >= 1"));
    }
    if x >= r1 + r2 {
        return Ok(0.0);
    }
    if x <= (r1 - r2).abs() {
        return Ok(r1.min(r2).powi(d as i32));
    }
    let c1 = (x * x + r1 * r1 - r2 * r2) / (2.0 * x);
    let c2 = (x * x - r1 * r1 + r2 * r2) / (2.0 * x);
    // rounding can push |c| a hair past the radius
    let c1 = c1.clamp(-r1, r1);
    let c2 = c2.clamp(-r2, r2);
    Ok(cap_fraction(r1, c1, d)? + cap_fraction(r2, c2, d)?)
}

/// Angular slack on closed-cone membership.
pub const CONE_SLACK: f64 = 1e-12;

/// Closed circular cone `{y : angle(y - apex, axis) ≤ half_angle}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Cone {
    pub apex: Vec<f64>,
    pub axis: Vec<f64>,
    pub half_angle: f64,
}

impl Cone {
    pub fn new(apex: Vec<f64>, axis: Vec<f64>, half_angle: f64) -> Result<Self> {
        if apex.len() != axis.len() || apex.is_empty() {
            return Err(Error::arg("cone apex and axis dimensions differ"));
        }
        if !(half_angle > 0.0 && half_angle <= PI / 2.0) {
            return Err(Error::arg(format!("cone half angle {half_angle} outside (0, π/2]")));
        }
        let n = norm(&axis);
        if !(n > 0.0) {
            return Err(Error::arg("cone axis must be nonzero"));
        }
        let axis = axis.iter().map(|v| v / n).collect();
        Ok(Cone {
            apex,
            axis,
            half_angle,
        })
    }

    pub fn contains(&self, y: &[f64]) -> bool {
        let v: Vec<f64> = y.iter().zip(&self.apex).map(|(a, b)| a - b).collect();
        direction_in_cone(&v, &self.axis, self.half_angle)
    }
}

/// Whether the offset `v` lies in the closed cone with apex 0, unit `axis`
/// and the given half angle.
#[inline]
pub fn direction_in_cone(v: &[f64], axis: &[f64], half_angle: f64) -> bool {
    let n = norm(v);
    if n == 0.0 {
        return true;
    }
    let c = (dot(v, axis) / n).clamp(-1.0, 1.0);
    c.acos() <= half_angle + CONE_SLACK
}

pub const NARROW_HALF_ANGLE: f64 = PI / 12.0;
pub const WIDE_HALF_ANGLE: f64 = PI / 6.0;

/// Largest dimension for which [`cone_cover`] is available.
pub const MAX_CONE_DIM: usize = 4;

/// Cones with apex 0 and half angle π/12 covering ℝ^d, together with the
/// π/6 cones sharing their axes.
#[derive(Debug, Clone)]
pub struct ConeCover {
    dim: usize,
    axes: Vec<Vec<f64>>,
}

impl ConeCover {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.axes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.axes.is_empty()
    }

    pub fn axes(&self) -> &[Vec<f64>] {
        &self.axes
    }

    pub fn cones(&self) -> Vec<Cone> {
        self.family(NARROW_HALF_ANGLE)
    }

    pub fn widened(&self) -> Vec<Cone> {
        // in one dimension both families are the two closed half-lines
        let h = if self.dim == 1 { NARROW_HALF_ANGLE } else { WIDE_HALF_ANGLE };
        self.family(h)
    }

    fn family(&self, half_angle: f64) -> Vec<Cone> {
        self.axes
            .iter()
            .map(|a| Cone {
                apex: vec![0.0; self.dim],
                axis: a.clone(),
                half_angle,
            })
            .collect()
    }

    /// Whether the offset `v = y - x` lies in the widened cone `i` at `x`.
    #[inline]
    pub fn in_widened(&self, i: usize, v: &[f64]) -> bool {
        if self.dim == 1 {
            return v[0] == 0.0 || (v[0] > 0.0) == (self.axes[i][0] > 0.0);
        }
        direction_in_cone(v, &self.axes[i], WIDE_HALF_ANGLE)
    }

    /// Smallest angle between `v` and any axis.
    pub fn min_angle(&self, v: &[f64]) -> f64 {
        let n = norm(v);
        self.axes
            .iter()
            .map(|a| (dot(v, a) / n).clamp(-1.0, 1.0).acos())
            .fold(f64::INFINITY, f64::min)
    }
}

/// Deterministic cone cover of ℝ^d by closed cones of half angle π/12.
///
/// d = 1 gives the two half-lines, d = 2 uses 24 equally spaced axes, and
/// d ∈ {3, 4} uses a greedy cover of a grid on the faces of the cube
/// `[-1,1]^d`. The grid spacing `h` (as an angle) is subtracted from the
/// greedy radius, so every direction is within π/12 of some axis.
pub fn cone_cover(d: usize) -> Result<&'static ConeCover> {
    static COVERS: [OnceLock<ConeCover>; MAX_CONE_DIM] =
        [OnceLock::new(), OnceLock::new(), OnceLock::new(), OnceLock::new()];
    if d == 0 || d > MAX_CONE_DIM {
        return Err(Error::arg(format!(
            "cone covers are available for 1 <= d <= {MAX_CONE_DIM}, got {d}"
        )));
    }
    Ok(COVERS[d - 1].get_or_init(|| build_cover(d)))
}

fn build_cover(d: usize) -> ConeCover {
    let axes = match d {
        1 => vec![vec![1.0], vec![-1.0]],
        2 => (0..24)
            .map(|k| {
                let a = 2.0 * PI * k as f64 / 24.0;
                vec![a.cos(), a.sin()]
            })
            .collect(),
        _ => greedy_cube_cover(d),
    };
    ConeCover { dim: d, axes }
}

fn greedy_cube_cover(d: usize) -> Vec<Vec<f64>> {
    let cells: usize = if d == 3 { 48 } else { 24 };
    let step = 2.0 / cells as f64;
    // any point of a face is within this distance of a cell centre; for
    // points at norm >= 1 the angle is at most asin(distance)
    let h = (0.5 * step * ((d - 1) as f64).sqrt()).asin();
    let radius = NARROW_HALF_ANGLE - h - 1e-9;
    let cos_radius = radius.cos();

    let mut dirs: Vec<Vec<f64>> = Vec::new();
    let per_face = cells.pow((d - 1) as u32);
    for axis in 0..d {
        for sign in [1.0, -1.0] {
            for idx in 0..per_face {
                let mut rem = idx;
                let mut p = Vec::with_capacity(d);
                for j in 0..d {
                    if j == axis {
                        p.push(sign);
                    } else {
                        let c = rem % cells;
                        rem /= cells;
                        p.push(-1.0 + (c as f64 + 0.5) * step);
                    }
                }
                let n = norm(&p);
                dirs.push(p.into_iter().map(|v| v / n).collect());
            }
        }
    }

    let mut covered = vec![false; dirs.len()];
    let mut axes = Vec::new();
    for i in 0..dirs.len() {
        if covered[i] {
            continue;
        }
        let axis = dirs[i].clone();
        for (j, dir) in dirs.iter().enumerate() {
            if !covered[j] && dot(dir, &axis) >= cos_radius {
                covered[j] = true;
            }
        }
        axes.push(axis);
    }
    axes
}
