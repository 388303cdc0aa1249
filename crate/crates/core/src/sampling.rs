//! Seeded sampling of homogeneous (marked) Poisson point processes.

use std::io::{BufRead, Write};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{BodyKind, ConvexBody};

/// Maximum number of redraws of a single point that violates genericity.
const MAX_REDRAWS: usize = 16;

/// Identifies an independent random stream: ChaCha8 keyed by `base_seed`,
/// with `stream_id` selecting the ChaCha stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngStream {
    pub base_seed: u64,
    pub stream_id: u64,
}

impl RngStream {
    pub fn new(base_seed: u64, stream_id: u64) -> Self {
        RngStream {
            base_seed,
            stream_id,
        }
    }

    /// Stream id layout: bits 56..64 task tag, 32..56 grid index,
    /// 0..32 replicate index.
    pub fn derive(base_seed: u64, tag: u8, grid_index: usize, replicate: usize) -> Self {
        let id = ((tag as u64) << 56)
            | (((grid_index as u64) & 0x00ff_ffff) << 32)
            | (replicate as u64 & 0xffff_ffff);
        RngStream::new(base_seed, id)
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.base_seed);
        rng.set_stream(self.stream_id);
        rng
    }
}

/// A point of ℝ^d with an optional mark in [0,1].
#[derive(Debug, Clone, PartialEq)]
pub struct MarkedPoint {
    pub position: Vec<f64>,
    pub mark: Option<f64>,
}

impl MarkedPoint {
    pub fn new(position: Vec<f64>, mark: Option<f64>) -> Self {
        MarkedPoint { position, mark }
    }

    pub fn unmarked(position: Vec<f64>) -> Self {
        MarkedPoint {
            position,
            mark: None,
        }
    }
}

/// A finite point configuration inside an observation window.
///
/// Positions are stored row-major in one flat buffer. Positions are pairwise
/// distinct and, if marked, marks are pairwise distinct. Distance ties are
/// detected by the graph builders at query time.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkedPointConfig {
    dim: usize,
    coords: Vec<f64>,
    marks: Option<Vec<f64>>,
    body: ConvexBody,
    seed: Option<RngStream>,
}

impl MarkedPointConfig {
    pub fn empty(body: ConvexBody, marked: bool) -> Self {
        MarkedPointConfig {
            dim: body.dim(),
            coords: Vec::new(),
            marks: marked.then(Vec::new),
            body,
            seed: None,
        }
    }

    /// Builds a configuration from explicit points, validating containment
    /// and genericity.
    pub fn from_points(body: ConvexBody, points: &[MarkedPoint]) -> Result<Self> {
        let marked = points.first().map(|p| p.mark.is_some()).unwrap_or(false);
        let mut cfg = MarkedPointConfig::empty(body, marked);
        for p in points {
            cfg.push_checked(&p.position, p.mark)?;
        }
        Ok(cfg)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn is_marked(&self) -> bool {
        self.marks.is_some()
    }

    pub fn body(&self) -> &ConvexBody {
        &self.body
    }

    pub fn seed_record(&self) -> Option<RngStream> {
        self.seed
    }

    #[inline]
    pub fn position(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    #[inline]
    pub fn mark(&self, i: usize) -> Option<f64> {
        self.marks.as_ref().map(|m| m[i])
    }

    pub fn marks(&self) -> Option<&[f64]> {
        self.marks.as_deref()
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn point(&self, i: usize) -> MarkedPoint {
        MarkedPoint::new(self.position(i).to_vec(), self.mark(i))
    }

    pub fn points(&self) -> impl Iterator<Item = MarkedPoint> + '_ {
        (0..self.len()).map(|i| self.point(i))
    }

    /// Returns a new configuration with the point appended.
    pub fn add_point(&self, position: &[f64], mark: Option<f64>) -> Result<Self> {
        let mut next = self.clone();
        next.push_checked(position, mark)?;
        Ok(next)
    }

    /// Returns a new configuration without its last point.
    pub fn remove_last(&self) -> Self {
        let mut next = self.clone();
        if !next.is_empty() {
            next.coords.truncate(next.coords.len() - next.dim);
            if let Some(m) = next.marks.as_mut() {
                m.pop();
            }
        }
        next
    }

    /// Keeps only the points for which `keep(i)` holds.
    pub fn filter(&self, keep: impl Fn(usize) -> bool) -> Self {
        let mut out = MarkedPointConfig::empty(self.body.clone(), self.is_marked());
        out.seed = self.seed;
        for i in (0..self.len()).filter(|&i| keep(i)) {
            out.coords.extend_from_slice(self.position(i));
            if let (Some(m), Some(v)) = (out.marks.as_mut(), self.mark(i)) {
                m.push(v);
            }
        }
        out
    }

    /// Union of two configurations on the same window.
    pub fn concat(&self, other: &MarkedPointConfig) -> Result<Self> {
        if self.body != other.body || self.is_marked() != other.is_marked() {
            return Err(Error::arg("configurations differ in window or marking"));
        }
        let mut out = self.clone();
        out.coords.extend_from_slice(&other.coords);
        if let (Some(a), Some(b)) = (out.marks.as_mut(), other.marks.as_ref()) {
            a.extend_from_slice(b);
        }
        if !duplicate_indices(&out).is_empty() {
            return Err(Error::degenerate("union has duplicate positions or marks"));
        }
        Ok(out)
    }

    fn push_checked(&mut self, position: &[f64], mark: Option<f64>) -> Result<()> {
        if position.len() != self.dim {
            return Err(Error::arg(format!(
                "point has dimension {}, window has {}",
                position.len(),
                self.dim
            )));
        }
        if position.iter().any(|v| !v.is_finite()) {
            return Err(Error::arg("point coordinates must be finite"));
        }
        if !self.body.contains(position) {
            return Err(Error::arg("point lies outside the observation window"));
        }
        match (&self.marks, mark) {
            (Some(_), None) => return Err(Error::arg("configuration is marked, point is not")),
            (None, Some(_)) => return Err(Error::arg("configuration is unmarked, point has a mark")),
            (Some(marks), Some(m)) => {
                if !(0.0..=1.0).contains(&m) {
                    return Err(Error::arg(format!("mark {m} outside [0,1]")));
                }
                if marks.contains(&m) {
                    return Err(Error::degenerate(format!("duplicate mark {m}")));
                }
            }
            (None, None) => {}
        }
        if (0..self.len()).any(|i| self.position(i) == position) {
            return Err(Error::degenerate("duplicate position"));
        }
        self.coords.extend_from_slice(position);
        if let (Some(marks), Some(m)) = (self.marks.as_mut(), mark) {
            marks.push(m);
        }
        Ok(())
    }

    /// Writes the plain-text format: a header `d marked n seed stream`, then
    /// one point per line with 17 significant digits.
    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        let (seed, stream) = self
            .seed
            .map(|s| (s.base_seed, s.stream_id))
            .unwrap_or((0, 0));
        writeln!(
            w,
            "{} {} {} {} {}",
            self.dim,
            u8::from(self.is_marked()),
            self.len(),
            seed,
            stream
        )?;
        for i in 0..self.len() {
            let mut line: Vec<String> = self.position(i).iter().map(|v| format!("{v:.16e}")).collect();
            if let Some(m) = self.mark(i) {
                line.push(format!("{m:.16e}"));
            }
            writeln!(w, "{}", line.join(" "))?;
        }
        Ok(())
    }

    /// Parses the plain-text format; the window is not part of the format and
    /// must be supplied.
    pub fn read_text<R: BufRead>(r: R, body: ConvexBody) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("missing header".into()))??;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 5 {
            return Err(Error::Parse(format!("bad header {header:?}")));
        }
        let parse_u = |s: &str| -> Result<u64> {
            s.parse::<u64>()
                .map_err(|e| Error::Parse(format!("{s:?}: {e}")))
        };
        let d = parse_u(fields[0])? as usize;
        let marked = parse_u(fields[1])? == 1;
        let n = parse_u(fields[2])? as usize;
        let seed = parse_u(fields[3])?;
        let stream = parse_u(fields[4])?;
        if d != body.dim() {
            return Err(Error::Parse(format!("dimension {d} does not match window")));
        }
        let mut cfg = MarkedPointConfig::empty(body, marked);
        for _ in 0..n {
            let line = lines
                .next()
                .ok_or_else(|| Error::Parse("truncated point list".into()))??;
            let vals = line
                .split_whitespace()
                .map(|s| s.parse::<f64>().map_err(|e| Error::Parse(format!("{s:?}: {e}"))))
                .collect::<Result<Vec<f64>>>()?;
            let want = d + usize::from(marked);
            if vals.len() != want {
                return Err(Error::Parse(format!("expected {want} values, got {}", vals.len())));
            }
            let mark = marked.then(|| vals[d]);
            cfg.push_checked(&vals[..d], mark)?;
        }
        if seed != 0 || stream != 0 {
            cfg.seed = Some(RngStream::new(seed, stream));
        }
        Ok(cfg)
    }
}

/// Draws a point uniformly from the window.
pub fn sample_uniform<R: Rng + ?Sized>(body: &ConvexBody, rng: &mut R) -> Vec<f64> {
    match body.kind() {
        BodyKind::Box { min, max } => min
            .iter()
            .zip(max)
            .map(|(a, b)| a + (b - a) * rng.random::<f64>())
            .collect(),
        BodyKind::Ball { center, radius } => {
            let d = center.len();
            loop {
                let g: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
                let n = g.iter().map(|v| v * v).sum::<f64>().sqrt();
                if n == 0.0 {
                    continue;
                }
                let r = radius * rng.random::<f64>().powf(1.0 / d as f64);
                let p: Vec<f64> = center.iter().zip(&g).map(|(c, v)| c + r * v / n).collect();
                // rounding can place a point a hair outside the closed ball
                if body.contains(&p) {
                    return p;
                }
            }
        }
    }
}

/// Draws a Poisson(mean) count.
pub fn sample_count<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> usize {
    if mean <= 0.0 {
        return 0;
    }
    let p = Poisson::new(mean).expect("positive finite mean");
    p.sample(rng) as usize
}

/// Poisson process on `body` with the given intensity. If `marks` is
/// `Some((lo, hi))` every point carries an independent uniform mark in
/// `[lo, hi)`; the count then has mean `intensity · |body| · (hi - lo)`.
pub fn sample_poisson_with_marks<R: Rng + ?Sized>(
    body: &ConvexBody,
    intensity: f64,
    marks: Option<(f64, f64)>,
    rng: &mut R,
) -> Result<MarkedPointConfig> {
    if !(intensity >= 0.0) || !intensity.is_finite() {
        return Err(Error::arg(format!("intensity must be nonnegative, got {intensity}")));
    }
    let mark_len = marks.map(|(lo, hi)| hi - lo).unwrap_or(1.0);
    let mean = intensity * body.volume() * mark_len;
    let n = sample_count(mean, rng);
    let d = body.dim();
    let mut coords = Vec::with_capacity(n * d);
    let mut mk = marks.map(|_| Vec::with_capacity(n));
    for _ in 0..n {
        coords.extend(sample_uniform(body, rng));
        if let (Some(v), Some((lo, hi))) = (mk.as_mut(), marks) {
            v.push(lo + (hi - lo) * rng.random::<f64>());
        }
    }
    let mut cfg = MarkedPointConfig {
        dim: d,
        coords,
        marks: mk,
        body: body.clone(),
        seed: None,
    };
    resolve_duplicates(&mut cfg, marks, rng)?;
    Ok(cfg)
}

/// Samples a homogeneous Poisson process on `body`; marks, when requested,
/// are i.i.d. uniform on [0,1].
pub fn sample_poisson(
    body: &ConvexBody,
    intensity: f64,
    marked: bool,
    stream: RngStream,
) -> Result<MarkedPointConfig> {
    let mut rng = stream.rng();
    let mut cfg = sample_poisson_with_marks(body, intensity, marked.then_some((0.0, 1.0)), &mut rng)?;
    cfg.seed = Some(stream);
    Ok(cfg)
}

/// Redraws points with a duplicated position or mark.
fn resolve_duplicates<R: Rng + ?Sized>(
    cfg: &mut MarkedPointConfig,
    marks: Option<(f64, f64)>,
    rng: &mut R,
) -> Result<()> {
    for _ in 0..=MAX_REDRAWS {
        let bad = duplicate_indices(cfg);
        if bad.is_empty() {
            return Ok(());
        }
        let d = cfg.dim;
        for i in bad {
            let p = sample_uniform(&cfg.body, rng);
            cfg.coords[i * d..(i + 1) * d].copy_from_slice(&p);
            if let (Some(v), Some((lo, hi))) = (cfg.marks.as_mut(), marks) {
                v[i] = lo + (hi - lo) * rng.random::<f64>();
            }
        }
    }
    Err(Error::degenerate(format!(
        "could not resolve duplicate points after {MAX_REDRAWS} redraws"
    )))
}

/// Indices (all but the first of each group) of duplicated positions or marks.
fn duplicate_indices(cfg: &MarkedPointConfig) -> Vec<usize> {
    let n = cfg.len();
    let mut bad = Vec::new();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| {
        cfg.position(a)
            .partial_cmp(cfg.position(b))
            .expect("finite coordinates")
    });
    for w in idx.windows(2) {
        if cfg.position(w[0]) == cfg.position(w[1]) {
            bad.push(w[1]);
        }
    }
    if let Some(m) = &cfg.marks {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.sort_by(|&a, &b| m[a].total_cmp(&m[b]));
        for w in idx.windows(2) {
            if m[w[0]] == m[w[1]] {
                bad.push(w[1]);
            }
        }
    }
    bad.sort_unstable();
    bad.dedup();
    bad
}

/// Largest moment order covered by the Stirling table.
pub const MAX_MOMENT_ORDER: usize = 30;

fn stirling2_row(m: usize) -> Vec<f64> {
    // S(n, k) = k S(n-1, k) + S(n-1, k-1)
    let mut row = vec![0.0; m + 1];
    row[0] = 1.0;
    for n in 1..=m {
        for k in (1..=n).rev() {
            row[k] = k as f64 * row[k] + row[k - 1];
        }
        row[0] = 0.0;
    }
    row
}

/// Bell number `B_m = Σ_i S(m, i)`.
pub fn bell_number(m: usize) -> f64 {
    stirling2_row(m).iter().sum()
}

/// `E[Z^m]` for `Z ~ Poisson(lambda)`, as `Σ_{i=1}^m S(m,i) λ^i`.
pub fn poisson_raw_moment(lambda: f64, m: usize) -> Result<f64> {
    if m == 0 || m > MAX_MOMENT_ORDER {
        return Err(Error::arg(format!(
            "moment order must be in 1..={MAX_MOMENT_ORDER}, got {m}"
        )));
    }
    if !(lambda >= 0.0) {
        return Err(Error::arg(format!("lambda must be nonnegative, got {lambda}")));
    }
    let row = stirling2_row(m);
    Ok((1..=m).map(|i| row[i] * lambda.powi(i as i32)).sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_square() -> ConvexBody {
        ConvexBody::unit_cube(2)
    }

    #[test]
    fn zero_intensity_is_empty() {
        let cfg = sample_poisson(&unit_square(), 0.0, true, RngStream::new(1, 0)).unwrap();
        assert!(cfg.is_empty());
        assert!(cfg.is_marked());
    }

    #[test]
    fn same_stream_same_points() {
        let b = ConvexBody::ball(vec![0.0, 0.0, 0.0], 2.0).unwrap();
        let s = RngStream::new(99, 7);
        let a = sample_poisson(&b, 5.0, true, s).unwrap();
        let c = sample_poisson(&b, 5.0, true, s).unwrap();
        assert_eq!(a, c);
        let other = sample_poisson(&b, 5.0, true, RngStream::new(99, 8)).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn points_lie_in_window() {
        let b = ConvexBody::ball(vec![1.0, -1.0], 0.5).unwrap();
        let cfg = sample_poisson(&b, 200.0, false, RngStream::new(3, 3)).unwrap();
        assert!(cfg.len() > 50);
        assert!((0..cfg.len()).all(|i| b.contains(cfg.position(i))));
    }

    #[test]
    fn add_and_remove() {
        let body = unit_square();
        let empty = MarkedPointConfig::empty(body.clone(), true);
        let one = empty.add_point(&[0.5, 0.5], Some(0.3)).unwrap();
        assert_eq!(one.len(), 1);
        assert!(empty.is_empty());
        let two = one.add_point(&[0.1, 0.2], Some(0.6)).unwrap();
        assert!(matches!(
            two.add_point(&[0.5, 0.5], Some(0.9)),
            Err(Error::DegenerateInput(_))
        ));
        assert!(matches!(
            two.add_point(&[0.7, 0.5], Some(0.3)),
            Err(Error::DegenerateInput(_))
        ));
        assert!(two.add_point(&[1.5, 0.5], Some(0.1)).is_err());
        assert_eq!(two.remove_last(), one);
    }

    #[test]
    fn text_round_trip() {
        let body = ConvexBody::ball(vec![0.0, 0.0], 3.0).unwrap();
        let cfg = sample_poisson(&body, 2.0, true, RngStream::new(12, 34)).unwrap();
        let mut buf = Vec::new();
        cfg.write_text(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(&format!("2 1 {} 12 34\n", cfg.len())));
        let back = MarkedPointConfig::read_text(&buf[..], body).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn read_rejects_bad_input() {
        let body = unit_square();
        assert!(MarkedPointConfig::read_text(&b"2 0 2 0 0\n0.1 0.2\n"[..], body.clone()).is_err());
        assert!(MarkedPointConfig::read_text(&b"3 0 0 0 0\n"[..], body.clone()).is_err());
        assert!(MarkedPointConfig::read_text(&b"2 0 1 0 0\n0.1\n"[..], body).is_err());
    }

    #[test]
    fn moments_small_orders() {
        for lam in [0.0, 0.3, 2.5, 10.0] {
            assert_eq!(poisson_raw_moment(lam, 1).unwrap(), lam);
            assert!((poisson_raw_moment(lam, 2).unwrap() - (lam + lam * lam)).abs() < 1e-12);
        }
        // E Z^3 = λ^3 + 3λ^2 + λ
        let l = 1.7f64;
        let expect = l.powi(3) + 3.0 * l * l + l;
        assert!((poisson_raw_moment(l, 3).unwrap() - expect).abs() < 1e-12);
        assert!(poisson_raw_moment(1.0, 0).is_err());
        assert!(poisson_raw_moment(1.0, 31).is_err());
    }

    #[test]
    fn bell_numbers() {
        let known = [1.0, 2.0, 5.0, 15.0, 52.0, 203.0, 877.0, 4140.0];
        for (m, b) in known.iter().enumerate() {
            assert_eq!(bell_number(m + 1), *b);
        }
        // E Z^m at λ = 1 is the Bell number
        assert_eq!(poisson_raw_moment(1.0, 6).unwrap(), 203.0);
    }

    #[test]
    fn moment_bound_holds() {
        for m in 1..=8 {
            let c = bell_number(m).powf(1.0 / m as f64);
            for lam in [0.1f64, 1.0, 10.0] {
                let lhs = poisson_raw_moment(lam, m).unwrap().powf(1.0 / m as f64);
                let rhs = c * lam.max(lam.powf(1.0 / m as f64));
                assert!(lhs <= rhs * (1.0 + 1e-12), "m={m} λ={lam}: {lhs} > {rhs}");
            }
        }
    }
}
