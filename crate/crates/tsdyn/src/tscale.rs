//! Finite-horizon time scales.
//!
//! A [`TimeScale`] is an ordered list of closed dense intervals and isolated
//! points. The working horizon `[t_min, t_max]` stands in for a scale that is
//! unbounded above. Grids, grid functions and Δ-integration live here too.

use std::sync::Arc;

use thiserror::Error;

/// Default absolute tolerance for membership tests.
pub const DEFAULT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScaleError {
    #[error("point {0} is not in the time scale")]
    NotInScale(f64),
    #[error("point {0} lies on the edge of the working horizon")]
    HorizonExceeded(f64),
    #[error("reversed bounds: {0} > {1}")]
    ReversedBounds(f64, f64),
    #[error("time scale has no points in range")]
    DegenerateScale,
    #[error("invalid segment list: {0}")]
    InvalidSegments(String),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Segment {
    Dense { a: f64, b: f64 },
    Point(f64),
}

impl Segment {
    pub fn start(&self) -> f64 {
        match *self {
            Segment::Dense { a, .. } => a,
            Segment::Point(p) => p,
        }
    }

    pub fn end(&self) -> f64 {
        match *self {
            Segment::Dense { b, .. } => b,
            Segment::Point(p) => p,
        }
    }
}

/// Position of a located point inside its segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Loc {
    Interior,
    Left,
    Right,
    Isolated,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Located {
    pub seg: usize,
    /// The query snapped onto the segment endpoint when within tolerance.
    pub t: f64,
    pub loc: Loc,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeScale {
    segments: Vec<Segment>,
    tol: f64,
}

impl TimeScale {
    pub fn new(segments: Vec<Segment>) -> Result<Self, ScaleError> {
        if segments.is_empty() {
            return Err(ScaleError::DegenerateScale);
        }
        for (i, seg) in segments.iter().enumerate() {
            match *seg {
                Segment::Dense { a, b } => {
                    if !(a.is_finite() && b.is_finite()) || a >= b {
                        return Err(ScaleError::InvalidSegments(format!(
                            "interval [{a}, {b}] must satisfy a < b"
                        )));
                    }
                }
                Segment::Point(p) => {
                    if !p.is_finite() {
                        return Err(ScaleError::InvalidSegments(format!("point {p} is not finite")));
                    }
                }
            }
            if i > 0 && segments[i - 1].end() >= seg.start() {
                return Err(ScaleError::InvalidSegments(format!(
                    "segments overlap or are out of order near {}",
                    seg.start()
                )));
            }
        }
        Ok(TimeScale { segments, tol: DEFAULT_TOL })
    }

    /// Sorts the segments first; still rejects overlaps.
    pub fn from_unsorted(mut segments: Vec<Segment>) -> Result<Self, ScaleError> {
        segments.sort_by(|x, y| x.start().total_cmp(&y.start()));
        Self::new(segments)
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn t_min(&self) -> f64 {
        self.segments[0].start()
    }

    pub fn t_max(&self) -> f64 {
        self.segments[self.segments.len() - 1].end()
    }

    pub fn find(&self, t: f64) -> Option<Located> {
        if !t.is_finite() {
            return None;
        }
        let tol = self.tol;
        let idx = self.segments.partition_point(|s| s.start() <= t + tol);
        if idx == 0 {
            return None;
        }
        let seg = idx - 1;
        match self.segments[seg] {
            Segment::Point(p) => {
                if (t - p).abs() <= tol {
                    Some(Located { seg, t: p, loc: Loc::Isolated })
                } else {
                    None
                }
            }
            Segment::Dense { a, b } => {
                if (t - b).abs() <= tol {
                    Some(Located { seg, t: b, loc: Loc::Right })
                } else if (t - a).abs() <= tol {
                    Some(Located { seg, t: a, loc: Loc::Left })
                } else if t > a && t < b {
                    Some(Located { seg, t, loc: Loc::Interior })
                } else {
                    None
                }
            }
        }
    }

    pub fn contains(&self, t: f64) -> bool {
        self.find(t).is_some()
    }

    fn locate(&self, t: f64) -> Result<Located, ScaleError> {
        self.find(t).ok_or(ScaleError::NotInScale(t))
    }

    pub fn sigma(&self, t: f64) -> Result<f64, ScaleError> {
        let l = self.locate(t)?;
        match l.loc {
            Loc::Interior | Loc::Left => Ok(l.t),
            Loc::Right | Loc::Isolated => self
                .segments
                .get(l.seg + 1)
                .map(|s| s.start())
                .ok_or(ScaleError::HorizonExceeded(t)),
        }
    }

    pub fn rho(&self, t: f64) -> Result<f64, ScaleError> {
        let l = self.locate(t)?;
        match l.loc {
            Loc::Interior | Loc::Right => Ok(l.t),
            Loc::Left | Loc::Isolated => {
                if l.seg == 0 {
                    Err(ScaleError::HorizonExceeded(t))
                } else {
                    Ok(self.segments[l.seg - 1].end())
                }
            }
        }
    }

    pub fn mu(&self, t: f64) -> Result<f64, ScaleError> {
        let l = self.locate(t)?;
        match l.loc {
            Loc::Interior | Loc::Left => Ok(0.0),
            Loc::Right | Loc::Isolated => self
                .segments
                .get(l.seg + 1)
                .map(|s| s.start() - l.t)
                .ok_or(ScaleError::HorizonExceeded(t)),
        }
    }

    /// True at points with a successor and positive graininess. The last
    /// point of the horizon is reported as not right-scattered.
    pub fn is_right_scattered(&self, t: f64) -> Result<bool, ScaleError> {
        let l = self.locate(t)?;
        Ok(matches!(l.loc, Loc::Right | Loc::Isolated) && l.seg + 1 < self.segments.len())
    }

    /// Largest scale point `<= t`, or `None` below `t_min`.
    pub fn project_down(&self, t: f64) -> Option<f64> {
        if let Some(l) = self.find(t) {
            return Some(l.t);
        }
        let idx = self.segments.partition_point(|s| s.start() <= t);
        if idx == 0 {
            None
        } else {
            Some(self.segments[idx - 1].end())
        }
    }

    /// Intersection with `[lo, hi]`.
    pub fn restrict(&self, lo: f64, hi: f64) -> Result<TimeScale, ScaleError> {
        let mut out = Vec::new();
        for seg in &self.segments {
            match *seg {
                Segment::Point(p) => {
                    if p >= lo - self.tol && p <= hi + self.tol {
                        out.push(Segment::Point(p));
                    }
                }
                Segment::Dense { a, b } => {
                    let a2 = a.max(lo);
                    let b2 = b.min(hi);
                    if b2 - a2 > self.tol {
                        out.push(Segment::Dense { a: a2, b: b2 });
                    } else if b2 >= a2 - self.tol {
                        out.push(Segment::Point(a2.min(b2).max(a)));
                    }
                }
            }
        }
        if out.is_empty() {
            return Err(ScaleError::DegenerateScale);
        }
        Ok(TimeScale { segments: out, tol: self.tol })
    }

    /// Segment indices whose span meets `[s, t]`.
    fn seg_range(&self, s: f64, t: f64) -> std::ops::Range<usize> {
        let lo = self.segments.partition_point(|x| x.end() < s - self.tol);
        let hi = self.segments.partition_point(|x| x.start() <= t + self.tol);
        lo..hi.max(lo)
    }

    /// Right-scattered points in `[s, t)` with their graininess.
    pub fn scattered_points(&self, s: f64, t: f64) -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        for i in self.seg_range(s, t) {
            let p = self.segments[i].end();
            if i + 1 < self.segments.len() && p >= s - self.tol && p < t - self.tol {
                out.push((p, self.segments[i + 1].start() - p));
            }
        }
        out
    }

    /// Dense pieces of `[s, t]`.
    pub fn dense_pieces(&self, s: f64, t: f64) -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        for i in self.seg_range(s, t) {
            if let Segment::Dense { a, b } = self.segments[i] {
                let lo = a.max(s);
                let hi = b.min(t);
                if hi > lo {
                    out.push((lo, hi));
                }
            }
        }
        out
    }

    /// Δ-integral of a pointwise function: graininess-weighted sum over the
    /// right-scattered points of `[s, t)` plus composite 5-point
    /// Gauss–Legendre on the dense parts, panels no longer than `h_max`.
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F, s: f64, t: f64, h_max: f64) -> Result<f64, ScaleError> {
        let s = self.locate(s)?.t;
        let t = self.locate(t)?.t;
        if t < s {
            return Err(ScaleError::ReversedBounds(s, t));
        }
        let mut sum = 0.0;
        for (p, mu) in self.scattered_points(s, t) {
            sum += mu * f(p);
        }
        for (lo, hi) in self.dense_pieces(s, t) {
            sum += gauss_composite(&f, lo, hi, h_max);
        }
        Ok(sum)
    }

    /// Parses the text description format: `interval a b`, `point p` and
    /// `generator <name> <params> [from x] upto T` lines, `#` comments.
    pub fn parse_description(src: &str) -> Result<TimeScale, ScaleError> {
        let mut segs = Vec::new();
        let mut tol = DEFAULT_TOL;
        for (ln, raw) in src.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| ScaleError::Parse { line: ln + 1, msg };
            let words: Vec<&str> = line.split_whitespace().collect();
            let num = |w: &str| -> Result<f64, ScaleError> {
                w.parse::<f64>().map_err(|_| err(format!("expected a number, found `{w}`")))
            };
            match words[0] {
                "interval" => {
                    if words.len() != 3 {
                        return Err(err("usage: interval a b".into()));
                    }
                    segs.push(Segment::Dense { a: num(words[1])?, b: num(words[2])? });
                }
                "point" => {
                    if words.len() != 2 {
                        return Err(err("usage: point p".into()));
                    }
                    segs.push(Segment::Point(num(words[1])?));
                }
                "tolerance" => {
                    if words.len() != 2 {
                        return Err(err("usage: tolerance x".into()));
                    }
                    tol = num(words[1])?;
                }
                "generator" => {
                    let gen = parse_generator(&words[1..]).map_err(err)?;
                    segs.extend(gen.segments()?);
                }
                other => return Err(err(format!("unknown directive `{other}`"))),
            }
        }
        Ok(TimeScale::from_unsorted(segs)?.with_tol(tol))
    }
}

/// Named generators for the standard infinite scales, truncated to a range.
#[derive(Debug, Clone, PartialEq)]
pub enum Generator {
    Reals { from: f64, upto: f64 },
    Integers { from: f64, upto: f64 },
    HIntegers { h: f64, from: f64, upto: f64 },
    QScale { q: f64, from: f64, upto: f64 },
    P11 { from: f64, upto: f64 },
    SinhCosh { from: f64, upto: f64 },
    ZMod3 { from: f64, upto: f64 },
}

fn parse_generator(words: &[&str]) -> Result<Generator, String> {
    let name = *words.first().ok_or("generator needs a name")?;
    let mut params = Vec::new();
    let mut from = None;
    let mut upto = None;
    let mut i = 1;
    while i < words.len() {
        let val = |j: usize| -> Result<f64, String> {
            let w = words.get(j).ok_or_else(|| format!("missing value after `{}`", words[j - 1]))?;
            w.parse::<f64>().map_err(|_| format!("expected a number, found `{w}`"))
        };
        match words[i] {
            "from" => {
                from = Some(val(i + 1)?);
                i += 2;
            }
            "upto" => {
                upto = Some(val(i + 1)?);
                i += 2;
            }
            _ => {
                params.push(val(i)?);
                i += 1;
            }
        }
    }
    let upto = upto.ok_or("generator needs `upto T`")?;
    let want = |n: usize| -> Result<(), String> {
        if params.len() == n {
            Ok(())
        } else {
            Err(format!("generator {name} takes {n} parameter(s)"))
        }
    };
    let g = match name {
        "reals" => {
            want(0)?;
            Generator::Reals { from: from.unwrap_or(0.0), upto }
        }
        "integers" => {
            want(0)?;
            Generator::Integers { from: from.unwrap_or(0.0), upto }
        }
        "h_integers" => {
            want(1)?;
            Generator::HIntegers { h: params[0], from: from.unwrap_or(0.0), upto }
        }
        "q_scale" => {
            want(1)?;
            Generator::QScale { q: params[0], from: from.unwrap_or(1.0), upto }
        }
        "p11" => {
            want(0)?;
            Generator::P11 { from: from.unwrap_or(0.0), upto }
        }
        "sinhcosh" => {
            want(0)?;
            Generator::SinhCosh { from: from.unwrap_or(1f64.sinh()), upto }
        }
        "z_mod3" => {
            want(0)?;
            Generator::ZMod3 { from: from.unwrap_or(1.0), upto }
        }
        other => return Err(format!("unknown generator `{other}`")),
    };
    Ok(g)
}

impl Generator {
    pub fn segments(&self) -> Result<Vec<Segment>, ScaleError> {
        let mut out = Vec::new();
        match *self {
            Generator::Reals { from, upto } => {
                if upto <= from {
                    return Err(ScaleError::DegenerateScale);
                }
                out.push(Segment::Dense { a: from, b: upto });
            }
            Generator::Integers { from, upto } => lattice(1.0, from, upto, &mut out),
            Generator::HIntegers { h, from, upto } => {
                if !(h > 0.0) {
                    return Err(ScaleError::InvalidSegments("h must be positive".into()));
                }
                lattice(h, from, upto, &mut out)
            }
            Generator::QScale { q, from, upto } => {
                if !(q > 1.0) || !(from > 0.0) {
                    return Err(ScaleError::InvalidSegments("q_scale needs q > 1 and from > 0".into()));
                }
                let k0 = (from.ln() / q.ln()).floor() as i32 - 1;
                let mut k = k0;
                loop {
                    let p = q.powi(k);
                    if p > upto * (1.0 + 1e-12) {
                        break;
                    }
                    if p >= from * (1.0 - 1e-12) {
                        out.push(Segment::Point(p));
                    }
                    k += 1;
                }
            }
            Generator::P11 { from, upto } => {
                let mut k = (from / 2.0).floor() as i64 - 1;
                while (2 * k) as f64 <= upto {
                    clip(2.0 * k as f64, 2.0 * k as f64 + 1.0, from, upto, &mut out);
                    k += 1;
                }
            }
            Generator::SinhCosh { from, upto } => {
                let mut n = 1i32;
                while (n as f64).sinh() <= upto {
                    let nf = n as f64;
                    clip(nf.sinh(), nf.cosh(), from, upto, &mut out);
                    n += 1;
                }
            }
            Generator::ZMod3 { from, upto } => {
                let mut k = from.ceil() as i64;
                while k as f64 <= upto {
                    if k.rem_euclid(3) != 0 {
                        out.push(Segment::Point(k as f64));
                    }
                    k += 1;
                }
            }
        }
        if out.is_empty() {
            return Err(ScaleError::DegenerateScale);
        }
        Ok(out)
    }

    pub fn build(&self) -> Result<TimeScale, ScaleError> {
        TimeScale::new(self.segments()?)
    }
}

fn lattice(h: f64, from: f64, upto: f64, out: &mut Vec<Segment>) {
    let mut k = (from / h - 1e-9).ceil() as i64;
    while (k as f64) * h <= upto + 1e-9 * h {
        out.push(Segment::Point(k as f64 * h));
        k += 1;
    }
}

fn clip(a: f64, b: f64, from: f64, upto: f64, out: &mut Vec<Segment>) {
    let lo = a.max(from);
    let hi = b.min(upto);
    if hi > lo {
        out.push(Segment::Dense { a: lo, b: hi });
    } else if hi == lo {
        out.push(Segment::Point(lo));
    }
}

const GL_NODES: [f64; 5] = [
    -0.906_179_845_938_664,
    -0.538_469_310_105_683_1,
    0.0,
    0.538_469_310_105_683_1,
    0.906_179_845_938_664,
];
const GL_WEIGHTS: [f64; 5] = [
    0.236_926_885_056_189_1,
    0.478_628_670_499_366_5,
    0.568_888_888_888_888_9,
    0.478_628_670_499_366_5,
    0.236_926_885_056_189_1,
];

/// 5-point Gauss–Legendre on one panel. Nodes are interior, so a jump at an
/// endpoint is never sampled.
pub fn gauss_panel<F: Fn(f64) -> f64 + ?Sized>(f: &F, lo: f64, hi: f64) -> f64 {
    let c = 0.5 * (lo + hi);
    let r = 0.5 * (hi - lo);
    let mut acc = 0.0;
    for k in 0..5 {
        acc += GL_WEIGHTS[k] * f(c + r * GL_NODES[k]);
    }
    acc * r
}

pub fn gauss_composite<F: Fn(f64) -> f64 + ?Sized>(f: &F, lo: f64, hi: f64, h_max: f64) -> f64 {
    if hi <= lo {
        return 0.0;
    }
    let n = (((hi - lo) / h_max) - 1e-9).ceil().max(1.0) as usize;
    let step = (hi - lo) / n as f64;
    (0..n)
        .map(|i| {
            let a = lo + i as f64 * step;
            let b = if i + 1 == n { hi } else { lo + (i + 1) as f64 * step };
            gauss_panel(f, a, b)
        })
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointKind {
    Scattered,
    Dense,
}

/// Where a query falls relative to a grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridLoc {
    At(usize),
    /// Strictly inside dense cell `i`, i.e. between points `i` and `i + 1`.
    Inside(usize),
    /// Inside the gap after scattered point `i`.
    Gap(usize),
    Outside,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub points: Vec<f64>,
    pub kinds: Vec<PointKind>,
    pub h_max: f64,
    pub tol: f64,
}

impl Grid {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn first(&self) -> f64 {
        self.points[0]
    }

    pub fn last(&self) -> f64 {
        self.points[self.points.len() - 1]
    }

    /// Graininess at grid point `i`.
    pub fn mu_at(&self, i: usize) -> f64 {
        match self.kinds[i] {
            PointKind::Scattered => self.points[i + 1] - self.points[i],
            PointKind::Dense => 0.0,
        }
    }

    pub fn is_dense_cell(&self, i: usize) -> bool {
        i + 1 < self.points.len() && self.kinds[i] == PointKind::Dense
    }

    pub fn locate(&self, t: f64) -> GridLoc {
        let n = self.points.len();
        if n == 0 || !t.is_finite() {
            return GridLoc::Outside;
        }
        let idx = self.points.partition_point(|&p| p <= t);
        // idx - 1 is the last point <= t
        if idx > 0 && (t - self.points[idx - 1]).abs() <= self.tol {
            return GridLoc::At(idx - 1);
        }
        if idx < n && (self.points[idx] - t).abs() <= self.tol {
            return GridLoc::At(idx);
        }
        if idx == 0 || idx == n {
            return GridLoc::Outside;
        }
        let i = idx - 1;
        match self.kinds[i] {
            PointKind::Dense => GridLoc::Inside(i),
            PointKind::Scattered => GridLoc::Gap(i),
        }
    }

    /// Index of the first grid point `>= t - tol`.
    pub fn lower_index(&self, t: f64) -> usize {
        self.points.partition_point(|&p| p < t - self.tol)
    }
}

fn dense_count(len: f64, h_max: f64) -> usize {
    let mut n = ((len / h_max) - 1e-9).ceil().max(1.0) as usize;
    if n % 2 == 1 {
        n += 1;
    }
    n
}

/// Grid over the whole scale. Dense segments get an even number of uniform
/// cells, so their midpoints are grid points.
pub fn build_grid(ts: &TimeScale, h_max: f64) -> Result<Grid, ScaleError> {
    build_grid_from(ts, h_max, ts.t_min())
}

/// Grid over `[s, t_max]`. A start `s` on the global grid yields exactly
/// its tail; otherwise the segment holding `s` is walked from `s` in steps
/// of `h_max`, with a shorter last cell.
pub fn build_grid_from(ts: &TimeScale, h_max: f64, s: f64) -> Result<Grid, ScaleError> {
    if !(h_max > 0.0) {
        return Err(ScaleError::InvalidSegments("h_max must be positive".into()));
    }
    let start = ts.find(s).ok_or(ScaleError::NotInScale(s))?;
    let segs = ts.segments();
    let mut points = Vec::new();
    let mut kinds = Vec::new();
    for (i, seg) in segs.iter().enumerate().skip(start.seg) {
        let has_next = i + 1 < segs.len();
        let end_kind = if has_next { PointKind::Scattered } else { PointKind::Dense };
        match *seg {
            Segment::Point(p) => {
                points.push(p);
                kinds.push(end_kind);
            }
            Segment::Dense { a, b } => {
                let n = dense_count(b - a, h_max);
                let step = (b - a) / n as f64;
                if i == start.seg && start.loc != Loc::Left {
                    if start.loc == Loc::Right {
                        points.push(b);
                        kinds.push(end_kind);
                        continue;
                    }
                    let s0 = start.t;
                    let pos = (s0 - a) / step;
                    let j0 = pos.round();
                    if (a + j0 * step - s0).abs() <= ts.tol() {
                        for j in j0 as usize..n {
                            points.push(a + j as f64 * step);
                            kinds.push(PointKind::Dense);
                        }
                    } else {
                        // steps of exactly h_max from s hit the delay breaking
                        // points s + kτ whenever τ is a multiple of h_max
                        let mut j = 0usize;
                        loop {
                            let p = s0 + j as f64 * h_max;
                            if b - p <= 1e-6 * h_max {
                                break;
                            }
                            points.push(p);
                            kinds.push(PointKind::Dense);
                            j += 1;
                        }
                    }
                } else {
                    for j in 0..n {
                        points.push(a + j as f64 * step);
                        kinds.push(PointKind::Dense);
                    }
                }
                points.push(b);
                kinds.push(end_kind);
            }
        }
    }
    if points.is_empty() {
        return Err(ScaleError::DegenerateScale);
    }
    Ok(Grid { points, kinds, h_max, tol: ts.tol() })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Interp {
    Linear,
    CubicHermite,
}

/// One-sided slopes for cubic Hermite cells: `right[i]` is the slope at
/// point `i` entering cell `i`, `left[i]` the slope at point `i + 1` leaving
/// cell `i`. Entries for scattered cells are unused.
#[derive(Debug, Clone, PartialEq)]
pub struct Slopes {
    pub right: Vec<f64>,
    pub left: Vec<f64>,
}

/// A sampled rd-continuous function on a grid.
#[derive(Debug, Clone)]
pub struct GridFunction {
    grid: Arc<Grid>,
    values: Vec<f64>,
    interp: Interp,
    slopes: Option<Slopes>,
    /// Values seen from inside dense cells: equal to `values` except at
    /// left-dense, right-scattered points, where the left limit is kept.
    cell_values: Option<Vec<f64>>,
}

impl GridFunction {
    pub fn new(grid: Arc<Grid>, values: Vec<f64>, interp: Interp) -> Self {
        assert_eq!(grid.len(), values.len(), "one value per grid point");
        let slopes = match interp {
            Interp::Linear => None,
            Interp::CubicHermite => Some(estimate_slopes(&grid, &values)),
        };
        GridFunction { grid, values, interp, slopes, cell_values: None }
    }

    /// A function with a jump at left-dense, right-scattered points:
    /// `left[k]` is the left limit at such a point `k`; other entries are
    /// ignored.
    pub fn with_left_limits(grid: Arc<Grid>, values: Vec<f64>, left: &[f64], interp: Interp) -> Self {
        assert_eq!(grid.len(), values.len());
        assert_eq!(grid.len(), left.len());
        let mut cv = values.clone();
        for k in 1..grid.len() {
            if grid.kinds[k] == PointKind::Scattered && grid.is_dense_cell(k - 1) {
                cv[k] = left[k];
            }
        }
        let slopes = match interp {
            Interp::Linear => None,
            Interp::CubicHermite => Some(estimate_slopes(&grid, &cv)),
        };
        GridFunction { grid, values, interp, slopes, cell_values: Some(cv) }
    }

    pub fn with_slopes(grid: Arc<Grid>, values: Vec<f64>, slopes: Slopes) -> Self {
        assert_eq!(grid.len(), values.len());
        GridFunction { grid, values, interp: Interp::CubicHermite, slopes: Some(slopes), cell_values: None }
    }

    pub fn from_fn<F: Fn(f64) -> f64>(grid: Arc<Grid>, f: F, interp: Interp) -> Self {
        let values = grid.points.iter().map(|&t| f(t)).collect();
        Self::new(grid, values, interp)
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn interp(&self) -> Interp {
        self.interp
    }

    pub fn slopes(&self) -> Option<&Slopes> {
        self.slopes.as_ref()
    }

    fn cell_value(&self, i: usize, t: f64) -> f64 {
        let (t0, t1) = (self.grid.points[i], self.grid.points[i + 1]);
        let cv = self.cell_values.as_deref().unwrap_or(&self.values);
        let (y0, y1) = (cv[i], cv[i + 1]);
        match (&self.slopes, self.interp) {
            (Some(sl), Interp::CubicHermite) => hermite(t0, t1, y0, y1, sl.right[i], sl.left[i], t),
            _ => {
                let w = (t - t0) / (t1 - t0);
                y0 + w * (y1 - y0)
            }
        }
    }

    pub fn eval(&self, t: f64) -> Result<f64, ScaleError> {
        match self.grid.locate(t) {
            GridLoc::At(i) => Ok(self.values[i]),
            GridLoc::Inside(i) => Ok(self.cell_value(i, t)),
            GridLoc::Gap(_) | GridLoc::Outside => Err(ScaleError::NotInScale(t)),
        }
    }

    /// Integral of the interpolant over `[lo, hi]` inside dense cell `i`:
    /// trapezoid for linear cells, Simpson (exact on cubics) for Hermite.
    pub(crate) fn cell_integral(&self, i: usize, lo: f64, hi: f64) -> f64 {
        let f = |x: f64| {
            if (x - self.grid.points[i]).abs() <= 0.0 {
                self.cell_values.as_deref().unwrap_or(&self.values)[i]
            } else if (x - self.grid.points[i + 1]).abs() <= 0.0 {
                self.cell_values.as_deref().unwrap_or(&self.values)[i + 1]
            } else {
                self.cell_value(i, x)
            }
        };
        match self.interp {
            Interp::Linear => 0.5 * (hi - lo) * (f(lo) + f(hi)),
            Interp::CubicHermite => (hi - lo) / 6.0 * (f(lo) + 4.0 * f(0.5 * (lo + hi)) + f(hi)),
        }
    }
}

pub fn hermite(t0: f64, t1: f64, y0: f64, y1: f64, m0: f64, m1: f64, t: f64) -> f64 {
    let h = t1 - t0;
    let s = (t - t0) / h;
    let s2 = s * s;
    let s3 = s2 * s;
    let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
    let h10 = s3 - 2.0 * s2 + s;
    let h01 = -2.0 * s3 + 3.0 * s2;
    let h11 = s3 - s2;
    h00 * y0 + h10 * h * m0 + h01 * y1 + h11 * h * m1
}

/// Second-order finite-difference slopes within each dense run.
fn estimate_slopes(grid: &Grid, v: &[f64]) -> Slopes {
    let n = grid.len();
    let p = &grid.points;
    let mut right = vec![0.0; n];
    let mut left = vec![0.0; n];
    let mut i = 0;
    while i < n {
        if !grid.is_dense_cell(i) {
            i += 1;
            continue;
        }
        let start = i;
        let mut end = i + 1;
        while grid.is_dense_cell(end) {
            end += 1;
        }
        // dense run covers points start..=end
        let slope = |k: usize| -> f64 {
            if end - start == 1 {
                return (v[end] - v[start]) / (p[end] - p[start]);
            }
            let (a, b, c) = if k == start {
                (k, k + 1, k + 2)
            } else if k == end {
                (k - 2, k - 1, k)
            } else {
                (k - 1, k, k + 1)
            };
            // derivative at p[k] of the parabola through a, b, c
            let (xa, xb, xc) = (p[a], p[b], p[c]);
            let x = p[k];
            v[a] * (2.0 * x - xb - xc) / ((xa - xb) * (xa - xc))
                + v[b] * (2.0 * x - xa - xc) / ((xb - xa) * (xb - xc))
                + v[c] * (2.0 * x - xa - xb) / ((xc - xa) * (xc - xb))
        };
        for k in start..end {
            right[k] = slope(k);
            left[k] = slope(k + 1);
        }
        i = end;
    }
    Slopes { right, left }
}

/// Δ-integral of a grid function: `μ(η)f(η)` over right-scattered grid
/// points of `[s, t)` plus quadrature of the interpolant on dense cells.
pub fn delta_integral(ts: &TimeScale, f: &GridFunction, s: f64, t: f64) -> Result<f64, ScaleError> {
    let s = ts.find(s).ok_or(ScaleError::NotInScale(s))?.t;
    let t = ts.find(t).ok_or(ScaleError::NotInScale(t))?.t;
    if t < s {
        return Err(ScaleError::ReversedBounds(s, t));
    }
    let g = f.grid();
    let tol = g.tol;
    let mut i = match g.locate(s) {
        GridLoc::At(i) | GridLoc::Inside(i) => i,
        _ => return Err(ScaleError::NotInScale(s)),
    };
    if !matches!(g.locate(t), GridLoc::At(_) | GridLoc::Inside(_)) {
        return Err(ScaleError::NotInScale(t));
    }
    let mut sum = 0.0;
    while i + 1 < g.len() && g.points[i] < t - tol {
        match g.kinds[i] {
            PointKind::Scattered => {
                if g.points[i] >= s - tol {
                    sum += g.mu_at(i) * f.values()[i];
                }
            }
            PointKind::Dense => {
                let lo = s.max(g.points[i]);
                let hi = t.min(g.points[i + 1]);
                if hi > lo {
                    sum += f.cell_integral(i, lo, hi);
                }
            }
        }
        i += 1;
    }
    Ok(sum)
}

/// Cell-wise Δ-integrals of a pointwise function on a grid, for many window
/// queries. Short windows sum cells directly; long ones use prefix sums.
pub struct CellIntegrals {
    grid: Arc<Grid>,
    cells: Vec<f64>,
    prefix: Vec<f64>,
}

const DIRECT_CELLS: usize = 256;

impl CellIntegrals {
    pub fn new<F: Fn(f64) -> f64>(grid: Arc<Grid>, f: F) -> Self {
        let n = grid.len();
        let mut cells = vec![0.0; n.saturating_sub(1)];
        for (i, c) in cells.iter_mut().enumerate() {
            *c = match grid.kinds[i] {
                PointKind::Scattered => grid.mu_at(i) * f(grid.points[i]),
                PointKind::Dense => gauss_panel(&f, grid.points[i], grid.points[i + 1]),
            };
        }
        let mut prefix = Vec::with_capacity(n);
        prefix.push(0.0);
        for c in &cells {
            let last = *prefix.last().unwrap();
            prefix.push(last + c);
        }
        CellIntegrals { grid, cells, prefix }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn cells(&self) -> &[f64] {
        &self.cells
    }

    /// Cumulative integral from the first grid point to grid point `i`.
    pub fn cumulative(&self, i: usize) -> f64 {
        self.prefix[i]
    }

    /// `∫_a^b f Δη` for scale points `a <= b` covered by the grid; `f` must
    /// be the function the table was built from (used on partial cells).
    pub fn integral<F: Fn(f64) -> f64>(&self, f: &F, a: f64, b: f64) -> Result<f64, ScaleError> {
        if b < a - self.grid.tol {
            return Err(ScaleError::ReversedBounds(a, b));
        }
        let g = &self.grid;
        // (cell index, head piece) for a
        let (ia, head) = match g.locate(a) {
            GridLoc::At(i) => (i, 0.0),
            GridLoc::Inside(i) => {
                if let GridLoc::Inside(j) = g.locate(b) {
                    if j == i {
                        return Ok(gauss_panel(f, a, b));
                    }
                }
                (i + 1, gauss_panel(f, a, g.points[i + 1]))
            }
            _ => return Err(ScaleError::NotInScale(a)),
        };
        let (ib, tail) = match g.locate(b) {
            GridLoc::At(j) => (j, 0.0),
            GridLoc::Inside(j) => (j, gauss_panel(f, g.points[j], b)),
            _ => return Err(ScaleError::NotInScale(b)),
        };
        if ib < ia {
            return Ok(0.0);
        }
        let middle = if ib - ia <= DIRECT_CELLS {
            self.cells[ia..ib].iter().sum::<f64>()
        } else {
            self.prefix[ib] - self.prefix[ia]
        };
        Ok(head + middle + tail)
    }
}
