//! SVG renderings of the CSV artifacts, each paired with the CSV it was drawn from.

use std::fmt::Write as _;
use std::str::FromStr;

use crate::config::PlotSection;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    BetaBall,
    CornerMap,
    USurface,
    FiberCloud,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PlotError {
    #[error("unsupported plot kind `{0}` (expected beta-ball, corner-map, u-surface or fiber-cloud)")]
    UnsupportedKind(String),
    #[error("bad plot input: {0}")]
    Input(String),
}

impl FromStr for PlotKind {
    type Err = PlotError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "beta-ball" => PlotKind::BetaBall,
            "corner-map" => PlotKind::CornerMap,
            "u-surface" => PlotKind::USurface,
            "fiber-cloud" => PlotKind::FiberCloud,
            other => return Err(PlotError::UnsupportedKind(other.to_string())),
        })
    }
}

impl PlotKind {
    pub fn name(&self) -> &'static str {
        match self {
            PlotKind::BetaBall => "beta-ball",
            PlotKind::CornerMap => "corner-map",
            PlotKind::USurface => "u-surface",
            PlotKind::FiberCloud => "fiber-cloud",
        }
    }
}

/// Rows of a numeric CSV, keyed by header; `#` lines are comments.
struct Table {
    headers: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn parse(text: &str, required: &[&str]) -> Result<Self, PlotError> {
        let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
        let headers: Vec<String> = rdr
            .headers()
            .map_err(|e| PlotError::Input(e.to_string()))?
            .iter()
            .map(str::to_string)
            .collect();
        if let Some(missing) = required.iter().find(|r| !headers.iter().any(|h| h == *r)) {
            return Err(PlotError::Input(format!("missing column `{missing}`")));
        }
        let rows = rdr
            .records()
            .map(|r| r.map(|r| r.iter().map(str::to_string).collect()))
            .collect::<Result<Vec<Vec<String>>, _>>()
            .map_err(|e| PlotError::Input(e.to_string()))?;
        Ok(Self { headers, rows })
    }

    fn col(&self, name: &str) -> Result<Vec<f64>, PlotError> {
        let k = self.headers.iter().position(|h| h == name).expect("checked in parse");
        self.rows
            .iter()
            .map(|r| {
                r.get(k)
                    .and_then(|v| v.parse::<f64>().ok())
                    .ok_or_else(|| PlotError::Input(format!("non-numeric `{name}`")))
            })
            .collect()
    }
}

/// Data-to-pixel map onto a 400×400 canvas with a margin.
struct Frame {
    lo: [f64; 2],
    scale: f64,
}

const SIZE: f64 = 400.0;
const MARGIN: f64 = 20.0;

impl Frame {
    fn fit(points: impl Iterator<Item = [f64; 2]>) -> Self {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for p in points {
            for a in 0..2 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        if !lo[0].is_finite() {
            return Self { lo: [0.0, 0.0], scale: 1.0 };
        }
        let span = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1e-12);
        Self {
            lo,
            scale: (SIZE - 2.0 * MARGIN) / span,
        }
    }

    fn unit() -> Self {
        Self {
            lo: [0.0, 0.0],
            scale: SIZE - 2.0 * MARGIN,
        }
    }

    fn px(&self, p: [f64; 2]) -> (f64, f64) {
        (
            MARGIN + (p[0] - self.lo[0]) * self.scale,
            SIZE - MARGIN - (p[1] - self.lo[1]) * self.scale,
        )
    }
}

fn svg_open() -> String {
    format!("<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SIZE}\" height=\"{SIZE}\" viewBox=\"0 0 {SIZE} {SIZE}\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n")
}

pub fn render(kind: PlotKind, input: &str, opts: &PlotSection) -> Result<(String, String), PlotError> {
    match kind {
        PlotKind::BetaBall => beta_ball(input, opts.level),
        PlotKind::CornerMap => corner_map(input, opts.threshold),
        PlotKind::USurface => u_surface(input, opts.contours),
        PlotKind::FiberCloud => fiber_cloud(input),
    }
}

/// Points where `β_env = level`, one per ray, by linear interpolation
/// outward from the origin.
pub fn beta_ball_points(input: &str, level: f64) -> Result<Vec<[f64; 2]>, PlotError> {
    let t = Table::parse(input, &["h1", "h2", "beta_env"])?;
    let (h1, h2, b) = (t.col("h1")?, t.col("h2")?, t.col("beta_env")?);
    let zero = (0..b.len()).find(|k| h1[*k] == 0.0 && h2[*k] == 0.0).map(|k| b[k]);
    let mut rays: Vec<(f64, Vec<(f64, f64)>)> = Vec::new();
    for k in 0..b.len() {
        let r = h1[k].hypot(h2[k]);
        if r == 0.0 {
            continue;
        }
        let angle = h2[k].atan2(h1[k]);
        match rays.iter_mut().find(|(a, _)| (a - angle).abs() < 1e-9) {
            Some((_, pts)) => pts.push((r, b[k])),
            None => rays.push((angle, vec![(r, b[k])])),
        }
    }
    rays.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out = Vec::new();
    for (angle, mut pts) in rays {
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        if let Some(z) = zero {
            pts.insert(0, (0.0, z));
        }
        let hit = pts.windows(2).find(|w| (w[0].1 - level) * (w[1].1 - level) <= 0.0 && w[0].1 != w[1].1);
        if let Some(w) = hit {
            let s = (level - w[0].1) / (w[1].1 - w[0].1);
            let r = w[0].0 + s * (w[1].0 - w[0].0);
            out.push([r * angle.cos(), r * angle.sin()]);
        }
    }
    Ok(out)
}

fn beta_ball(input: &str, level: f64) -> Result<(String, String), PlotError> {
    let pts = beta_ball_points(input, level)?;
    let mut csv = String::from("h1,h2\n");
    for p in &pts {
        writeln!(csv, "{},{}", p[0], p[1]).unwrap();
    }
    let frame = Frame::fit(pts.iter().copied().chain([[0.0, 0.0]]));
    let mut svg = svg_open();
    let poly: Vec<String> = pts
        .iter()
        .map(|p| {
            let (x, y) = frame.px(*p);
            format!("{x:.3},{y:.3}")
        })
        .collect();
    writeln!(svg, "<polygon points=\"{}\" fill=\"none\" stroke=\"black\" stroke-width=\"1.5\"/>", poly.join(" ")).unwrap();
    let (ox, oy) = frame.px([0.0, 0.0]);
    writeln!(svg, "<circle cx=\"{ox:.3}\" cy=\"{oy:.3}\" r=\"2\" fill=\"black\"/>").unwrap();
    svg.push_str("</svg>\n");
    Ok((svg, csv))
}

fn corner_map(input: &str, threshold: f64) -> Result<(String, String), PlotError> {
    let t = Table::parse(input, &["h1", "h2", "corner_gap"])?;
    let (h1, h2, g) = (t.col("h1")?, t.col("h2")?, t.col("corner_gap")?);
    let mut csv = String::from("h1,h2,corner_gap,marked\n");
    let frame = Frame::fit((0..g.len()).map(|k| [h1[k], h2[k]]).chain([[0.0, 0.0]]));
    let mut svg = svg_open();
    for k in 0..g.len() {
        let marked = g[k] > threshold;
        writeln!(csv, "{},{},{},{}", h1[k], h2[k], g[k], marked).unwrap();
        let (x, y) = frame.px([h1[k], h2[k]]);
        let (r, fill) = if marked { (5.0, "crimson") } else { (3.0, "gray") };
        writeln!(svg, "<circle cx=\"{x:.3}\" cy=\"{y:.3}\" r=\"{r}\" fill=\"{fill}\"/>").unwrap();
    }
    svg.push_str("</svg>\n");
    Ok((svg, csv))
}

/// Marching-squares contour segments of a periodic grid field.
pub fn contour_segments(m: usize, u: &[f64], level: f64) -> Vec<[[f64; 2]; 2]> {
    let at = |i: usize, j: usize| u[(i % m) * m + (j % m)];
    let h = 1.0 / m as f64;
    let mut segs = Vec::new();
    for i in 0..m {
        for j in 0..m {
            let corners = [
                ([i as f64 * h, j as f64 * h], at(i, j)),
                ([(i + 1) as f64 * h, j as f64 * h], at(i + 1, j)),
                ([(i + 1) as f64 * h, (j + 1) as f64 * h], at(i + 1, j + 1)),
                ([i as f64 * h, (j + 1) as f64 * h], at(i, j + 1)),
            ];
            let mut cross = Vec::with_capacity(4);
            for e in 0..4 {
                let (pa, va) = corners[e];
                let (pb, vb) = corners[(e + 1) % 4];
                if (va < level) != (vb < level) {
                    let s = (level - va) / (vb - va);
                    cross.push([pa[0] + s * (pb[0] - pa[0]), pa[1] + s * (pb[1] - pa[1])]);
                }
            }
            for pair in cross.chunks_exact(2) {
                segs.push([pair[0], pair[1]]);
            }
        }
    }
    segs
}

fn u_surface(input: &str, contours: usize) -> Result<(String, String), PlotError> {
    let t = Table::parse(input, &["i", "j", "u"])?;
    let (is, js, us) = (t.col("i")?, t.col("j")?, t.col("u")?);
    let n = us.len();
    let m = (n as f64).sqrt().round() as usize;
    if m * m != n || m == 0 {
        return Err(PlotError::Input(format!("{n} values do not form a square grid")));
    }
    let mut u = vec![0.0; n];
    for k in 0..n {
        let (i, j) = (is[k] as usize, js[k] as usize);
        if i >= m || j >= m {
            return Err(PlotError::Input(format!("index ({i},{j}) outside the {m}×{m} grid")));
        }
        u[i * m + j] = us[k];
    }
    let lo = u.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = u.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut csv = String::from("level,x1a,x2a,x1b,x2b\n");
    let frame = Frame::unit();
    let mut svg = svg_open();
    let (x0, y0) = frame.px([0.0, 1.0]);
    writeln!(svg, "<rect x=\"{x0:.3}\" y=\"{y0:.3}\" width=\"{0:.3}\" height=\"{0:.3}\" fill=\"none\" stroke=\"gray\"/>", frame.scale).unwrap();
    if hi > lo {
        for c in 1..=contours {
            let level = lo + (hi - lo) * c as f64 / (contours + 1) as f64;
            for [a, b] in contour_segments(m, &u, level) {
                writeln!(csv, "{level},{},{},{},{}", a[0], a[1], b[0], b[1]).unwrap();
                let (ax, ay) = frame.px(a);
                let (bx, by) = frame.px(b);
                writeln!(svg, "<line x1=\"{ax:.3}\" y1=\"{ay:.3}\" x2=\"{bx:.3}\" y2=\"{by:.3}\" stroke=\"black\" stroke-width=\"0.8\"/>").unwrap();
            }
        }
    }
    svg.push_str("</svg>\n");
    Ok((svg, csv))
}

fn fiber_cloud(input: &str) -> Result<(String, String), PlotError> {
    let t = Table::parse(input, &["x0_1", "x0_2", "p1", "p2"])?;
    let (a, b, p1, p2) = (t.col("x0_1")?, t.col("x0_2")?, t.col("p1")?, t.col("p2")?);
    let mut csv = String::from("x0_1,x0_2,p1,p2\n");
    let frame = Frame::fit((0..p1.len()).map(|k| [p1[k], p2[k]]));
    let mut svg = svg_open();
    let palette = ["black", "crimson", "steelblue", "darkgreen"];
    let mut fibers: Vec<(f64, f64)> = Vec::new();
    for k in 0..p1.len() {
        writeln!(csv, "{},{},{},{}", a[k], b[k], p1[k], p2[k]).unwrap();
        let idx = match fibers.iter().position(|f| *f == (a[k], b[k])) {
            Some(i) => i,
            None => {
                fibers.push((a[k], b[k]));
                fibers.len() - 1
            }
        };
        let (x, y) = frame.px([p1[k], p2[k]]);
        writeln!(svg, "<circle cx=\"{x:.3}\" cy=\"{y:.3}\" r=\"2.5\" fill=\"{}\"/>", palette[idx % palette.len()]).unwrap();
    }
    svg.push_str("</svg>\n");
    Ok((svg, csv))
}
