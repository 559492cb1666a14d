//! SVG, PNG and CSV exports for spectra and planning planes.
//!
//! Every output is a pure function of its input: numbers in SVG are written
//! with two decimals, elements in a fixed order, and CSV values in shortest
//! round-trip form.
//!
//! Colours come from one fixed five-stop ramp, interpolated linearly in sRGB:
//!
//! | t    | colour    |
//! |------|-----------|
//! | 0.00 | `#440154` |
//! | 0.25 | `#3b528b` |
//! | 0.50 | `#21918c` |
//! | 0.75 | `#5ec962` |
//! | 1.00 | `#fde725` |

use std::fmt::Write as _;

use crate::plane::PlanningPlane;
use crate::scaling::SpectrumBand;

pub const RAMP: [[u8; 3]; 5] = [[0x44, 0x01, 0x54], [0x3b, 0x52, 0x8b], [0x21, 0x91, 0x8c], [0x5e, 0xc9, 0x62], [0xfd, 0xe7, 0x25]];

/// Number of contour levels drawn on plane heatmaps.
pub const CONTOUR_LEVELS: usize = 8;

const CONTOUR_COLOR: [u8; 3] = [0x1a, 0x1a, 0x1a];

/// Ramp colour at `t`, clamped to `[0, 1]`.
pub fn ramp(t: f64) -> [u8; 3] {
    let t = if t.is_nan() { 0.0 } else { t.clamp(0.0, 1.0) };
    let pos = t * (RAMP.len() - 1) as f64;
    let i = (pos.floor() as usize).min(RAMP.len() - 2);
    let f = pos - i as f64;
    let (a, b) = (RAMP[i], RAMP[i + 1]);
    std::array::from_fn(|c| (a[c] as f64 + (b[c] as f64 - a[c] as f64) * f).round() as u8)
}

/// `n` colours sampled evenly from the ramp, first and last stops included.
pub fn palette(n: usize) -> Vec<[u8; 3]> {
    match n {
        0 => Vec::new(),
        1 => vec![ramp(0.5)],
        _ => (0..n).map(|i| ramp(i as f64 / (n - 1) as f64)).collect(),
    }
}

pub fn hex(c: [u8; 3]) -> String {
    format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for ch in s.chars() {
        match ch {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            _ => out.push(ch),
        }
    }
    out
}

const SPECTRUM_WIDTH: f64 = 800.0;
const SPECTRUM_HEIGHT: f64 = 180.0;
const SPECTRUM_MARGIN: f64 = 40.0;
const SPECTRUM_BAND_TOP: f64 = 40.0;
const SPECTRUM_BAND_HEIGHT: f64 = 80.0;

/// Spectrum bands as squares along a log-density axis.
///
/// Each band covers the stretch of the axis closer to its own log density
/// than to its neighbours', so thin density bands show as narrow squares.
/// `bins` must match the value used to compute the bands' colour bins.
pub fn spectrum_svg(title: &str, bands: &[SpectrumBand], bins: usize) -> String {
    let colours = palette(bins.max(1));
    let plot_w = SPECTRUM_WIDTH - 2.0 * SPECTRUM_MARGIN;
    let logs: Vec<f64> = bands.iter().map(|b| b.density.log10()).collect();
    let (lo, hi) = match (logs.first(), logs.last()) {
        (Some(&a), Some(&b)) if b > a => (a, b),
        (Some(&a), _) => (a - 0.5, a + 0.5),
        _ => (0.0, 1.0),
    };
    let to_px = |l: f64| SPECTRUM_MARGIN + (l - lo) / (hi - lo) * plot_w;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#,
        w = SPECTRUM_WIDTH,
        h = SPECTRUM_HEIGHT
    );
    let _ = writeln!(s, r##"<rect x="0" y="0" width="{SPECTRUM_WIDTH}" height="{SPECTRUM_HEIGHT}" fill="#ffffff"/>"##);
    let _ = writeln!(
        s,
        r#"<text x="{SPECTRUM_MARGIN}" y="24" font-family="sans-serif" font-size="14">{}</text>"#,
        escape(title)
    );
    let _ = writeln!(s, r#"<g id="bands">"#);
    let n = bands.len();
    for (i, band) in bands.iter().enumerate() {
        let left = if i == 0 { SPECTRUM_MARGIN } else { to_px((logs[i - 1] + logs[i]) / 2.0) };
        let right = if i + 1 == n { SPECTRUM_MARGIN + plot_w } else { to_px((logs[i] + logs[i + 1]) / 2.0) };
        let colour = colours[band.color_bin.min(colours.len() - 1)];
        let _ = writeln!(
            s,
            r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{}" data-class="{}" data-density="{}" data-area="{}"/>"#,
            left,
            SPECTRUM_BAND_TOP,
            (right - left).max(0.0),
            SPECTRUM_BAND_HEIGHT,
            hex(colour),
            band.class_index,
            band.density,
            band.area_km2
        );
    }
    let _ = writeln!(s, "</g>");

    let axis_y = SPECTRUM_BAND_TOP + SPECTRUM_BAND_HEIGHT + 8.0;
    let _ = writeln!(s, r##"<g id="axis" font-family="sans-serif" font-size="11" fill="#333333">"##);
    let _ = writeln!(
        s,
        r##"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#333333"/>"##,
        SPECTRUM_MARGIN,
        axis_y,
        SPECTRUM_MARGIN + plot_w,
        axis_y
    );
    let mut decade = lo.ceil() as i64;
    while (decade as f64) <= hi {
        let x = to_px(decade as f64);
        let _ = writeln!(s, r##"<line x1="{x:.2}" y1="{axis_y:.2}" x2="{x:.2}" y2="{:.2}" stroke="#333333"/>"##, axis_y + 5.0);
        let _ = writeln!(s, r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">1e{decade}</text>"#, axis_y + 18.0);
        decade += 1;
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">population density (per km²)</text>"#,
        SPECTRUM_WIDTH / 2.0,
        SPECTRUM_HEIGHT - 4.0
    );
    let _ = writeln!(s, "</g>");
    s.push_str("</svg>\n");
    s
}

/// Grid as CSV, `y` outer and `x` inner, in data units.
pub fn plane_csv(plane: &PlanningPlane) -> String {
    let mut s = String::from("x,y,z,variance\n");
    for iy in 0..plane.ny {
        for ix in 0..plane.nx {
            let k = iy * plane.nx + ix;
            let _ = writeln!(s, "{},{},{},{}", plane.x_values[ix], plane.y_values[iy], plane.grid[k], plane.variance[k]);
        }
    }
    s
}

/// Ranges narrower than this relative to the values' magnitude are treated
/// as flat, so kriging round-off on a constant field draws no contours.
pub const FLAT_TOLERANCE: f64 = 1e-9;

fn is_flat(z_min: f64, z_max: f64) -> bool {
    !(z_max - z_min > FLAT_TOLERANCE * z_min.abs().max(z_max.abs()).max(1.0))
}

/// Contour levels evenly spaced strictly inside `(z_min, z_max)`; empty for
/// a flat field.
pub fn contour_levels(z_min: f64, z_max: f64, count: usize) -> Vec<f64> {
    if is_flat(z_min, z_max) {
        return Vec::new();
    }
    (1..=count).map(|i| z_min + (z_max - z_min) * i as f64 / (count + 1) as f64).collect()
}

pub type Segment = ((f64, f64), (f64, f64));

/// Marching-squares segments of `level` over a row-major `nx × ny` grid, in
/// fractional grid-index coordinates. Saddles are split by the cell centre.
pub fn contour_segments(grid: &[f64], nx: usize, ny: usize, level: f64) -> Vec<Segment> {
    let mut out = Vec::new();
    if nx < 2 || ny < 2 {
        return out;
    }
    let at = |ix: usize, iy: usize| grid[iy * nx + ix];
    for iy in 0..ny - 1 {
        for ix in 0..nx - 1 {
            let v00 = at(ix, iy);
            let v10 = at(ix + 1, iy);
            let v11 = at(ix + 1, iy + 1);
            let v01 = at(ix, iy + 1);
            let above = [v00 > level, v10 > level, v11 > level, v01 > level];
            let count = above.iter().filter(|&&a| a).count();
            if count == 0 || count == 4 {
                continue;
            }
            let (x, y) = (ix as f64, iy as f64);
            let cross = |va: f64, vb: f64| (level - va) / (vb - va);
            let bottom = || (x + cross(v00, v10), y);
            let right = || (x + 1.0, y + cross(v10, v11));
            let top = || (x + cross(v01, v11), y + 1.0);
            let left = || (x, y + cross(v00, v01));
            let mut edges = Vec::with_capacity(4);
            if above[0] != above[1] {
                edges.push(bottom());
            }
            if above[1] != above[2] {
                edges.push(right());
            }
            if above[3] != above[2] {
                edges.push(top());
            }
            if above[0] != above[3] {
                edges.push(left());
            }
            if edges.len() == 2 {
                out.push((edges[0], edges[1]));
            } else {
                let centre_above = (v00 + v10 + v11 + v01) / 4.0 > level;
                if above[0] == centre_above {
                    out.push((bottom(), right()));
                    out.push((top(), left()));
                } else {
                    out.push((bottom(), left()));
                    out.push((right(), top()));
                }
            }
        }
    }
    out
}

fn normalized(plane: &PlanningPlane, z: f64) -> f64 {
    if !is_flat(plane.z_min, plane.z_max) {
        (z - plane.z_min) / (plane.z_max - plane.z_min)
    } else {
        0.5
    }
}

const PLANE_CELL: f64 = 6.0;
const PLANE_MARGIN: f64 = 60.0;

/// Heatmap with contour lines and one dot per sample. Higher `ds` is up.
pub fn plane_svg(plane: &PlanningPlane, title: &str, dependent: &str) -> String {
    let (nx, ny) = (plane.nx, plane.ny);
    let plot_w = nx as f64 * PLANE_CELL;
    let plot_h = ny as f64 * PLANE_CELL;
    let width = plot_w + 2.0 * PLANE_MARGIN;
    let height = plot_h + 2.0 * PLANE_MARGIN;
    // Node (ix, iy) is the centre of its cell.
    let gx = |fx: f64| PLANE_MARGIN + (fx + 0.5) * PLANE_CELL;
    let gy = |fy: f64| PLANE_MARGIN + plot_h - (fy + 0.5) * PLANE_CELL;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
    );
    let _ = writeln!(s, r##"<rect x="0" y="0" width="{width}" height="{height}" fill="#ffffff"/>"##);
    let _ = writeln!(s, r#"<text x="{PLANE_MARGIN}" y="30" font-family="sans-serif" font-size="14">{}</text>"#, escape(title));

    let _ = writeln!(s, r#"<g id="heatmap" shape-rendering="crispEdges">"#);
    for iy in 0..ny {
        for ix in 0..nx {
            let c = ramp(normalized(plane, plane.value(ix, iy)));
            let _ = writeln!(
                s,
                r#"<rect x="{:.2}" y="{:.2}" width="{PLANE_CELL}" height="{PLANE_CELL}" fill="{}"/>"#,
                gx(ix as f64) - PLANE_CELL / 2.0,
                gy(iy as f64) - PLANE_CELL / 2.0,
                hex(c)
            );
        }
    }
    let _ = writeln!(s, "</g>");

    let _ = writeln!(s, r#"<g id="contours" fill="none" stroke="{}" stroke-width="1">"#, hex(CONTOUR_COLOR));
    for level in contour_levels(plane.z_min, plane.z_max, CONTOUR_LEVELS) {
        let segments = contour_segments(&plane.grid, nx, ny, level);
        if segments.is_empty() {
            continue;
        }
        let mut d = String::new();
        for ((x0, y0), (x1, y1)) in segments {
            let _ = write!(d, "M{:.2} {:.2}L{:.2} {:.2}", gx(x0), gy(y0), gx(x1), gy(y1));
        }
        let _ = writeln!(s, r#"<path data-level="{level}" d="{d}"/>"#);
    }
    let _ = writeln!(s, "</g>");

    let frac = |values: &[f64], v: f64| {
        let (lo, hi) = (values[0], values[values.len() - 1]);
        if hi > lo {
            (v - lo) / (hi - lo) * (values.len() - 1) as f64
        } else {
            (values.len() - 1) as f64 / 2.0
        }
    };
    let _ = writeln!(s, r##"<g id="samples" fill="#ffffff" stroke="#000000" stroke-width="1">"##);
    for sample in &plane.samples {
        let (px, py) = (gx(frac(&plane.x_values, sample.x)), gy(frac(&plane.y_values, sample.y)));
        let label = sample.label.as_deref().map(escape).unwrap_or_default();
        let _ = writeln!(s, r#"<circle cx="{px:.2}" cy="{py:.2}" r="3"><title>{label}</title></circle>"#);
    }
    let _ = writeln!(s, "</g>");

    let _ = writeln!(s, r##"<g id="axes" font-family="sans-serif" font-size="11" fill="#333333">"##);
    let bottom = PLANE_MARGIN + plot_h;
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">mean density (per km²) {} to {}</text>"#,
        PLANE_MARGIN + plot_w / 2.0,
        bottom + 24.0,
        fmt_short(plane.x_values[0]),
        fmt_short(plane.x_values[nx - 1])
    );
    let _ = writeln!(
        s,
        r#"<text x="20" y="{:.2}" text-anchor="middle" transform="rotate(-90 20 {:.2})">ds {} to {}</text>"#,
        PLANE_MARGIN + plot_h / 2.0,
        PLANE_MARGIN + plot_h / 2.0,
        fmt_short(plane.y_values[0]),
        fmt_short(plane.y_values[ny - 1])
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{} {} to {}</text>"#,
        PLANE_MARGIN + plot_w,
        bottom + 44.0,
        escape(dependent),
        fmt_short(plane.z_min),
        fmt_short(plane.z_max)
    );
    let _ = writeln!(s, "</g>");
    s.push_str("</svg>\n");
    s
}

fn fmt_short(v: f64) -> String {
    format!("{v:.4}")
}

/// Pixels per grid node in [`plane_png`].
pub const PNG_SCALE: usize = 4;

/// Heatmap as an RGB PNG, bilinearly resampled with contour pixels drawn
/// wherever neighbouring pixels fall in different contour bands.
pub fn plane_png(plane: &PlanningPlane) -> Result<Vec<u8>, png::EncodingError> {
    let (nx, ny) = (plane.nx, plane.ny);
    let (w, h) = (nx * PNG_SCALE, ny * PNG_SCALE);
    let sample = |px: usize, py: usize| {
        // Image row 0 is the top, i.e. the largest iy.
        let fx = ((px as f64 + 0.5) / PNG_SCALE as f64 - 0.5).clamp(0.0, (nx - 1) as f64);
        let fy = ((h - 1 - py) as f64 + 0.5) / PNG_SCALE as f64 - 0.5;
        let fy = fy.clamp(0.0, (ny - 1) as f64);
        let (ix, iy) = ((fx.floor() as usize).min(nx.saturating_sub(2)), (fy.floor() as usize).min(ny.saturating_sub(2)));
        let (tx, ty) = (fx - ix as f64, fy - iy as f64);
        let v = |i: usize, j: usize| plane.value(i.min(nx - 1), j.min(ny - 1));
        let a = v(ix, iy) * (1.0 - tx) + v(ix + 1, iy) * tx;
        let b = v(ix, iy + 1) * (1.0 - tx) + v(ix + 1, iy + 1) * tx;
        a * (1.0 - ty) + b * ty
    };
    let values: Vec<f64> = (0..h).flat_map(|py| (0..w).map(move |px| (px, py))).map(|(px, py)| sample(px, py)).collect();
    let levels = contour_levels(plane.z_min, plane.z_max, CONTOUR_LEVELS);
    let band = |z: f64| levels.partition_point(|&l| l < z);
    let mut pixels = Vec::with_capacity(w * h * 3);
    for py in 0..h {
        for px in 0..w {
            let z = values[py * w + px];
            let b = band(z);
            let edge = (px + 1 < w && band(values[py * w + px + 1]) != b) || (py + 1 < h && band(values[(py + 1) * w + px]) != b);
            let c = if edge { CONTOUR_COLOR } else { ramp(normalized(plane, z)) };
            pixels.extend_from_slice(&c);
        }
    }
    let mut out = Vec::new();
    {
        let mut encoder = png::Encoder::new(&mut out, w as u32, h as u32);
        encoder.set_color(png::ColorType::Rgb);
        encoder.set_depth(png::BitDepth::Eight);
        let mut writer = encoder.write_header()?;
        writer.write_image_data(&pixels)?;
    }
    Ok(out)
}
