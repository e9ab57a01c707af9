use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::interp::{JsMatrix, PhonemeHistogram};
use crate::error::{Error, Result};

fn write(path: PathBuf, text: String) -> Result<PathBuf> {
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Grey level for `v` in `[0, 1]`: 0 is white, 1 is black.
fn grey(v: f64) -> String {
    let g = (255.0 * (1.0 - v.clamp(0.0, 1.0))).round() as u8;
    format!("rgb({g},{g},{g})")
}

pub fn heatmap_svg(matrix: &JsMatrix, names: &[String]) -> String {
    let p = matrix.size();
    let (cell, margin) = (24usize, 60usize);
    let side = margin + p * cell + 10;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{side}" height="{side}" viewBox="0 0 {side} {side}" font-family="sans-serif" font-size="10">"#
    );
    let _ = writeln!(s, r#"<rect width="{side}" height="{side}" fill="white"/>"#);
    for i in 0..p {
        let pos = margin + i * cell + cell / 2;
        let _ = writeln!(s, r#"<text x="{}" y="{pos}" text-anchor="end" dominant-baseline="middle">{}</text>"#, margin - 4, escape(&names[i]));
        let _ = writeln!(
            s,
            r#"<text x="{pos}" y="{}" text-anchor="start" transform="rotate(-90 {pos} {})">{}</text>"#,
            margin - 4,
            margin - 4,
            escape(&names[i])
        );
        for j in 0..p {
            let v = matrix.get(i, j);
            let _ = writeln!(
                s,
                r#"<rect x="{}" y="{}" width="{cell}" height="{cell}" fill="{}"><title>{} / {}: {:.4}</title></rect>"#,
                margin + j * cell,
                margin + i * cell,
                grey(v),
                escape(&names[i]),
                escape(&names[j]),
                v
            );
        }
    }
    s.push_str("</svg>\n");
    s
}

pub fn histogram_svg(h: &PhonemeHistogram, name: &str) -> String {
    let m = h.pdf.len();
    let bar = (480 / m.max(1)).max(2);
    let (w, height, base) = (40 + m * bar + 10, 240usize, 210usize);
    let peak = h.pdf.iter().copied().fold(0.0, f64::max).max(1e-12);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{height}" viewBox="0 0 {w} {height}" font-family="sans-serif" font-size="10">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{height}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="40" y="14">{} (n = {})</text>"#, escape(name), h.total());
    for (k, &p) in h.pdf.iter().enumerate() {
        let len = (p / peak * 180.0).round() as usize;
        let _ = writeln!(
            s,
            r#"<rect x="{}" y="{}" width="{}" height="{len}" fill="black"><title>token {k}: {p:.4}</title></rect>"#,
            40 + k * bar,
            base - len,
            bar.saturating_sub(1).max(1)
        );
    }
    let _ = writeln!(s, r#"<line x1="40" y1="{base}" x2="{}" y2="{base}" stroke="black"/>"#, 40 + m * bar);
    let _ = writeln!(s, r#"<text x="40" y="{}">token</text>"#, base + 16);
    s.push_str("</svg>\n");
    s
}

/// Writes `hist_<name>.csv`, `hist_<name>.svg`, `jsd_matrix.csv` and `jsd_heatmap.svg`.
///
/// `names[i]` labels `histograms[i]`. Returns the written paths.
pub fn emit_plots(histograms: &[PhonemeHistogram], matrix: &JsMatrix, names: &[String], out: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut written = Vec::new();
    for (h, name) in histograms.iter().zip(names) {
        let mut csv = String::from("token,count,probability\n");
        for (k, (c, p)) in h.counts.iter().zip(&h.pdf).enumerate() {
            let _ = writeln!(csv, "{k},{c},{p}");
        }
        written.push(write(out.join(format!("hist_{name}.csv")), csv)?);
        written.push(write(out.join(format!("hist_{name}.svg")), histogram_svg(h, name))?);
    }
    let mut csv = String::from("class");
    for n in names {
        let _ = write!(csv, ",{n}");
    }
    csv.push('\n');
    for (i, n) in names.iter().enumerate() {
        csv.push_str(n);
        for j in 0..matrix.size() {
            let _ = write!(csv, ",{}", matrix.get(i, j));
        }
        csv.push('\n');
    }
    written.push(write(out.join("jsd_matrix.csv"), csv)?);
    written.push(write(out.join("jsd_heatmap.svg"), heatmap_svg(matrix, names))?);
    Ok(written)
}
