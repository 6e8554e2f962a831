//! Minimal SVG envelope plots of a primitive's learned model.

use std::fmt::Write as _;

use crate::lattice::MotionPrimitive;
use crate::model::{BaselineMargins, PrimitiveExecutionModel};
use crate::special::chi2_quantile;

const PANEL_W: f64 = 360.0;
const PANEL_H: f64 = 220.0;
const PAD: f64 = 36.0;

struct Frame {
    x0: f64,
    t_max: f64,
    lo: f64,
    hi: f64,
}

impl Frame {
    fn x(&self, t: f64) -> f64 {
        self.x0 + PAD + (PANEL_W - 2.0 * PAD) * t / self.t_max
    }

    fn y(&self, v: f64) -> f64 {
        PANEL_H - PAD - (PANEL_H - 2.0 * PAD) * (v - self.lo) / (self.hi - self.lo)
    }
}

fn polyline(out: &mut String, f: &Frame, pts: &[(f64, f64)], style: &str) {
    let coords: Vec<String> = pts.iter().map(|&(t, v)| format!("{:.2},{:.2}", f.x(t), f.y(v))).collect();
    let _ = writeln!(out, r#"<polyline fill="none" {style} points="{}"/>"#, coords.join(" "));
}

fn band(out: &mut String, f: &Frame, upper: &[(f64, f64)], lower: &[(f64, f64)], style: &str) {
    let coords: Vec<String> = upper
        .iter()
        .chain(lower.iter().rev())
        .map(|&(t, v)| format!("{:.2},{:.2}", f.x(t), f.y(v)))
        .collect();
    let _ = writeln!(out, r#"<polygon {style} points="{}"/>"#, coords.join(" "));
}

/// Three panels (x, y, z position against time) showing the reference, the
/// model mean with its per-axis probability-`p` band, and the time-varying
/// and global baseline bands around the reference.
pub fn envelope_svg(prim: &MotionPrimitive, model: &PrimitiveExecutionModel, baselines: &BaselineMargins, p: f64) -> String {
    let q = chi2_quantile(p, 1).sqrt();
    let grid = model.grid();
    let t_max = model.duration().max(f64::MIN_POSITIVE);
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" font-family="sans-serif" font-size="11">"#,
        3.0 * PANEL_W,
        PANEL_H
    );
    for (d, axis) in ["x", "y", "z"].into_iter().enumerate() {
        let reference: Vec<(f64, f64)> = grid.iter().map(|&t| (t, prim.state_at(t).position[d])).collect();
        let stats: Vec<(f64, f64, f64)> = grid
            .iter()
            .enumerate()
            .map(|(k, &t)| {
                let (mu, var) = model.at_index(k);
                (t, mu[d], var[d].sqrt() * q)
            })
            .collect();
        let tv: Vec<(f64, f64)> = grid
            .iter()
            .map(|&t| (t, baselines.time_varying_at(prim.id, t).map_or(0.0, |v| v[d].sqrt() * q)))
            .collect();
        let global = baselines.global[d].sqrt() * q;

        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for (k, &(_, r)) in reference.iter().enumerate() {
            let (_, m, w) = stats[k];
            lo = lo.min(r - global).min(r - tv[k].1).min(m - w);
            hi = hi.max(r + global).max(r + tv[k].1).max(m + w);
        }
        if hi - lo < 1e-9 {
            lo -= 0.5;
            hi += 0.5;
        }
        let f = Frame { x0: d as f64 * PANEL_W, t_max, lo, hi };

        let _ = writeln!(
            out,
            r##"<rect x="{:.2}" y="{PAD}" width="{:.2}" height="{:.2}" fill="none" stroke="#999"/>"##,
            f.x(0.0),
            PANEL_W - 2.0 * PAD,
            PANEL_H - 2.0 * PAD
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}">primitive {} {axis} [{:.3}, {:.3}] m</text>"#,
            f.x(0.0),
            PAD - 8.0,
            prim.id,
            lo,
            hi
        );
        let up = |off: &dyn Fn(usize) -> f64| -> Vec<(f64, f64)> {
            reference.iter().enumerate().map(|(k, &(t, r))| (t, r + off(k))).collect()
        };
        band(&mut out, &f, &up(&|_| global), &up(&|_| -global), r##"fill="#ccc" fill-opacity="0.35""##);
        band(&mut out, &f, &up(&|k| tv[k].1), &up(&|k| -tv[k].1), r##"fill="#f4a261" fill-opacity="0.35""##);
        let upper: Vec<(f64, f64)> = stats.iter().map(|&(t, m, w)| (t, m + w)).collect();
        let lower: Vec<(f64, f64)> = stats.iter().map(|&(t, m, w)| (t, m - w)).collect();
        band(&mut out, &f, &upper, &lower, r##"fill="#2a9d8f" fill-opacity="0.45""##);
        polyline(&mut out, &f, &reference, r##"stroke="#000" stroke-dasharray="4 3""##);
        let mean: Vec<(f64, f64)> = stats.iter().map(|&(t, m, _)| (t, m)).collect();
        polyline(&mut out, &f, &mean, r##"stroke="#264653" stroke-width="1.5""##);
    }
    out.push_str("</svg>\n");
    out
}
