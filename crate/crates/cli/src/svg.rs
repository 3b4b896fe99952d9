use std::fmt::Write as _;

use stereoscale::evaluation::Trajectory;

const SIZE: f64 = 600.0;
const MARGIN: f64 = 40.0;

/// Round length near `target`: 1, 2 or 5 times a power of ten.
fn nice_length(target: f64) -> f64 {
    if !(target > 0.0) {
        return 1.0;
    }
    let p = 10f64.powf(target.log10().floor());
    [5.0, 2.0, 1.0]
        .into_iter()
        .map(|m| m * p)
        .find(|&l| l <= target)
        .unwrap_or(p)
}

/// Top-down view (x right, z up) of estimate and reference, with a scale bar.
pub fn trajectory_plot(estimate: &Trajectory, reference: &Trajectory) -> String {
    let pts = |t: &Trajectory| -> Vec<(f64, f64)> {
        t.positions().iter().map(|p| (p.x, p.z)).collect()
    };
    let (est, gt) = (pts(estimate), pts(reference));
    let all = est.iter().chain(&gt);
    let (mut x0, mut x1, mut z0, mut z1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for &(x, z) in all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        z0 = z0.min(z);
        z1 = z1.max(z);
    }
    let extent = (x1 - x0).max(z1 - z0).max(1e-9);
    let s = (SIZE - 2.0 * MARGIN) / extent;
    let (cx, cz) = ((x0 + x1) / 2.0, (z0 + z1) / 2.0);
    let map = |(x, z): (f64, f64)| (SIZE / 2.0 + (x - cx) * s, SIZE / 2.0 - (z - cz) * s);
    let polyline = |out: &mut String, p: &[(f64, f64)], class: &str, colour: &str| {
        let coords: Vec<String> = p
            .iter()
            .map(|&q| {
                let (u, v) = map(q);
                format!("{u:.3},{v:.3}")
            })
            .collect();
        writeln!(
            out,
            r#"  <polyline class="{class}" fill="none" stroke="{colour}" stroke-width="2" points="{}"/>"#,
            coords.join(" ")
        )
        .unwrap();
    };

    let mut out = String::new();
    writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#
    )
    .unwrap();
    writeln!(out, r#"  <rect width="100%" height="100%" fill="white"/>"#).unwrap();
    polyline(&mut out, &gt, "reference", "black");
    polyline(&mut out, &est, "estimate", "red");

    let bar = nice_length(extent / 4.0);
    let len_px = bar * s;
    let (bx, by) = (MARGIN, SIZE - MARGIN / 2.0);
    writeln!(
        out,
        r#"  <g class="scale-bar"><line x1="{bx:.3}" y1="{by:.3}" x2="{:.3}" y2="{by:.3}" stroke="black" stroke-width="3"/><text x="{bx:.3}" y="{:.3}" font-size="12">{bar} m</text></g>"#,
        bx + len_px,
        by - 6.0
    )
    .unwrap();
    writeln!(
        out,
        r#"  <text x="{:.3}" y="20" font-size="12" fill="black">reference</text><text x="{:.3}" y="36" font-size="12" fill="red">estimate</text>"#,
        SIZE - 110.0,
        SIZE - 110.0
    )
    .unwrap();
    out.push_str("</svg>\n");
    out
}
