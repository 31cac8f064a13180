//! Minimal hand-rolled SVG output: NMSE line charts for sweeps and a
//! magnitude heatmap for sparsity inspection. No external renderer needed.

use crate::sim::{AggregateRecord, EstimatorKind, ScenarioConfig};

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 480.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 150.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 60.0;

const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

fn lin_map(v: f64, lo: f64, hi: f64, out_lo: f64, out_hi: f64) -> f64 {
    if hi == lo {
        return (out_lo + out_hi) / 2.0;
    }
    out_lo + (v - lo) / (hi - lo) * (out_hi - out_lo)
}

/// NMSE-vs-sweep-axis line chart. The x axis is SNR when it varies across
/// configs, otherwise the pilot count.
pub fn nmse_chart(
    configs: &[ScenarioConfig],
    estimators: &[EstimatorKind],
    aggregates: &[AggregateRecord],
) -> String {
    let snr_varies = configs.iter().any(|c| c.snr_db != configs[0].snr_db);
    let x_label = if snr_varies { "SNR (dB)" } else { "pilot length T" };
    let x_of = |a: &AggregateRecord| if snr_varies { a.snr_db } else { a.t_samples as f64 };

    let xs: Vec<f64> = aggregates.iter().map(x_of).collect();
    let ys: Vec<f64> = aggregates.iter().map(|a| a.mean_nmse_db).collect();
    let (x_lo, x_hi) = bounds(&xs);
    let (mut y_lo, mut y_hi) = bounds(&ys);
    let pad = ((y_hi - y_lo) * 0.08).max(1.0);
    y_lo -= pad;
    y_hi += pad;

    let px = |v: f64| lin_map(v, x_lo, x_hi, MARGIN_L, WIDTH - MARGIN_R);
    let py = |v: f64| lin_map(v, y_lo, y_hi, HEIGHT - MARGIN_B, MARGIN_T);

    let mut s = svg_open();
    s.push_str(&axes(x_lo, x_hi, y_lo, y_hi, x_label, "NMSE (dB)", &px, &py));

    for (i, est) in estimators.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let mut pts: Vec<(f64, f64)> = aggregates
            .iter()
            .filter(|a| a.estimator_name == est.name())
            .map(|a| (x_of(a), a.mean_nmse_db))
            .collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        if pts.is_empty() {
            continue;
        }
        let path: Vec<String> = pts.iter().map(|(x, y)| format!("{:.1},{:.1}", px(*x), py(*y))).collect();
        s.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"2\" points=\"{}\"/>\n",
            path.join(" ")
        ));
        for (x, y) in &pts {
            s.push_str(&format!(
                "<circle cx=\"{:.1}\" cy=\"{:.1}\" r=\"3.5\" fill=\"{color}\"/>\n",
                px(*x),
                py(*y)
            ));
        }
        // Legend entry.
        let ly = MARGIN_T + 18.0 * i as f64;
        s.push_str(&format!(
            "<line x1=\"{0:.1}\" y1=\"{ly:.1}\" x2=\"{1:.1}\" y2=\"{ly:.1}\" stroke=\"{color}\" stroke-width=\"2\"/>\n",
            WIDTH - MARGIN_R + 10.0,
            WIDTH - MARGIN_R + 34.0
        ));
        s.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"12\" font-family=\"sans-serif\">{}</text>\n",
            WIDTH - MARGIN_R + 40.0,
            ly + 4.0,
            est.name()
        ));
    }
    s.push_str("</svg>\n");
    s
}

/// Grayscale heatmap of a magnitude grid (row-major `nx` x `ny`, value per
/// cell already >= 0). Used by the sparsity inspector.
pub fn magnitude_heatmap(values: &[f64], nx: usize, ny: usize, title: &str) -> String {
    assert_eq!(values.len(), nx * ny, "grid size mismatch");
    let max = values.iter().cloned().fold(0.0f64, f64::max).max(1e-300);
    let cell = (560.0 / nx.max(ny) as f64).min(40.0);
    let w = MARGIN_L + cell * nx as f64 + 40.0;
    let h = MARGIN_T + cell * ny as f64 + 60.0;
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w:.0}\" height=\"{h:.0}\" viewBox=\"0 0 {w:.0} {h:.0}\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    );
    s.push_str(&format!(
        "<text x=\"{:.1}\" y=\"24\" font-size=\"14\" font-family=\"sans-serif\">{}</text>\n",
        MARGIN_L, title
    ));
    for j in 0..ny {
        for i in 0..nx {
            let v = values[i + j * nx] / max;
            // dB-ish compression so weak blocks stay visible.
            let t = (1.0 + (v.max(1e-6)).log10() / 6.0).clamp(0.0, 1.0);
            let shade = (255.0 * (1.0 - t)) as u8;
            s.push_str(&format!(
                "<rect x=\"{:.1}\" y=\"{:.1}\" width=\"{:.1}\" height=\"{:.1}\" fill=\"rgb({shade},{shade},{shade})\"/>\n",
                MARGIN_L + cell * i as f64,
                MARGIN_T + cell * j as f64,
                cell,
                cell
            ));
        }
    }
    s.push_str(&format!(
        "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"12\" font-family=\"sans-serif\">horizontal index</text>\n",
        MARGIN_L,
        MARGIN_T + cell * ny as f64 + 30.0
    ));
    s.push_str("</svg>\n");
    s
}

fn bounds(vals: &[f64]) -> (f64, f64) {
    let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if lo.is_finite() && hi.is_finite() {
        (lo, hi)
    } else {
        (0.0, 1.0)
    }
}

fn svg_open() -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH:.0}\" height=\"{HEIGHT:.0}\" viewBox=\"0 0 {WIDTH:.0} {HEIGHT:.0}\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    )
}

fn axes(
    x_lo: f64,
    x_hi: f64,
    y_lo: f64,
    y_hi: f64,
    x_label: &str,
    y_label: &str,
    px: &dyn Fn(f64) -> f64,
    py: &dyn Fn(f64) -> f64,
) -> String {
    let mut s = String::new();
    let x0 = MARGIN_L;
    let x1 = WIDTH - MARGIN_R;
    let y0 = HEIGHT - MARGIN_B;
    let y1 = MARGIN_T;
    s.push_str(&format!(
        "<line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x1}\" y2=\"{y0}\" stroke=\"black\"/>\n<line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x0}\" y2=\"{y1}\" stroke=\"black\"/>\n"
    ));
    for k in 0..=5 {
        let xv = x_lo + (x_hi - x_lo) * k as f64 / 5.0;
        let yv = y_lo + (y_hi - y_lo) * k as f64 / 5.0;
        s.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"11\" font-family=\"sans-serif\" text-anchor=\"middle\">{:.1}</text>\n",
            px(xv),
            y0 + 18.0,
            xv
        ));
        s.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"11\" font-family=\"sans-serif\" text-anchor=\"end\">{:.1}</text>\n",
            x0 - 8.0,
            py(yv) + 4.0,
            yv
        ));
        s.push_str(&format!(
            "<line x1=\"{0:.1}\" y1=\"{y1}\" x2=\"{0:.1}\" y2=\"{y0}\" stroke=\"#eeeeee\"/>\n",
            px(xv)
        ));
        s.push_str(&format!(
            "<line x1=\"{x0}\" y1=\"{0:.1}\" x2=\"{x1}\" y2=\"{0:.1}\" stroke=\"#eeeeee\"/>\n",
            py(yv)
        ));
    }
    s.push_str(&format!(
        "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"13\" font-family=\"sans-serif\" text-anchor=\"middle\">{x_label}</text>\n",
        (x0 + x1) / 2.0,
        HEIGHT - 16.0
    ));
    s.push_str(&format!(
        "<text x=\"18\" y=\"{:.1}\" font-size=\"13\" font-family=\"sans-serif\" text-anchor=\"middle\" transform=\"rotate(-90 18 {0:.1})\">{y_label}</text>\n",
        (y0 + y1) / 2.0
    ));
    s
}
